"""CSP-style process terms, their derivation from a goal model, and text I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

from ..errors import InputError, UndefinedProcess
from ..goalmodel import GOAL_KINDS, NodeKind, RelationKind, TaggedGoalModel

TAU = "tau"
_TAU_RE = re.compile(r"^tau\d*$")


def is_tau(label: str) -> bool:
    return bool(_TAU_RE.match(label))


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Prefix:
    event: str
    next: "Term"
    origin: str | None = None  # goal-model node that produced the event


@dataclass(frozen=True)
class SeqComp:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Parallel:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Choice:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Call:
    name: str


@dataclass(frozen=True)
class ChanSend:
    channel: str
    value: str
    next: "Term"


@dataclass(frozen=True)
class ChanRecv:
    channel: str
    value: str
    next: "Term"


Term = Union[Stop, Skip, Prefix, SeqComp, Parallel, Choice, Call, ChanSend, ChanRecv]


def seq(*terms: Term) -> Term:
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = SeqComp(t, out)
    return out


def choice(*terms: Term) -> Term:
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Choice(t, out)
    return out


def parallel(*terms: Term) -> Term:
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Parallel(t, out)
    return out


@dataclass
class ProcessDefs:
    """Named process definitions in declaration order."""

    defs: dict[str, Term]
    root: str
    _alpha: dict[str, frozenset[str]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.root not in self.defs:
            raise UndefinedProcess(self.root)
        for body in self.defs.values():
            for name in _calls(body):
                if name not in self.defs:
                    raise UndefinedProcess(name)

    def alphabet(self, name: str) -> frozenset[str]:
        """Events (including channel events) syntactically reachable from ``name``."""
        if name not in self._alpha:
            seen: set[str] = set()
            events: set[str] = set()
            stack = [name]
            while stack:
                n = stack.pop()
                if n in seen:
                    continue
                seen.add(n)
                events |= _events(self.defs[n])
                stack.extend(_calls(self.defs[n]))
            self._alpha[name] = frozenset(events)
        return self._alpha[name]

    @cached_property
    def channels(self) -> frozenset[str]:
        out: set[str] = set()
        for body in self.defs.values():
            out |= _channels(body)
        return frozenset(out)


def _subterms(t: Term):
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, (Prefix, ChanSend, ChanRecv)):
            stack.append(cur.next)
        elif isinstance(cur, (SeqComp, Parallel, Choice)):
            stack.append(cur.left)
            stack.append(cur.right)


def _calls(t: Term) -> set[str]:
    return {s.name for s in _subterms(t) if isinstance(s, Call)}


def _events(t: Term) -> set[str]:
    out: set[str] = set()
    for s in _subterms(t):
        if isinstance(s, Prefix):
            out.add(s.event)
        elif isinstance(s, (ChanSend, ChanRecv)):
            out.add(f"{s.channel}.{s.value}")
    return out


def _channels(t: Term) -> set[str]:
    return {s.channel for s in _subterms(t) if isinstance(s, (ChanSend, ChanRecv))}


# ---------------------------------------------------------------------------
# derivation from a goal model

def derive_process_defs(model: TaggedGoalModel) -> ProcessDefs:
    """Top-down DFS over the goal tree; each node's process jumps to its continuation.

    AND children run in sequence (or in parallel with the ``parallel``
    annotation), OR children and alternative means become a choice, leaf tasks
    become event prefixes and adaptation tasks a monitor/analyze/plan prefix
    chain followed by their execute options.
    """
    nodes = model.nodes
    defs: dict[str, Term] = {}
    senders: dict[str, str] = {}
    receivers: dict[str, str] = {}
    for rel in model.relations:
        if rel.kind is RelationKind.DEPENDENCY:
            chan = rel.flags().get("chan")
            if chan:
                receivers[rel.source] = chan
                for t in rel.targets:
                    senders[t] = chan

    def leaf(nid: str, k: Term, self_name: str | None) -> Term:
        node = nodes[nid]
        after: Term = k
        if node.repeat:
            if self_name is None:
                raise InputError(f"repeat task '{nid}' needs its own process")
            after = Choice(Call(self_name), k)
        if nid in senders:
            after = ChanSend(senders[nid], "0", after)
        term: Term = Prefix(node.event, after, nid)
        if nid in receivers:
            term = ChanRecv(receivers[nid], "0", term)
        return term

    def define(nid: str, k: Term, tau: bool = False) -> None:
        if nid in defs:
            raise InputError(f"node '{nid}' would need two process definitions")
        defs[nid] = Stop()  # reserve the slot so parents precede children
        body = body_of(nid, k, nid)
        defs[nid] = Prefix(TAU, body) if tau else body

    def body_of(nid: str, k: Term, self_name: str | None) -> Term:
        node = nodes[nid]
        rel = model.tree_relation(nid)
        if rel is None:
            if node.kind in GOAL_KINDS or node.kind is NodeKind.SOFTGOAL:
                return k
            return leaf(nid, k, self_name)
        if node.kind is NodeKind.ADAPTATION_TASK:
            return at_body(nid, k)
        tau = rel.has("tau")
        kids = rel.targets
        if rel.kind is RelationKind.DECOMP_AND:
            if rel.has("parallel"):
                for c in kids:
                    define(c, Skip(), tau)
                par = parallel(*(Call(c) for c in kids))
                return par if isinstance(k, Skip) else SeqComp(par, k)
            for i, c in enumerate(kids):
                define(c, Call(kids[i + 1]) if i + 1 < len(kids) else k, tau)
            return seq(*(Call(c) for c in kids))
        # DecompOr / MeansEnds
        if len(kids) == 1:
            inner = body_of(kids[0], k, self_name)
            return Prefix(TAU, inner) if tau else inner
        for c in kids:
            define(c, k, tau)
        return choice(*(Call(c) for c in kids))

    def at_body(nid: str, k: Term) -> Term:
        node = nodes[nid]
        kids = model.children(nid)
        mape = [c for c in kids if nodes[c].kind in (NodeKind.MONITOR_TASK, NodeKind.ANALYZE_TASK, NodeKind.PLAN_TASK)]
        executes = [c for c in kids if nodes[c].kind is NodeKind.EXECUTE_TASK]
        if len(executes) >= 2:
            for e in executes:
                define(e, k)
            tail: Term = choice(*(Call(e) for e in executes))
        elif len(executes) == 1:
            define(executes[0], k)
            tail = Call(executes[0])
        elif node.heals:
            tail = Choice(k, Call(node.heals))
        else:
            tail = k
        for m in reversed(mape):
            tail = Prefix(nodes[m].event, tail, m)
        return tail

    k_root: Term = Call(model.restart) if model.restart else Stop()
    define(model.root, k_root)
    if model.restart and model.restart not in defs:
        raise UndefinedProcess(model.restart)
    return ProcessDefs(defs, model.root)


# ---------------------------------------------------------------------------
# text format

def _fmt(t: Term) -> str:
    if isinstance(t, Stop):
        return "Stop"
    if isinstance(t, Skip):
        return "Skip"
    if isinstance(t, Call):
        return t.name
    if isinstance(t, Prefix):
        return f"{t.event}->{_atom(t.next)}"
    if isinstance(t, ChanSend):
        return f"{t.channel}!{t.value}->{_atom(t.next)}"
    if isinstance(t, ChanRecv):
        return f"{t.channel}?{t.value}->{_atom(t.next)}"
    if isinstance(t, Choice):
        return "[]".join(_operand(x, (SeqComp, Parallel)) for x in _flatten(t, Choice))
    if isinstance(t, SeqComp):
        return ";".join(_operand(x, (Choice, Parallel)) for x in _flatten(t, SeqComp))
    if isinstance(t, Parallel):
        return "||".join(_operand(x, (Choice, SeqComp)) for x in _flatten(t, Parallel))
    raise TypeError(t)  # pragma: no cover


def _atom(t: Term) -> str:
    if isinstance(t, (Stop, Skip, Call, Prefix, ChanSend, ChanRecv)):
        return _fmt(t)
    return f"({_fmt(t)})"


def _operand(t: Term, paren_types: tuple) -> str:
    return f"({_fmt(t)})" if isinstance(t, paren_types) else _fmt(t)


def _flatten(t: Term, kind: type) -> list[Term]:
    if isinstance(t, kind):
        return _flatten(t.left, kind) + _flatten(t.right, kind)
    return [t]


def format_term(t: Term) -> str:
    return _fmt(t)


def format_csp(defs: ProcessDefs) -> str:
    """One ``Name = term;`` line per definition, in declaration order."""
    return "".join(f"{name} = {_fmt(body)};\n" for name, body in defs.defs.items())


_TOKEN_RE = re.compile(r"\s*(->|\[\]|\|\||[;()!?=]|[A-Za-z_][A-Za-z0-9_.]*|\d+)")


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise InputError(f"unexpected character in process text: {text[pos:pos + 10]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.i = 0

    def peek(self, off: int = 0) -> str | None:
        j = self.i + off
        return self.toks[j] if j < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise InputError(f"expected {expected or 'token'}, got {tok!r}")
        self.i += 1
        return tok

    def par(self) -> Term:
        terms = [self.choice()]
        while self.peek() == "||":
            self.take()
            terms.append(self.choice())
        return parallel(*terms)

    def choice(self) -> Term:
        terms = [self.seq()]
        while self.peek() == "[]":
            self.take()
            terms.append(self.seq())
        return choice(*terms)

    def seq(self) -> Term:
        terms = [self.prefix()]
        while self.peek() == ";" and self.peek(1) is not None:
            self.take()
            terms.append(self.prefix())
        return seq(*terms)

    def prefix(self) -> Term:
        tok = self.peek()
        nxt = self.peek(1)
        if tok is not None and tok not in ("(", ")") and nxt == "->":
            self.take()
            self.take("->")
            return Prefix(tok, self.prefix())
        if tok is not None and nxt in ("!", "?") and self.peek(3) == "->":
            chan = self.take()
            op = self.take()
            val = self.take()
            self.take("->")
            body = self.prefix()
            return ChanSend(chan, val, body) if op == "!" else ChanRecv(chan, val, body)
        return self.primary()

    def primary(self) -> Term:
        tok = self.take()
        if tok == "(":
            inner = self.par()
            self.take(")")
            return inner
        if tok == "Stop":
            return Stop()
        if tok == "Skip":
            return Skip()
        if not re.match(r"[A-Za-z_]", tok):
            raise InputError(f"unexpected token {tok!r}")
        return Call(tok)


def parse_csp(text: str, root: str | None = None) -> ProcessDefs:
    """Parse ``Name = term;`` definitions (``//`` comments, continuation lines allowed)."""
    chunks: list[tuple[str, str]] = []
    head = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=(?!=)(.*)$")
    for raw in text.splitlines():
        line = raw.split("//", 1)[0]
        if not line.strip():
            continue
        m = head.match(line)
        if m:
            chunks.append((m.group(1), m.group(2)))
        elif chunks:
            name, body = chunks[-1]
            chunks[-1] = (name, body + " " + line)
        else:
            raise InputError(f"process text does not start with a definition: {line!r}")
    defs: dict[str, Term] = {}
    for name, body in chunks:
        body = body.strip()
        if body.endswith(";"):
            body = body[:-1]
        p = _Parser(_tokenize(body))
        term = p.par()
        if p.peek() is not None:
            raise InputError(f"trailing tokens in definition of {name}: {p.toks[p.i:]}")
        if name in defs:
            raise InputError(f"process {name} defined twice")
        defs[name] = term
    if not defs:
        raise InputError("no process definitions")
    return ProcessDefs(defs, root or next(iter(defs)))
