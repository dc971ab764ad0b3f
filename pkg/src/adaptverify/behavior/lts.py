"""Labeled transition systems obtained by expanding process terms.

States are normalized process terms. ``Call`` is unfolded at the top level,
``P;Q`` collapses to ``P`` when ``P`` can never terminate, and ``Skip;Q``
continues silently as ``Q``. Channel rendezvous inside a parallel composition
produces a single event ``chan.value``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

from ..errors import StateExplosion, UnboundChannel, UnguardedRecursion
from .process import (
    Call, ChanRecv, ChanSend, Choice, Parallel, Prefix, ProcessDefs, SeqComp, Skip, Stop, Term,
    _channels, _subterms, format_term, is_tau,
)

DEFAULT_STATE_CAP = 1_000_000


@dataclass(frozen=True)
class Transition:
    src: int
    label: str
    dst: int
    origin: str | None = None


@dataclass(frozen=True)
class Lts:
    states: tuple[Term, ...]
    initial: int
    transitions: tuple[Transition, ...]
    terminated: frozenset[int] = frozenset()
    _out: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @cached_property
    def actions(self) -> frozenset[str]:
        return frozenset(t.label for t in self.transitions)

    def out(self, s: int) -> tuple[Transition, ...]:
        return self._out[s]

    @staticmethod
    def build(states, initial, transitions, terminated=frozenset()) -> "Lts":
        out: list[list[Transition]] = [[] for _ in states]
        for t in transitions:
            out[t.src].append(t)
        return Lts(tuple(states), initial, tuple(transitions), frozenset(terminated),
                   tuple(tuple(o) for o in out))

    def state_of(self, term: Term) -> int | None:
        try:
            return self.states.index(term)
        except ValueError:
            return None


class _Semantics:
    def __init__(self, defs: ProcessDefs):
        self.defs = defs.defs
        self._ct_names = self._termination_fixpoint()
        self._ct_cache: dict[Term, bool] = {}
        self._chan_cache: dict[Term, frozenset[str]] = {}
        self._bound_cache: dict[Term, frozenset[str]] = {}

    # -- termination analysis --------------------------------------------
    def _termination_fixpoint(self) -> dict[str, bool]:
        ct = {n: False for n in self.defs}
        changed = True
        while changed:
            changed = False
            for n, body in self.defs.items():
                if not ct[n] and self._ct(body, ct):
                    ct[n] = True
                    changed = True
        return ct

    def _ct(self, t: Term, names: dict[str, bool]) -> bool:
        if isinstance(t, Skip):
            return True
        if isinstance(t, Stop):
            return False
        if isinstance(t, (Prefix, ChanSend, ChanRecv)):
            return self._ct(t.next, names)
        if isinstance(t, Choice):
            return self._ct(t.left, names) or self._ct(t.right, names)
        if isinstance(t, (SeqComp, Parallel)):
            return self._ct(t.left, names) and self._ct(t.right, names)
        if isinstance(t, Call):
            return names[t.name]
        raise TypeError(t)  # pragma: no cover

    def can_terminate(self, t: Term) -> bool:
        r = self._ct_cache.get(t)
        if r is None:
            r = self._ct(t, self._ct_names)
            self._ct_cache[t] = r
        return r

    # -- channels ---------------------------------------------------------
    def chans(self, t: Term) -> frozenset[str]:
        r = self._chan_cache.get(t)
        if r is None:
            seen: set[str] = set()
            out: set[str] = set()
            stack = [t]
            while stack:
                cur = stack.pop()
                out |= _channels(cur)
                for s in _subterms(cur):
                    if isinstance(s, Call) and s.name not in seen:
                        seen.add(s.name)
                        stack.append(self.defs[s.name])
            r = frozenset(out)
            self._chan_cache[t] = r
        return r

    def bound(self, p: Parallel) -> frozenset[str]:
        r = self._bound_cache.get(p)
        if r is None:
            r = self.chans(p.left) & self.chans(p.right)
            self._bound_cache[p] = r
        return r

    # -- normalization ----------------------------------------------------
    def norm(self, t: Term) -> Term:
        visiting: list[str] = []
        while True:
            if isinstance(t, Call):
                if t.name in visiting:
                    raise UnguardedRecursion(t.name)
                visiting.append(t.name)
                t = self.defs[t.name]
                continue
            if isinstance(t, SeqComp):
                left = self.norm(t.left)
                if isinstance(left, Skip):
                    t = t.right
                    continue
                if not self.can_terminate(left):
                    return left
                return SeqComp(left, t.right)
            if isinstance(t, Parallel):
                left, right = self.norm(t.left), self.norm(t.right)
                if isinstance(left, Skip) and isinstance(right, Skip):
                    return Skip()
                return Parallel(left, right)
            return t

    # -- transitions ------------------------------------------------------
    def steps(self, t: Term) -> list[tuple[str, str | None, Term, tuple | None]]:
        """(label, origin, successor, comm) where comm = (kind, chan, value) for open offers."""
        t = self.norm(t)
        if isinstance(t, (Stop, Skip)):
            return []
        if isinstance(t, Prefix):
            return [(t.event, t.origin, t.next, None)]
        if isinstance(t, ChanSend):
            return [(f"{t.channel}!{t.value}", None, t.next, ("!", t.channel, t.value))]
        if isinstance(t, ChanRecv):
            return [(f"{t.channel}?{t.value}", None, t.next, ("?", t.channel, t.value))]
        if isinstance(t, Choice):
            return self.steps(t.left) + self.steps(t.right)
        if isinstance(t, SeqComp):
            return [(a, o, SeqComp(n, t.right), c) for a, o, n, c in self.steps(t.left)]
        if isinstance(t, Parallel):
            bound = self.bound(t)
            ls, rs = self.steps(t.left), self.steps(t.right)
            out = []
            for a, o, n, c in ls:
                if c is None or c[1] not in bound:
                    out.append((a, o, Parallel(n, t.right), c))
            for a, o, n, c in rs:
                if c is None or c[1] not in bound:
                    out.append((a, o, Parallel(t.left, n), c))
            for a1, _, n1, c1 in ls:
                if c1 is None or c1[1] not in bound:
                    continue
                for a2, _, n2, c2 in rs:
                    if c2 is None or c2[1] != c1[1] or c2[2] != c1[2] or c2[0] == c1[0]:
                        continue
                    out.append((f"{c1[1]}.{c1[2]}", None, Parallel(n1, n2), None))
            return out
        raise TypeError(t)  # pragma: no cover


def _check_channels(defs: ProcessDefs, sem: _Semantics) -> None:
    bound: set[str] = set()
    for body in defs.defs.values():
        for s in _subterms(body):
            if isinstance(s, Parallel):
                bound |= sem.bound(s)
    for chan in sorted(defs.channels):
        if chan not in bound:
            raise UnboundChannel(chan)


def expand_lts(defs: ProcessDefs, root: str | None = None, state_cap: int = DEFAULT_STATE_CAP) -> Lts:
    """Breadth-first expansion of ``root`` (default: ``defs.root``)."""
    sem = _Semantics(defs)
    _check_channels(defs, sem)
    start = sem.norm(Call(root or defs.root))
    index: dict[Term, int] = {start: 0}
    states: list[Term] = [start]
    transitions: list[Transition] = []
    queue = deque([0])
    while queue:
        s = queue.popleft()
        seen_edges: set[tuple[str, int]] = set()
        for label, origin, nxt, comm in sem.steps(states[s]):
            if comm is not None:
                raise UnboundChannel(comm[1])
            nxt = sem.norm(nxt)
            d = index.get(nxt)
            if d is None:
                if len(states) >= state_cap:
                    raise StateExplosion(state_cap)
                d = len(states)
                index[nxt] = d
                states.append(nxt)
                queue.append(d)
            if (label, d) in seen_edges:
                continue
            seen_edges.add((label, d))
            transitions.append(Transition(s, label, d, origin))
    terminated = {i for i, t in enumerate(states) if isinstance(t, Skip)}
    return Lts.build(states, 0, transitions, terminated)


def lts_to_text(lts: Lts) -> str:
    """Structured text: header lines, then one ``<src> <label> <dst>`` edge per line."""
    lines = [f"states {lts.n_states}", f"initial {lts.initial}"]
    if lts.terminated:
        lines.append("terminated " + " ".join(str(s) for s in sorted(lts.terminated)))
    lines.append("edges")
    for t in lts.transitions:
        lines.append(f"{t.src} {t.label} {t.dst}")
    return "\n".join(lines) + "\n"


def lts_to_dot(lts: Lts, name: str = "lts") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", f'  start [shape=point]; start -> s{lts.initial};']
    for i in range(lts.n_states):
        shape = "doublecircle" if i in lts.terminated else "circle"
        lines.append(f'  s{i} [shape={shape}, label="{i}"];')
    for t in lts.transitions:
        style = ", style=dashed" if is_tau(t.label) else ""
        lines.append(f'  s{t.src} -> s{t.dst} [label="{t.label}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def describe_state(lts: Lts, s: int) -> str:
    return format_term(lts.states[s])
