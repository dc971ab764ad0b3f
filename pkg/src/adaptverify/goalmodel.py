"""Tagged adaptation goal models: types, text format, validation and tag lookup.

The text format is line oriented. ``#`` starts a comment, quoted strings may
contain spaces, and section headers select how the following lines are read::

    [nodes]        <id> <Kind> "<label>" [key=value ...] [flag ...]
    [relations]    <Kind> <source> -> <t1>,<t2>,... [annotation]
    [contexts]     <id> "<description>"
    [parameters]   <name> values=<v1>,<v2>,... | range=<start>:<stop>:<step> [when=<decision>:<option>]
    [tags]         <task> @<ctx>[,<ctx>...] [option=<label>] fp=<num> u=<num> tc=<expr> ec=<expr>
                   [fu=<num>] [ftc=<expr>] [fec=<expr>]
    [scenarios]    scenario <id> [merge-failures=<group>]
                   objects <id>,<id>,...
                   message <from> -> <to> "<event>" [tag=<task>[:<option>]]
                   fragment <loop|alt> <first>..<last> "<guard>"
    [labels]       <atom> = <node>[+]
    [assertions]   <P> deadlockfree | nonterminating | divergencefree | deterministic
                   <P> refines <Q>
                   <P> |= <> <event>      <P> |= []<> <event>
    [root]         <id> [restart=<process>]

The bundled ``data/mobis.agm`` is a worked example of every section.
"""

from __future__ import annotations

import enum
import itertools
import shlex
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .errors import (
    DuplicateId,
    InputError,
    ExpressionError,
    FPOutOfRange,
    MissingTag,
    ModelSyntaxError,
    UnresolvedReference,
)
from .expr import Expr


class NodeKind(str, enum.Enum):
    GOAL = "Goal"
    ADAPTATION_GOAL = "AdaptationGoal"
    SOFTGOAL = "Softgoal"
    TASK = "Task"
    ADAPTATION_TASK = "AdaptationTask"
    MONITOR_TASK = "MonitorTask"
    ANALYZE_TASK = "AnalyzeTask"
    PLAN_TASK = "PlanTask"
    EXECUTE_TASK = "ExecuteTask"
    ENV_ACTOR_TASK = "EnvActorTask"
    RESOURCE = "Resource"


GOAL_KINDS = frozenset({NodeKind.GOAL, NodeKind.ADAPTATION_GOAL})
TASK_KINDS = frozenset({
    NodeKind.TASK, NodeKind.ADAPTATION_TASK, NodeKind.MONITOR_TASK, NodeKind.ANALYZE_TASK,
    NodeKind.PLAN_TASK, NodeKind.EXECUTE_TASK, NodeKind.ENV_ACTOR_TASK,
})
MAPE_KINDS = frozenset({
    NodeKind.MONITOR_TASK, NodeKind.ANALYZE_TASK, NodeKind.PLAN_TASK, NodeKind.EXECUTE_TASK,
})


class RelationKind(str, enum.Enum):
    MEANS_ENDS = "MeansEnds"
    DECOMP_AND = "DecompAnd"
    DECOMP_OR = "DecompOr"
    CONTRIBUTION = "Contribution"
    DEPENDENCY = "Dependency"


TREE_RELATIONS = frozenset({RelationKind.MEANS_ENDS, RelationKind.DECOMP_AND, RelationKind.DECOMP_OR})


@dataclass
class Node:
    id: str
    kind: NodeKind
    label: str
    attrs: dict[str, str] = field(default_factory=dict)

    @property
    def event(self) -> str:
        return self.attrs.get("event", self.id)

    @property
    def option(self) -> str | None:
        return self.attrs.get("option")

    @property
    def decision(self) -> str | None:
        return self.attrs.get("decision")

    @property
    def heals(self) -> str | None:
        return self.attrs.get("heals")

    @property
    def repeat(self) -> bool:
        return "repeat" in self.attrs


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    source: str
    targets: tuple[str, ...]
    annotation: str | None = None

    def flags(self) -> dict[str, str]:
        out: dict[str, str] = {}
        if not self.annotation:
            return out
        for part in self.annotation.split(","):
            part = part.strip()
            if not part:
                continue
            key, _, value = part.partition("=")
            out[key] = value
        return out

    def has(self, flag: str) -> bool:
        return flag in self.flags()


@dataclass(frozen=True)
class ContextClass:
    id: str
    description: str = ""


@dataclass(frozen=True)
class Parameter:
    name: str
    domain: tuple[float, ...]
    when: tuple[tuple[str, str], ...] = ()

    def applies(self, structural: Mapping[str, str]) -> bool:
        return all(structural.get(dim) == opt for dim, opt in self.when)


@dataclass(frozen=True)
class Tag:
    task: str
    context: str
    option: str | None
    fp: float
    utility: float
    time_cost: Expr
    energy_cost: Expr
    fail_utility: float = 0.0
    fail_time_cost: Expr | None = None
    fail_energy_cost: Expr | None = None

    @property
    def key(self) -> tuple[str, str, str | None]:
        return (self.task, self.context, self.option)

    def params(self) -> frozenset[str]:
        exprs = [self.time_cost, self.energy_cost, self.fail_time_cost, self.fail_energy_cost]
        return frozenset().union(*(e.params for e in exprs if e is not None))


@dataclass(frozen=True)
class EvaluatedTag:
    fp: float
    utility: float
    time_cost: float
    energy_cost: float
    fail_utility: float
    fail_time_cost: float
    fail_energy_cost: float


@dataclass(frozen=True)
class Message:
    source: str
    target: str
    event: str
    tag: str | None = None

    @property
    def tag_task(self) -> str | None:
        return None if self.tag is None else self.tag.partition(":")[0]

    @property
    def tag_option(self) -> str | None:
        if self.tag is None or ":" not in self.tag:
            return None
        return self.tag.partition(":")[2]


@dataclass(frozen=True)
class Fragment:
    kind: str
    first: int  # 1-based, inclusive
    last: int
    guard: str = ""


@dataclass
class Scenario:
    id: str
    objects: list[str] = field(default_factory=list)
    messages: list[Message] = field(default_factory=list)
    fragments: list[Fragment] = field(default_factory=list)
    failure_group: str | None = None

    def tasks(self) -> set[str]:
        return {m.tag_task for m in self.messages if m.tag_task}


@dataclass(frozen=True)
class LabelRule:
    name: str
    node: str
    closure: bool = False


ASSERTION_SAFETY = ("deadlockfree", "nonterminating", "divergencefree", "deterministic")


@dataclass(frozen=True)
class Assertion:
    process: str
    kind: str  # one of ASSERTION_SAFETY, "refines", "eventually", "always-eventually"
    argument: str | None = None

    def __str__(self) -> str:
        if self.kind in ASSERTION_SAFETY:
            return f"{self.process} {self.kind}"
        if self.kind == "refines":
            return f"{self.process} refines {self.argument}"
        op = "<>" if self.kind == "eventually" else "[]<>"
        return f"{self.process} |= {op} {self.argument}"


@dataclass
class TaggedGoalModel:
    nodes: dict[str, Node]
    relations: list[Relation]
    contexts: list[ContextClass]
    tags: list[Tag]
    parameters: list[Parameter]
    scenarios: list[Scenario]
    root: str
    restart: str | None = None
    labels: list[LabelRule] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)

    # ---- indices -------------------------------------------------------
    @cached_property
    def _children(self) -> dict[str, list[Relation]]:
        out: dict[str, list[Relation]] = {}
        for rel in self.relations:
            if rel.kind in TREE_RELATIONS:
                out.setdefault(rel.source, []).append(rel)
        return out

    @cached_property
    def _parent(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for rel in self.relations:
            if rel.kind in TREE_RELATIONS:
                for t in rel.targets:
                    out.setdefault(t, rel.source)
        return out

    @cached_property
    def _tag_index(self) -> dict[tuple[str, str, str | None], Tag]:
        return {t.key: t for t in self.tags}

    def tree_relation(self, node: str) -> Relation | None:
        rels = self._children.get(node)
        return rels[0] if rels else None

    def children(self, node: str) -> tuple[str, ...]:
        rel = self.tree_relation(node)
        return rel.targets if rel else ()

    def parent(self, node: str) -> str | None:
        return self._parent.get(node)

    def ancestors(self, node: str) -> list[str]:
        out = []
        seen = {node}
        cur = self.parent(node)
        while cur is not None and cur not in seen:
            out.append(cur)
            seen.add(cur)
            cur = self.parent(cur)
        return out

    def subtree(self, node: str) -> set[str]:
        seen = {node}
        stack = [node]
        while stack:
            for c in self.children(stack.pop()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def decision_owner(self, node: str) -> str | None:
        """Nearest ancestor carrying a ``decision`` attribute."""
        for anc in self.ancestors(node):
            if self.nodes[anc].decision:
                return anc
        return None

    def context_ids(self) -> list[str]:
        return [c.id for c in self.contexts]

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise UnresolvedReference(name)

    def find_tag(self, task: str, context: str, option: str | None = None) -> Tag:
        idx = self._tag_index
        if (task, context, option) in idx:
            return idx[(task, context, option)]
        node = self.nodes.get(task)
        if node is None:
            raise MissingTag(task, context, option)
        if option is None and node.option is not None:
            owner = self.decision_owner(task)
            if owner is not None and (owner, context, node.option) in idx:
                return idx[(owner, context, node.option)]
        if option is not None:
            for child in self.subtree(task):
                cn = self.nodes[child]
                if cn.option == option and (child, context, None) in idx:
                    return idx[(child, context, None)]
        raise MissingTag(task, context, option)

    def has_tag(self, task: str, context: str, option: str | None = None) -> bool:
        try:
            self.find_tag(task, context, option)
            return True
        except MissingTag:
            return False


def tag_of(model: TaggedGoalModel, task: str, context: str, option: str | None = None,
           valuation: Mapping[str, float] | None = None) -> EvaluatedTag:
    """Look up the tag of ``task`` and evaluate its cost expressions."""
    tag = model.find_tag(task, context, option)
    env = dict(valuation or {})
    tc = tag.time_cost.evaluate(env)
    ec = tag.energy_cost.evaluate(env)
    ftc = tag.fail_time_cost.evaluate(env) if tag.fail_time_cost is not None else tc
    fec = tag.fail_energy_cost.evaluate(env) if tag.fail_energy_cost is not None else ec
    return EvaluatedTag(tag.fp, tag.utility, tc, ec, tag.fail_utility, ftc, fec)


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = ("nodes", "relations", "contexts", "parameters", "tags", "scenarios",
             "labels", "assertions", "root")


def _tokens(line: str, lineno: int) -> list[str]:
    lex = shlex.shlex(line, posix=True)
    lex.whitespace_split = True
    lex.commenters = "#"
    try:
        return list(lex)
    except ValueError as exc:
        raise ModelSyntaxError(lineno, str(exc)) from None


def _kv(tokens: Iterable[str]) -> tuple[dict[str, str], list[str]]:
    kv: dict[str, str] = {}
    rest: list[str] = []
    for tok in tokens:
        if "=" in tok:
            k, _, v = tok.partition("=")
            kv[k] = v
        else:
            rest.append(tok)
    return kv, rest


def _number(text: str, lineno: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ModelSyntaxError(lineno, f"{what} must be a number, got '{text}'") from None


def _expr(text: str, lineno: int) -> Expr:
    try:
        return Expr.parse(text)
    except ExpressionError as exc:
        raise ModelSyntaxError(lineno, str(exc)) from None


def _split_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _parse_domain(kv: dict[str, str], lineno: int) -> tuple[float, ...]:
    if "values" in kv:
        vals = [_number(v, lineno, "parameter value") for v in _split_list(kv["values"])]
    elif "range" in kv:
        parts = kv["range"].split(":")
        if len(parts) != 3:
            raise ModelSyntaxError(lineno, "range must be <start>:<stop>:<step>")
        start, stop, step = (_number(p, lineno, "range bound") for p in parts)
        if step <= 0:
            raise ModelSyntaxError(lineno, "range step must be positive")
        vals = []
        k = 0
        while start + k * step <= stop + 1e-12:
            vals.append(start + k * step)
            k += 1
    else:
        raise ModelSyntaxError(lineno, "parameter needs values= or range=")
    vals = [int(v) if float(v).is_integer() else v for v in vals]
    if not vals:
        raise ModelSyntaxError(lineno, "parameter domain is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ModelSyntaxError(lineno, "parameter domain must be strictly increasing")
    if any(v <= 0 for v in vals):
        raise ModelSyntaxError(lineno, "parameter values must be positive")
    return tuple(vals)


def parse_model(text: str) -> TaggedGoalModel:
    """Parse a model document. Raises on the first syntax or reference error."""
    nodes: dict[str, Node] = {}
    relations: list[tuple[int, Relation]] = []
    contexts: list[ContextClass] = []
    params: list[tuple[int, Parameter]] = []
    tags: list[tuple[int, Tag]] = []
    scenarios: list[Scenario] = []
    scenario_lines: list[tuple[int, Scenario, str]] = []
    labels: list[tuple[int, LabelRule]] = []
    assertions: list[tuple[int, Assertion]] = []
    root: tuple[int, str, str | None] | None = None
    section: str | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]") and stripped[1:-1] in _SECTIONS:
            section = stripped[1:-1]
            continue
        if section is None:
            raise ModelSyntaxError(lineno, "content before the first section header")
        toks = _tokens(stripped, lineno)
        if not toks:
            continue

        if section == "nodes":
            if len(toks) < 3:
                raise ModelSyntaxError(lineno, "node line needs <id> <kind> \"<label>\"")
            ident, kind_text, label = toks[0], toks[1], toks[2]
            try:
                kind = NodeKind(kind_text)
            except ValueError:
                raise ModelSyntaxError(lineno, f"unknown node kind '{kind_text}'") from None
            if ident in nodes:
                raise DuplicateId(ident, lineno)
            kv, flags = _kv(toks[3:])
            attrs = dict(kv)
            for f in flags:
                attrs[f] = ""
            nodes[ident] = Node(ident, kind, label, attrs)

        elif section == "relations":
            try:
                kind = RelationKind(toks[0])
            except ValueError:
                raise ModelSyntaxError(lineno, f"unknown relation kind '{toks[0]}'") from None
            if len(toks) < 4 or toks[2] != "->":
                raise ModelSyntaxError(lineno, "relation line needs <kind> <source> -> <targets>")
            rest = toks[3:]
            annotation = None
            if rest and rest[-1].startswith("[") and rest[-1].endswith("]"):
                annotation = rest[-1][1:-1].strip() or None
                rest = rest[:-1]
            targets = _split_list(" ".join(rest).replace(" ", ""))
            if not targets:
                raise ModelSyntaxError(lineno, "relation has no targets")
            relations.append((lineno, Relation(kind, toks[1], tuple(targets), annotation)))

        elif section == "contexts":
            cid = toks[0]
            if any(c.id == cid for c in contexts):
                raise DuplicateId(cid, lineno)
            contexts.append(ContextClass(cid, " ".join(toks[1:])))

        elif section == "parameters":
            name = toks[0]
            kv, extra = _kv(toks[1:])
            if extra:
                raise ModelSyntaxError(lineno, f"unexpected token '{extra[0]}'")
            if any(p.name == name for _, p in params):
                raise DuplicateId(name, lineno)
            when: list[tuple[str, str]] = []
            for cond in _split_list(kv.get("when", "")):
                dim, sep, opt = cond.partition(":")
                if not sep:
                    raise ModelSyntaxError(lineno, "when= expects <decision>:<option>")
                when.append((dim, opt))
            params.append((lineno, Parameter(name, _parse_domain(kv, lineno), tuple(when))))

        elif section == "tags":
            if len(toks) < 2 or not toks[1].startswith("@"):
                raise ModelSyntaxError(lineno, "tag line needs <task> @<context>")
            task = toks[0]
            ctxs = _split_list(toks[1][1:])
            kv, extra = _kv(toks[2:])
            if extra:
                raise ModelSyntaxError(lineno, f"unexpected token '{extra[0]}'")
            unknown = set(kv) - {"option", "fp", "u", "tc", "ec", "fu", "ftc", "fec"}
            if unknown:
                raise ModelSyntaxError(lineno, f"unknown tag field '{sorted(unknown)[0]}'")
            for req in ("fp", "tc", "ec"):
                if req not in kv:
                    raise ModelSyntaxError(lineno, f"tag is missing {req}=")
            fp = _number(kv["fp"], lineno, "fp")
            if not 0.0 <= fp <= 1.0:
                raise FPOutOfRange(fp, lineno)
            u = _number(kv.get("u", "0"), lineno, "u")
            fu = _number(kv.get("fu", "0"), lineno, "fu")
            if u < 0 or fu < 0:
                raise ModelSyntaxError(lineno, "utility must be nonnegative")
            for ctx in ctxs:
                tags.append((lineno, Tag(
                    task, ctx, kv.get("option"), fp, u,
                    _expr(kv["tc"], lineno), _expr(kv["ec"], lineno), fu,
                    _expr(kv["ftc"], lineno) if "ftc" in kv else None,
                    _expr(kv["fec"], lineno) if "fec" in kv else None,
                )))

        elif section == "scenarios":
            head = toks[0]
            if head == "scenario":
                if len(toks) < 2:
                    raise ModelSyntaxError(lineno, "scenario needs an id")
                if any(s.id == toks[1] for s in scenarios):
                    raise DuplicateId(toks[1], lineno)
                kv, extra = _kv(toks[2:])
                group = kv.get("merge-failures")
                if "merge-failures" in extra:
                    group = toks[1]
                scenarios.append(Scenario(toks[1], failure_group=group))
                continue
            if not scenarios:
                raise ModelSyntaxError(lineno, f"'{head}' outside a scenario")
            sc = scenarios[-1]
            if head == "objects":
                sc.objects.extend(_split_list(" ".join(toks[1:]).replace(" ", "")))
                scenario_lines.append((lineno, sc, "objects"))
            elif head == "message":
                if len(toks) < 5 or toks[2] != "->":
                    raise ModelSyntaxError(lineno, "message needs <from> -> <to> \"<event>\"")
                kv, _ = _kv(toks[5:])
                sc.messages.append(Message(toks[1], toks[3], toks[4], kv.get("tag")))
                scenario_lines.append((lineno, sc, "message"))
            elif head == "fragment":
                if len(toks) < 3 or toks[1] not in ("loop", "alt") or ".." not in toks[2]:
                    raise ModelSyntaxError(lineno, "fragment needs <loop|alt> <first>..<last>")
                a, _, b = toks[2].partition("..")
                try:
                    first, last = int(a), int(b)
                except ValueError:
                    raise ModelSyntaxError(lineno, "fragment range must be integers") from None
                sc.fragments.append(Fragment(toks[1], first, last, " ".join(toks[3:])))
            else:
                raise ModelSyntaxError(lineno, f"unknown scenario line '{head}'")

        elif section == "labels":
            if len(toks) != 3 or toks[1] != "=":
                raise ModelSyntaxError(lineno, "label line needs <atom> = <node>[+]")
            target = toks[2]
            closure = target.endswith("+")
            labels.append((lineno, LabelRule(toks[0], target.rstrip("+"), closure)))

        elif section == "assertions":
            assertions.append((lineno, _parse_assertion(toks, lineno)))

        elif section == "root":
            if root is not None:
                raise ModelSyntaxError(lineno, "root declared twice")
            kv, _ = _kv(toks[1:])
            root = (lineno, toks[0], kv.get("restart"))

    if root is None:
        raise ModelSyntaxError(0, "missing [root] section")

    # ---- reference resolution ----------------------------------------
    ctx_ids = {c.id for c in contexts}
    for lineno, rel in relations:
        for ref in (rel.source, *rel.targets):
            if ref not in nodes:
                raise UnresolvedReference(ref, lineno)
    seen_tags: set[tuple[str, str, str | None]] = set()
    for lineno, tag in tags:
        if tag.task not in nodes:
            raise UnresolvedReference(tag.task, lineno)
        if tag.context not in ctx_ids:
            raise UnresolvedReference(tag.context, lineno)
        if tag.key in seen_tags:
            raise DuplicateId(f"{tag.task}@{tag.context}" + (f"/{tag.option}" if tag.option else ""), lineno)
        seen_tags.add(tag.key)
    for ident, node in nodes.items():
        for key in ("heals",):
            ref = node.attrs.get(key)
            if ref is not None and ref not in nodes:
                raise UnresolvedReference(ref)
    decisions = {n.decision for n in nodes.values() if n.decision}
    for lineno, p in params:
        for dim, _ in p.when:
            if dim not in decisions:
                raise UnresolvedReference(dim, lineno)
    known = set(nodes) | ctx_ids
    for lineno, sc, what in scenario_lines:
        if what == "objects":
            for obj in sc.objects:
                if obj not in known:
                    raise UnresolvedReference(obj, lineno)
    for sc in scenarios:
        for msg in sc.messages:
            if msg.tag_task is not None and msg.tag_task not in nodes:
                raise UnresolvedReference(msg.tag_task)
    for lineno, rule in labels:
        if rule.node not in nodes:
            raise UnresolvedReference(rule.node, lineno)
    lineno, root_id, restart = root
    if root_id not in nodes:
        raise UnresolvedReference(root_id, lineno)

    return TaggedGoalModel(
        nodes=nodes,
        relations=[r for _, r in relations],
        contexts=contexts,
        tags=[t for _, t in tags],
        parameters=[p for _, p in params],
        scenarios=scenarios,
        root=root_id,
        restart=restart,
        labels=[r for _, r in labels],
        assertions=[a for _, a in assertions],
    )


def _parse_assertion(toks: list[str], lineno: int) -> Assertion:
    if len(toks) == 2 and toks[1] in ASSERTION_SAFETY:
        return Assertion(toks[0], toks[1])
    if len(toks) == 3 and toks[1] == "refines":
        return Assertion(toks[0], "refines", toks[2])
    if len(toks) >= 3 and toks[1] == "|=":
        rest = "".join(toks[2:])
        if rest.startswith("[]<>"):
            return Assertion(toks[0], "always-eventually", rest[4:])
        if rest.startswith("<>"):
            return Assertion(toks[0], "eventually", rest[2:])
    raise ModelSyntaxError(lineno, "unrecognised assertion: " + " ".join(toks))


def load_model(path) -> TaggedGoalModel:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from None
    return parse_model(text)


# ---------------------------------------------------------------------------
# serialization

def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def serialize_model(model: TaggedGoalModel) -> str:
    """Render ``model`` in the text format; ``parse_model`` inverts it."""
    out = ["[nodes]"]
    for n in model.nodes.values():
        parts = [n.id, n.kind.value, _q(n.label)]
        for k, v in n.attrs.items():
            parts.append(k if v == "" else f"{k}={v}")
        out.append(" ".join(parts))
    out.append("")
    out.append("[relations]")
    for r in model.relations:
        line = f"{r.kind.value} {r.source} -> {','.join(r.targets)}"
        if r.annotation:
            line += f" [{r.annotation}]"
        out.append(line)
    out.append("")
    out.append("[contexts]")
    for c in model.contexts:
        out.append(f"{c.id} {_q(c.description)}")
    out.append("")
    out.append("[parameters]")
    for p in model.parameters:
        line = f"{p.name} values={','.join(_num(v) for v in p.domain)}"
        if p.when:
            line += " when=" + ",".join(f"{d}:{o}" for d, o in p.when)
        out.append(line)
    out.append("")
    out.append("[tags]")
    for t in model.tags:
        parts = [t.task, f"@{t.context}"]
        if t.option is not None:
            parts.append(f"option={t.option}")
        parts += [f"fp={_num(t.fp)}", f"u={_num(t.utility)}", f"tc={t.time_cost}", f"ec={t.energy_cost}"]
        if t.fail_utility:
            parts.append(f"fu={_num(t.fail_utility)}")
        if t.fail_time_cost is not None:
            parts.append(f"ftc={t.fail_time_cost}")
        if t.fail_energy_cost is not None:
            parts.append(f"fec={t.fail_energy_cost}")
        out.append(" ".join(parts))
    out.append("")
    out.append("[scenarios]")
    for s in model.scenarios:
        head = f"scenario {s.id}"
        if s.failure_group is not None:
            head += f" merge-failures={s.failure_group}"
        out.append(head)
        if s.objects:
            out.append("  objects " + ",".join(s.objects))
        for m in s.messages:
            line = f"  message {m.source} -> {m.target} {_q(m.event)}"
            if m.tag is not None:
                line += f" tag={m.tag}"
            out.append(line)
        for f in s.fragments:
            out.append(f"  fragment {f.kind} {f.first}..{f.last} {_q(f.guard)}")
    out.append("")
    out.append("[labels]")
    for lr in model.labels:
        out.append(f"{lr.name} = {lr.node}{'+' if lr.closure else ''}")
    out.append("")
    out.append("[assertions]")
    for a in model.assertions:
        out.append(str(a))
    out.append("")
    out.append("[root]")
    out.append(model.root + (f" restart={model.restart}" if model.restart else ""))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.subject}: {self.message}"


def behavior_tasks(model: TaggedGoalModel) -> list[str]:
    """Event-bearing task nodes reachable from the root through the goal tree."""
    out = []
    for nid in _preorder(model, model.root):
        node = model.nodes[nid]
        if node.kind in TASK_KINDS and node.kind is not NodeKind.ADAPTATION_TASK and not model.children(nid):
            out.append(nid)
    return out


def _preorder(model: TaggedGoalModel, start: str) -> list[str]:
    out, seen, stack = [], set(), [start]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        out.append(nid)
        stack.extend(reversed(model.children(nid)))
    return out


def validate(model: TaggedGoalModel) -> list[Diagnostic]:
    """Structural and tag completeness checks. An empty list means valid."""
    diags: list[Diagnostic] = []

    def err(subject: str, msg: str) -> None:
        diags.append(Diagnostic("error", subject, msg))

    nodes = model.nodes
    root = nodes.get(model.root)
    if root is None or root.kind is not NodeKind.GOAL:
        err(model.root, "root must be a Goal")
    if not model.contexts:
        err("contexts", "at least one context class is required")

    parents: dict[str, list[str]] = {}
    sources: dict[str, int] = {}
    for rel in model.relations:
        src = nodes[rel.source]
        if rel.kind in TREE_RELATIONS:
            sources[rel.source] = sources.get(rel.source, 0) + 1
            for t in rel.targets:
                parents.setdefault(t, []).append(rel.source)
        if rel.kind is RelationKind.MEANS_ENDS:
            if src.kind not in GOAL_KINDS:
                err(rel.source, "Means-Ends source must be a Goal or AdaptationGoal")
            for t in rel.targets:
                if nodes[t].kind not in (NodeKind.TASK, NodeKind.ADAPTATION_TASK):
                    err(t, "Means-Ends target must be a Task or AdaptationTask")
        elif rel.kind in (RelationKind.DECOMP_AND, RelationKind.DECOMP_OR):
            if len(rel.targets) < 2:
                err(rel.source, f"{rel.kind.value} needs at least two targets")
            flags = rel.flags()
            if rel.kind is RelationKind.DECOMP_AND and "parallel" in flags and "seq" in flags:
                err(rel.source, "AND relation cannot be both seq and parallel")
        elif rel.kind is RelationKind.CONTRIBUTION:
            for t in rel.targets:
                if nodes[t].kind is not NodeKind.SOFTGOAL:
                    err(t, "Contribution target must be a Softgoal")
        if rel.kind in TREE_RELATIONS:
            for t in rel.targets:
                if nodes[t].kind in MAPE_KINDS and src.kind is not NodeKind.ADAPTATION_TASK:
                    err(t, f"{nodes[t].kind.value} may only be a child of an AdaptationTask")
    for nid, count in sources.items():
        if count > 1:
            err(nid, "node is the source of more than one decomposition relation")
    for nid, ps in parents.items():
        if len(ps) > 1:
            err(nid, "node has more than one decomposition parent")
    # cycle detection over the decomposition graph
    color: dict[str, int] = {}
    for start in nodes:
        if color.get(start):
            continue
        stack = [(start, iter(model.children(start)))]
        color[start] = 1
        while stack:
            nid, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[nid] = 2
                stack.pop()
                continue
            c = color.get(nxt, 0)
            if c == 1:
                err(nxt, "decomposition cycle")
            elif c == 0:
                color[nxt] = 1
                stack.append((nxt, iter(model.children(nxt))))
    for node in nodes.values():
        if node.kind in MAPE_KINDS and node.id not in parents:
            err(node.id, f"{node.kind.value} may only be a child of an AdaptationTask")
        if node.heals is not None and node.kind is not NodeKind.ADAPTATION_TASK:
            err(node.id, "heals= is only meaningful on an AdaptationTask")

    if any(d.severity == "error" and "cycle" in d.message for d in diags):
        return diags

    # tag completeness for tasks that generate behaviour
    ctx_ids = model.context_ids()
    for task in behavior_tasks(model):
        for ctx in ctx_ids:
            if not model.has_tag(task, ctx):
                err(task, f"missing tag for context {ctx}")
    for nid in _preorder(model, model.root):
        node = nodes[nid]
        rel = model.tree_relation(nid)
        if node.decision and node.kind in GOAL_KINDS and rel is not None and rel.kind is RelationKind.DECOMP_OR:
            for child in rel.targets:
                opt = nodes[child].option
                for ctx in ctx_ids:
                    if opt is None or not model.has_tag(nid, ctx, opt):
                        err(nid, f"missing tag for option {opt} in context {ctx}")
    known_params = {p.name for p in model.parameters}
    for tag in model.tags:
        missing = tag.params() - known_params
        if missing:
            err(tag.task, f"tag refers to undeclared parameter {sorted(missing)[0]}")
            continue
        names = sorted(tag.params())
        grids = [model.parameter(n).domain for n in names]
        for combo in itertools.product(*grids):
            env = dict(zip(names, combo))
            try:
                tc = tag.time_cost.evaluate(env)
                ftc = tag.fail_time_cost.evaluate(env) if tag.fail_time_cost else tc
                ec = tag.energy_cost.evaluate(env)
            except ExpressionError as exc:
                err(tag.task, f"tag expression fails at {env}: {exc}")
                break
            if tc <= 0 or ftc <= 0:
                err(tag.task, f"time cost not positive at {env}")
                break
            if ec < 0:
                err(tag.task, f"energy cost negative at {env}")
                break
    for sc in model.scenarios:
        for msg in sc.messages:
            if msg.tag_task is not None and not any(t.task == msg.tag_task for t in model.tags):
                if not model.has_tag(msg.tag_task, ctx_ids[0] if ctx_ids else "", msg.tag_option):
                    err(sc.id, f"message tag '{msg.tag}' does not resolve to a tag")
        n = len(sc.messages)
        frs = sorted(sc.fragments, key=lambda f: (f.first, -f.last))
        for f in frs:
            if not 1 <= f.first <= f.last <= n:
                err(sc.id, f"fragment {f.kind} {f.first}..{f.last} out of bounds")
        for a, b in itertools.combinations(frs, 2):
            overlap = a.first <= b.last and b.first <= a.last
            nested = (a.first <= b.first and b.last <= a.last) or (b.first <= a.first and a.last <= b.last)
            if overlap and not nested:
                err(sc.id, f"fragments {a.first}..{a.last} and {b.first}..{b.last} overlap")
    return diags
