"""Variable DTMCs: generation from an LTS plus tags, instantiation, PCTL checking.

A variable DTMC has invariable states (one outgoing distribution) and variable
states whose distribution is indexed by the option of a decision. Assigning
one option per decision collapses it to a :class:`ConcreteDtmc`.

Generation walks the LTS from its initial state:

* a task transition becomes a state that succeeds with ``1 - fp`` and fails
  with ``fp`` (tag of the task in the chosen context);
* alternative transitions explained by a decision node become one variable
  state (same continuation) or a decision state followed by per-option
  branches (different continuations);
* a return to an LTS state already on the current path, or a terminated
  state, leads to the absorbing ``success`` state;
* failures of tasks healed by an adaptation task with ``heals=G`` enter that
  task's healing chain (its MAPE tasks, then the adaptation task itself when
  it carries a tag) which finally retries ``G``; on the successful path the
  healing tasks are skipped;
* other failures go to one absorbing failure state per ``merge-failures``
  group (or per task if the task belongs to no group).

Self-loops of repeated tasks are not represented: the tags give no repetition
probability, so each repeated task is traversed once.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .behavior.lts import Lts
from .behavior.process import is_tau
from .errors import (
    IncompleteAssignment, InputError, InvalidAssignment, NoConvergence, NoEntryStates,
    NonStochasticModel, NonTerminatingRun, UnknownAtom, UnknownOption, UnlabeledTransition,
    UnresolvedReference, UnsupportedOperator, UnsupportedPattern,
)
from .goalmodel import TaggedGoalModel
from .logic import (
    And, Atom, Cumulative, FalseF, Next, Not, Or, ProbOp, RewardOp, TrueF, Until, compare, worst,
)

SUCCESS = "success"
FAILURE = "failure"
HEALING = "healing"
STOCHASTIC_TOL = 1e-9
DIRECT_SOLVE_LIMIT = 200
RESIDUAL_TOL = 1e-10
MAX_SWEEPS = 1_000_000


# ---------------------------------------------------------------------------
# variable DTMC

@dataclass(frozen=True)
class Edge:
    """One probabilistic transition; ``task``/``option`` name the tag behind it."""
    dst: int
    prob: float
    task: str | None = None
    option: str | None = None
    kind: str = "success"  # success | failure | absorb


@dataclass(frozen=True)
class DtmcState:
    id: int
    name: str
    role: str  # task | variable | decision | healing | success | failure
    tasks: tuple[str, ...] = ()
    owner: str | None = None  # decision node of a variable/decision state
    decision: str | None = None
    options: tuple[str, ...] = ()
    labels: frozenset[str] = frozenset()

    @property
    def variable(self) -> bool:
        return bool(self.options)


@dataclass(frozen=True)
class VariableDtmc:
    states: tuple[DtmcState, ...]
    initial: int
    rows: Mapping[tuple[int, str | None], tuple[Edge, ...]]
    context: str

    @property
    def n_states(self) -> int:
        return len(self.states)

    @cached_property
    def variable_states(self) -> frozenset[int]:
        return frozenset(s.id for s in self.states if s.variable)

    @cached_property
    def invariable_states(self) -> frozenset[int]:
        return frozenset(s.id for s in self.states if not s.variable)

    @cached_property
    def decisions(self) -> dict[str, tuple[str, ...]]:
        """Decision name -> ordered options, in order of first appearance."""
        out: dict[str, tuple[str, ...]] = {}
        for s in self.states:
            if s.variable:
                out.setdefault(s.decision, s.options)
        return out

    def row(self, s: int, option: str | None = None) -> tuple[Edge, ...]:
        return self.rows[(s, option)]

    def labels(self, s: int) -> frozenset[str]:
        return self.states[s].labels

    @cached_property
    def vocabulary(self) -> frozenset[str]:
        out: set[str] = set()
        for s in self.states:
            out |= s.labels
        return frozenset(out)

    @cached_property
    def absorbing_states(self) -> frozenset[int]:
        return frozenset(s.id for s in self.states if s.role in (SUCCESS, FAILURE))

    def successors(self, s: int) -> set[int]:
        st = self.states[s]
        opts = st.options or (None,)
        return {e.dst for o in opts for e in self.rows[(s, o)]}


class _Generator:
    def __init__(self, lts: Lts, model: TaggedGoalModel, context: str):
        self.lts = lts
        self.model = model
        self.ctx = context
        self.states: list[dict] = []
        self.rows: dict[tuple[int, str | None], tuple[Edge, ...]] = {}
        self.memo: dict = {}
        self.fail_ids: dict[str, int] = {}
        self.success_id: int | None = None
        self.heal_ids: dict[str, int] = {}
        self._sub: dict[str, frozenset[str]] = {}
        self.all_nodes = frozenset(model.nodes)

        self.healing_tasks: dict[str, str] = {}  # MAPE task of a healing AT -> AT
        self.heal_of: dict[str, str] = {}        # healed node -> healing AT
        self.healed_goal: dict[str, str] = {}    # healing AT -> goal it retries
        for nid, node in model.nodes.items():
            if node.heals:
                self.healed_goal[nid] = node.heals
                for c in model.children(nid):
                    self.healing_tasks[c] = nid
                for n in self.subtree(node.heals) - self.subtree(nid):
                    self.heal_of.setdefault(n, nid)
        self.group_of: dict[str, str] = {}
        for sc in model.scenarios:
            if sc.failure_group:
                for t in sorted(sc.tasks()):
                    self.group_of.setdefault(t, sc.failure_group)

    # -- helpers ------------------------------------------------------------
    def subtree(self, node: str) -> frozenset[str]:
        r = self._sub.get(node)
        if r is None:
            r = frozenset(self.model.subtree(node))
            self._sub[node] = r
        return r

    def new_state(self, role: str, **kw) -> int:
        sid = len(self.states)
        labels = set(kw.pop("labels", ()))
        self.states.append(dict(id=sid, role=role, labels=labels, **kw))
        return sid

    def event_of(self, node: str) -> str:
        return self.model.nodes[node].event

    def fp(self, task: str, option: str | None) -> float:
        return self.model.find_tag(task, self.ctx, option).fp

    def group(self, node: str) -> str:
        if node in self.group_of:
            return self.group_of[node]
        owner = self.model.decision_owner(node)
        if owner is not None and owner in self.group_of:
            return self.group_of[owner]
        return node

    def success(self) -> int:
        if self.success_id is None:
            sid = self.new_state(SUCCESS, labels={SUCCESS})
            self.rows[(sid, None)] = (Edge(sid, 1.0, kind="absorb"),)
            self.success_id = sid
        return self.success_id

    def fail_state(self, group: str) -> int:
        sid = self.fail_ids.get(group)
        if sid is None:
            sid = self.new_state(FAILURE, labels={FAILURE, f"fail_{group}"}, group=group)
            self.rows[(sid, None)] = (Edge(sid, 1.0, kind="absorb"),)
            self.fail_ids[group] = sid
        return sid

    def failure_target(self, node: str) -> int:
        at = self.heal_of.get(node)
        if at is not None:
            return self.heal_entry(at)
        return self.fail_state(self.group(node))

    def split(self, succ: int, fp: float, task: str, option: str | None, fail_node: str) -> tuple[Edge, ...]:
        edges = []
        if fp < 1.0:
            edges.append(Edge(succ, 1.0 - fp, task, option, "success"))
        if fp > 0.0:
            edges.append(Edge(self.failure_target(fail_node), fp, task, option, "failure"))
        return tuple(edges)

    def tag_key(self, origin: str, owner: str, option: str) -> tuple[str, str | None]:
        if self.model.has_tag(origin, self.ctx):
            return origin, None
        return owner, option

    def decision_for(self, origins: Iterable[str]) -> tuple[str, dict[str, str]]:
        origins = list(origins)
        for d in self.model.ancestors(origins[0]):
            if not self.model.nodes[d].decision:
                continue
            kids = self.model.children(d)
            owner_child: dict[str, str] = {}
            for o in origins:
                k = next((c for c in kids if o in self.subtree(c)), None)
                if k is None:
                    break
                owner_child[o] = k
            else:
                if len(set(owner_child.values())) >= 2:
                    return d, owner_child
        raise UnsupportedPattern(
            f"alternative tasks {sorted(origins)} are not explained by a decision node")

    def option_label(self, child: str) -> str:
        return self.model.nodes[child].option or child

    # -- walk ---------------------------------------------------------------
    def classify(self, w: int, allowed: frozenset[str] | None, path: frozenset[int]) -> int:
        if w in path:
            return self.success()
        outs = [t for t in self.lts.out(w)
                if t.dst != w and (allowed is None or t.origin in allowed)]
        if not outs:
            return self.success()
        p2 = path | {w}
        silent = [t for t in outs if t.origin is None or is_tau(t.label)]
        if silent:
            if len(outs) == 1:
                return self.classify(outs[0].dst, None, p2)
            raise UnlabeledTransition(
                f"state {w}: branching through unlabelled transition '{silent[0].label}'")
        if any(t.origin in self.healing_tasks for t in outs):
            return self.bypass(w, outs, p2)
        targets = {t.dst for t in outs}
        origins = tuple(dict.fromkeys(t.origin for t in outs))
        if len(targets) == 1:
            return self.task_state(origins, outs[0].dst, p2)
        return self.decision_state(w, origins, allowed, path)

    def task_state(self, origins: tuple[str, ...], target: int, path: frozenset[int]) -> int:
        key = (frozenset(origins), target)
        if key in self.memo:
            return self.memo[key]
        if len(origins) == 1:
            node = origins[0]
            sid = self.new_state("task", tasks=(node,), labels={self.event_of(node)})
            self.memo[key] = sid
            fp = self.fp(node, None)
            succ = self.classify(target, None, path)
            self.rows[(sid, None)] = self.split(succ, fp, node, None, node)
            return sid
        owner, child_of = self.decision_for(origins)
        kids = self.model.children(owner)
        ordered = sorted(origins, key=lambda o: (kids.index(child_of[o]), o))
        options = tuple(self.option_label(child_of[o]) for o in ordered)
        if len(set(options)) != len(options):
            raise UnsupportedPattern(f"decision '{owner}' has several tasks for one option")
        sid = self.new_state("variable", tasks=tuple(ordered), owner=owner,
                             decision=self.model.nodes[owner].decision, options=options,
                             labels={self.event_of(o) for o in ordered})
        self.memo[key] = sid
        succ = self.classify(target, None, path)
        for o, opt in zip(ordered, options):
            task, topt = self.tag_key(o, owner, opt)
            self.rows[(sid, opt)] = self.split(succ, self.fp(task, topt), task, topt, o)
        return sid

    def decision_state(self, w: int, origins: tuple[str, ...], allowed, path: frozenset[int]) -> int:
        owner, child_of = self.decision_for(origins)
        key = ("decision", w, owner, allowed)
        if key in self.memo:
            return self.memo[key]
        kids = [k for k in self.model.children(owner) if k in set(child_of.values())]
        options = tuple(self.option_label(k) for k in kids)
        sid = self.new_state("decision", tasks=(owner,), owner=owner,
                             decision=self.model.nodes[owner].decision, options=options)
        self.memo[key] = sid
        for k, opt in zip(kids, options):
            sub = self.subtree(k) if allowed is None else self.subtree(k) & allowed
            succ = self.classify(w, sub, path)
            self.rows[(sid, opt)] = self.split(succ, self.fp(owner, opt), owner, opt, owner)
        return sid

    # -- healing ------------------------------------------------------------
    def walk_chain(self, start: int, at: str) -> tuple[list[str], int]:
        chain: list[str] = []
        cur = start
        seen = {start}
        while True:
            outs = [t for t in self.lts.out(cur)
                    if t.dst != cur and self.healing_tasks.get(t.origin) == at]
            if not outs:
                return chain, cur
            if len({t.dst for t in outs}) != 1 or len({t.origin for t in outs}) != 1:
                raise UnsupportedPattern(f"healing tasks of '{at}' do not form a sequence")
            chain.append(outs[0].origin)
            cur = outs[0].dst
            if cur in seen:
                raise UnsupportedPattern(f"healing tasks of '{at}' loop without retrying")
            seen.add(cur)

    def heal_entry(self, at: str) -> int:
        if at in self.heal_ids:
            return self.heal_ids[at]
        mape = [c for c in self.model.children(at) if self.healing_tasks.get(c) == at]
        if not mape:
            raise UnsupportedPattern(f"healing task '{at}' has no monitor/analyze/plan tasks")
        start = next((t.src for t in self.lts.transitions if t.origin == mape[0]), None)
        if start is None:
            raise UnsupportedPattern(f"healing task '{mape[0]}' never occurs in the behaviour model")
        chain, y = self.walk_chain(start, at)
        ids = [self.new_state(HEALING, tasks=(o,), labels={HEALING, self.event_of(o)}) for o in chain]
        self.heal_ids[at] = ids[0]
        nodes = list(chain)
        if self.model.has_tag(at, self.ctx):
            ids.append(self.new_state(HEALING, tasks=(at,), labels={HEALING}))
            nodes.append(at)
        retry = self.subtree(self.healed_goal[at])
        if not any(t.origin in retry for t in self.lts.out(y)):
            raise UnsupportedPattern(f"healing loop of '{at}' never retries '{self.healed_goal[at]}'")
        target = self.classify(y, retry, frozenset())
        for i, sid in enumerate(ids):
            nxt = ids[i + 1] if i + 1 < len(ids) else target
            self.rows[(sid, None)] = self.split(nxt, self.fp(nodes[i], None), nodes[i], None, nodes[i])
        return ids[0]

    def bypass(self, w: int, outs, path: frozenset[int]) -> int:
        at = next(self.healing_tasks[t.origin] for t in outs if t.origin in self.healing_tasks)
        self.heal_entry(at)
        _, y = self.walk_chain(w, at)
        cont = self.all_nodes - self.subtree(self.healed_goal[at]) - frozenset(
            n for n, a in self.healing_tasks.items() if a == at)
        return self.classify(y, cont, path)

    # -- labels -------------------------------------------------------------
    def apply_label_rules(self) -> None:
        for rule in self.model.labels:
            seeds = [s["id"] for s in self.states
                     if s["role"] in ("task", "variable", "decision")
                     and (rule.node in s.get("tasks", ()) or s.get("owner") == rule.node)]
            region = set(seeds)
            if rule.closure:
                stack = list(seeds)
                while stack:
                    s = stack.pop()
                    st = self.states[s]
                    opts = st.get("options") or (None,)
                    for o in opts:
                        for e in self.rows[(s, o)]:
                            if e.kind != "success" or e.dst in region:
                                continue
                            if self.states[e.dst]["role"] in (HEALING, FAILURE, SUCCESS):
                                continue
                            region.add(e.dst)
                            stack.append(e.dst)
            for s in region:
                self.states[s]["labels"].add(rule.name)

    def run(self) -> VariableDtmc:
        initial = self.classify(self.lts.initial, None, frozenset())
        self.apply_label_rules()
        states = []
        for s in self.states:
            role = s["role"]
            if role in (SUCCESS, FAILURE):
                name = SUCCESS if role == SUCCESS else f"fail_{s['group']}"
            else:
                name = f"s{s['id']}"
            states.append(DtmcState(
                id=s["id"], name=name, role=role, tasks=tuple(s.get("tasks", ())),
                owner=s.get("owner"), decision=s.get("decision"),
                options=tuple(s.get("options", ())), labels=frozenset(s["labels"])))
        vd = VariableDtmc(tuple(states), initial, dict(self.rows), self.ctx)
        check_variable_dtmc(vd)
        return vd


def generate_variable_dtmc(lts: Lts, model: TaggedGoalModel, context: str) -> VariableDtmc:
    """Build the variable DTMC of ``lts`` with the tags of ``context``."""
    if context not in model.context_ids():
        raise UnresolvedReference(context)
    return _Generator(lts, model, context).run()


def check_variable_dtmc(vd: VariableDtmc) -> None:
    for st in vd.states:
        if st.variable and len(st.options) < 2:
            raise UnsupportedPattern(f"variable state {st.name} has fewer than two options")
        for o in st.options or (None,):
            row = vd.rows.get((st.id, o))
            if row is None:
                raise NonStochasticModel(f"state {st.name} has no row for option {o}")
            total = sum(e.prob for e in row)
            if abs(total - 1.0) > STOCHASTIC_TOL or any(not 0.0 <= e.prob <= 1.0 for e in row):
                raise NonStochasticModel(f"state {st.name} option {o}: probabilities sum to {total}")


# ---------------------------------------------------------------------------
# assignments and concrete chains

@dataclass(frozen=True)
class Assignment:
    context: str
    structural: tuple[tuple[str, str], ...] = ()
    parameters: tuple[tuple[str, float], ...] = ()

    @staticmethod
    def of(context: str, structural: Mapping[str, str] | None = None,
           parameters: Mapping[str, float] | None = None) -> "Assignment":
        return Assignment(context, tuple((structural or {}).items()),
                          tuple((k, float(v)) for k, v in (parameters or {}).items()))

    @property
    def options(self) -> dict[str, str]:
        return dict(self.structural)

    @property
    def valuation(self) -> dict[str, float]:
        return dict(self.parameters)

    def describe(self) -> str:
        parts = [o for _, o in self.structural]
        parts += [f"{k}={_num(v)}" for k, v in self.parameters]
        return "/".join(parts) if parts else "-"

    def to_json(self) -> dict:
        return {"context": self.context,
                "structural": dict(self.structural),
                "parameters": {k: _json_num(v) for k, v in self.parameters}}

    @staticmethod
    def from_json(obj: Mapping) -> "Assignment":
        try:
            return Assignment.of(obj["context"], obj.get("structural", {}), obj.get("parameters", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed assignment: {exc}") from None


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _json_num(v: float):
    return int(v) if float(v).is_integer() else float(v)


@dataclass(frozen=True)
class ConcreteEdge:
    src: int
    dst: int
    prob: float
    task: str | None = None
    option: str | None = None
    kind: str = "success"


@dataclass(frozen=True, eq=False)
class ConcreteDtmc:
    names: tuple[str, ...]
    initial: int
    P: csr_matrix
    labels: tuple[frozenset[str], ...]
    edges: tuple[ConcreteEdge, ...] = ()
    vocabulary: frozenset[str] = frozenset()

    @property
    def n_states(self) -> int:
        return len(self.names)

    @cached_property
    def absorbing(self) -> np.ndarray:
        return np.isclose(self.P.diagonal(), 1.0, rtol=0.0, atol=STOCHASTIC_TOL)

    def sat(self, atom: str) -> np.ndarray:
        return _label_mask(self.labels, self.vocabulary, atom)

    def mask(self, states) -> np.ndarray:
        return _as_mask(states, self.n_states)

    @cached_property
    def _graph(self) -> tuple[csr_matrix, csr_matrix]:
        g = self.P.copy()
        g.eliminate_zeros()
        return g.tocsr(), g.T.tocsr()


def _label_mask(labels, vocabulary, atom: str) -> np.ndarray:
    m = np.array([atom in lab for lab in labels], dtype=bool)
    if not m.any() and atom not in vocabulary:
        raise UnknownAtom(atom)
    return m


def _as_mask(states, n: int) -> np.ndarray:
    if isinstance(states, np.ndarray) and states.dtype == bool:
        if states.shape != (n,):
            raise InputError("state mask has the wrong length")
        return states
    m = np.zeros(n, dtype=bool)
    for s in states:
        if not 0 <= int(s) < n:
            raise InputError(f"state {s} out of range")
        m[int(s)] = True
    return m


def from_matrix(P, initial: int = 0, labels: Iterable[Iterable[str]] | None = None,
                names: Iterable[str] | None = None) -> ConcreteDtmc:
    """Concrete chain from a dense or sparse probability matrix (tests, import)."""
    P = csr_matrix(P, dtype=float)
    n = P.shape[0]
    labs = tuple(frozenset(x) for x in labels) if labels is not None else tuple(frozenset() for _ in range(n))
    nm = tuple(names) if names is not None else tuple(f"s{i}" for i in range(n))
    coo = P.tocoo()
    edges = tuple(ConcreteEdge(int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data))
    d = ConcreteDtmc(nm, initial, P, labs, edges, frozenset().union(*labs) if labs else frozenset())
    check_stochastic(d)
    return d


def check_stochastic(d: ConcreteDtmc) -> None:
    data = d.P.data
    if data.size and (data.min() < -STOCHASTIC_TOL or data.max() > 1.0 + STOCHASTIC_TOL):
        raise NonStochasticModel("probability outside [0, 1]")
    sums = np.asarray(d.P.sum(axis=1)).ravel()
    bad = np.nonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)[0]
    if bad.size:
        s = int(bad[0])
        raise NonStochasticModel(f"row of state {d.names[s]} sums to {sums[s]!r}")


def instantiate_dtmc(vd: VariableDtmc, a: Assignment) -> ConcreteDtmc:
    """Collapse every variable state to the option chosen by ``a``.

    Decisions that cannot be reached under the other choices may be left
    unassigned; their states keep the first option so the chain stays
    row-stochastic.
    """
    chosen = a.options
    decisions = vd.decisions
    for name, opt in chosen.items():
        if name not in decisions:
            raise InvalidAssignment(f"model has no decision '{name}'")
        if opt not in decisions[name]:
            raise UnknownOption(f"'{opt}' is not an option of decision '{name}'")

    def option_of(st: DtmcState) -> str | None:
        if not st.variable:
            return None
        return chosen.get(st.decision)

    # reachable decisions must be assigned
    seen = {vd.initial}
    queue = deque([vd.initial])
    while queue:
        s = queue.popleft()
        st = vd.states[s]
        o = option_of(st)
        if st.variable and o is None:
            raise IncompleteAssignment(f"decision '{st.decision}' is reachable but unassigned")
        for e in vd.rows[(s, o)]:
            if e.dst not in seen:
                seen.add(e.dst)
                queue.append(e.dst)

    edges: list[ConcreteEdge] = []
    for st in vd.states:
        o = option_of(st)
        if st.variable and o is None:
            o = st.options[0]
        for e in vd.rows[(st.id, o)]:
            edges.append(ConcreteEdge(st.id, e.dst, e.prob, e.task, e.option, e.kind))
    n = vd.n_states
    P = coo_matrix(([e.prob for e in edges], ([e.src for e in edges], [e.dst for e in edges])),
                   shape=(n, n)).tocsr()
    d = ConcreteDtmc(tuple(s.name for s in vd.states), vd.initial, P,
                     tuple(s.labels for s in vd.states), tuple(edges), vd.vocabulary)
    check_stochastic(d)
    return d


# ---------------------------------------------------------------------------
# graph algorithms

def _backward(pred: csr_matrix, seeds: np.ndarray, through: np.ndarray) -> np.ndarray:
    """States reaching ``seeds`` along paths whose other states lie in ``through``."""
    reach = seeds.copy()
    stack = list(np.nonzero(seeds)[0])
    indptr, indices = pred.indptr, pred.indices
    while stack:
        s = stack.pop()
        for p in indices[indptr[s]:indptr[s + 1]]:
            if not reach[p] and through[p]:
                reach[p] = True
                stack.append(p)
    return reach


def forward_reachable(succ: csr_matrix, start: int) -> np.ndarray:
    reach = np.zeros(succ.shape[0], dtype=bool)
    reach[start] = True
    stack = [start]
    indptr, indices = succ.indptr, succ.indices
    while stack:
        s = stack.pop()
        for q in indices[indptr[s]:indptr[s + 1]]:
            if not reach[q]:
                reach[q] = True
                stack.append(q)
    return reach


def prob0_prob1(d: ConcreteDtmc, phi1: np.ndarray, phi2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Masks of states where ``phi1 U phi2`` holds with probability 0 and 1."""
    _, pred = d._graph
    can = _backward(pred, phi2, phi1 & ~phi2)
    no = ~can
    bad = _backward(pred, no, phi1 & ~phi2)
    return no, ~bad


def entry_states(succ: csr_matrix, pred: csr_matrix, initial: int, region: np.ndarray) -> list[int]:
    """Reachable states of ``region`` entered from outside it (or initial)."""
    reach = forward_reachable(succ, initial)
    out = []
    for s in np.nonzero(region & reach)[0]:
        s = int(s)
        if s == initial:
            out.append(s)
            continue
        preds = pred.indices[pred.indptr[s]:pred.indptr[s + 1]]
        if any(reach[p] and not region[p] for p in preds):
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# numerics

def solve_fixpoint(A: csr_matrix, b: np.ndarray, method: str = "auto",
                   tol: float = RESIDUAL_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Solve ``x = A x + b`` (A substochastic with spectral radius < 1)."""
    m = A.shape[0]
    if m == 0:
        return np.zeros(0)
    if method == "auto":
        method = "direct" if m <= DIRECT_SOLVE_LIMIT else "gauss-seidel"
    if method == "direct":
        try:
            x = np.linalg.solve(np.eye(m) - A.toarray(), b)
        except np.linalg.LinAlgError:
            raise NoConvergence(1, float("inf")) from None
        res = np.max(np.abs(A @ x + b - x))
        if not np.isfinite(res) or res > max(tol, 1e-9):
            raise NoConvergence(1, float(res))
        return x
    if method != "gauss-seidel":
        raise ValueError(f"unknown solver method {method!r}")
    A = csr_matrix(A)
    indptr, indices, data = A.indptr, A.indices, A.data
    diag = A.diagonal()
    x = np.zeros(m)
    res = np.inf
    for sweep in range(1, max_sweeps + 1):
        for i in range(m):
            lo, hi = indptr[i], indptr[i + 1]
            acc = b[i] + np.dot(data[lo:hi], x[indices[lo:hi]]) - diag[i] * x[i]
            x[i] = acc / (1.0 - diag[i])
        res = float(np.max(np.abs(A @ x + b - x)))
        if res <= tol:
            return x
    raise NoConvergence(max_sweeps, res)


def prob_until(d: ConcreteDtmc, phi1, phi2, bound: int | None = None,
               method: str = "auto") -> np.ndarray:
    """Per-state probability of ``phi1 U phi2`` (``U<=bound`` in steps if given)."""
    n = d.n_states
    phi1, phi2 = d.mask(phi1), d.mask(phi2)
    if bound is not None:
        if bound < 0:
            raise InputError("step bound must be nonnegative")
        live = phi1 & ~phi2
        x = phi2.astype(float)
        for _ in range(int(bound)):
            x = np.where(phi2, 1.0, np.where(live, d.P @ x, 0.0))
        return np.clip(x, 0.0, 1.0)
    no, yes = prob0_prob1(d, phi1, phi2)
    x = np.zeros(n)
    x[yes] = 1.0
    maybe = ~no & ~yes
    if maybe.any():
        idx = np.nonzero(maybe)[0]
        sub = d.P[idx]
        A = sub[:, idx]
        b = np.asarray(sub[:, np.nonzero(yes)[0]].sum(axis=1)).ravel()
        x[idx] = solve_fixpoint(A, b, method)
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class SatResult:
    value: float
    holds: bool
    sat: np.ndarray
    values: np.ndarray | None = None
    states: tuple[int, ...] = ()  # states the verdict was taken at

    def __bool__(self) -> bool:
        return self.holds


def _state_sat(d: ConcreteDtmc, f) -> np.ndarray:
    n = d.n_states
    if isinstance(f, TrueF):
        return np.ones(n, dtype=bool)
    if isinstance(f, FalseF):
        return np.zeros(n, dtype=bool)
    if isinstance(f, Atom):
        return d.sat(f.name)
    if isinstance(f, Not):
        return ~_state_sat(d, f.arg)
    if isinstance(f, And):
        return _state_sat(d, f.left) & _state_sat(d, f.right)
    if isinstance(f, Or):
        return _state_sat(d, f.left) | _state_sat(d, f.right)
    if isinstance(f, ProbOp):
        vals = _prob_values(d, f.path)
        return np.array([compare(f.cmp, v, f.bound) for v in vals], dtype=bool)
    if isinstance(f, RewardOp):
        raise UnsupportedOperator("reward operators are evaluated on the CTMC")
    raise TypeError(f)  # pragma: no cover


def _prob_values(d: ConcreteDtmc, path) -> np.ndarray:
    if isinstance(path, Next):
        return np.asarray(d.P @ _state_sat(d, path.arg).astype(float)).ravel()
    if isinstance(path, Until):
        b = None if path.bound is None else int(path.bound)
        return prob_until(d, _state_sat(d, path.left), _state_sat(d, path.right), b)
    if isinstance(path, Cumulative):
        raise UnsupportedOperator("cumulative reward needs a CTMC")
    raise TypeError(path)  # pragma: no cover


def evaluation_states(succ, pred, initial: int, labels, vocabulary, from_atom: str | None) -> list[int]:
    if from_atom is None:
        return [initial]
    region = _label_mask(labels, vocabulary, from_atom)
    states = entry_states(succ, pred, initial, region)
    if not states:
        raise NoEntryStates(from_atom)
    return states


def pctl_check(d: ConcreteDtmc, f, from_atom: str | None = None) -> SatResult:
    """Evaluate ``f`` at the initial state, or at the entry states of ``from_atom``.

    With several evaluation states the reported value is the one that decides
    the bound (minimum for lower bounds, maximum for upper bounds).
    """
    succ, pred = d._graph
    where = evaluation_states(succ, pred, d.initial, d.labels, d.vocabulary, from_atom)
    sat = _state_sat(d, f)
    if isinstance(f, ProbOp):
        vals = _prob_values(d, f.path)
        value = worst(f.cmp, (vals[s] for s in where))
        holds = all(compare(f.cmp, vals[s], f.bound) for s in where)
        return SatResult(float(value), holds, sat, vals, tuple(where))
    holds = bool(all(sat[s] for s in where))
    return SatResult(1.0 if holds else 0.0, holds, sat, None, tuple(where))


# ---------------------------------------------------------------------------
# Monte-Carlo oracle

@dataclass(frozen=True)
class SimResult:
    estimate: float
    stderr: float
    runs: int
    hits: int
    max_steps: int


def simulate_dtmc(d: ConcreteDtmc, target, runs: int, seed: int = 0,
                  step_cap: int = 100_000) -> SimResult:
    """Fraction of ``runs`` sampled paths from the initial state that hit ``target``.

    A run stops in a target state or an absorbing state.
    """
    if runs < 1:
        raise InputError("runs must be positive")
    target = d.mask(target)
    stop = target | d.absorbing
    rng = np.random.default_rng(seed)
    P = d.P
    succ = [P.indices[P.indptr[s]:P.indptr[s + 1]] for s in range(d.n_states)]
    cums = [np.cumsum(P.data[P.indptr[s]:P.indptr[s + 1]]) for s in range(d.n_states)]
    state = np.full(runs, d.initial, dtype=np.int64)
    active = ~stop[state]
    steps = 0
    while active.any():
        if steps >= step_cap:
            raise NonTerminatingRun(step_cap)
        idx = np.nonzero(active)[0]
        cur = state[idx]
        u = rng.random(idx.size)
        nxt = np.empty_like(cur)
        for s in np.unique(cur):
            sel = cur == s
            c = cums[s]
            k = np.searchsorted(c, u[sel] * c[-1], side="right")
            nxt[sel] = succ[s][np.minimum(k, c.size - 1)]
        state[idx] = nxt
        active[idx] = ~stop[nxt]
        steps += 1
    hits = int(target[state].sum())
    p = hits / runs
    return SimResult(p, float(np.sqrt(p * (1.0 - p) / runs)), runs, hits, steps)


# ---------------------------------------------------------------------------
# text export / import

def _fmt_prob(p: float) -> str:
    return repr(float(p))


def variable_dtmc_to_text(vd: VariableDtmc) -> str:
    lines = ["vdtmc", f"context {vd.context}", f"states {vd.n_states}", f"initial {vd.initial}"]
    for st in vd.states:
        extra = f" decision={st.decision} options={','.join(st.options)}" if st.variable else ""
        labels = ",".join(sorted(st.labels)) or "-"
        lines.append(f"state {st.id} {st.name} role={st.role} labels={labels}{extra}")
    lines.append("transitions")
    for st in vd.states:
        for o in st.options or (None,):
            for e in vd.rows[(st.id, o)]:
                lines.append(f"{st.id} {o or '-'} {e.dst} {_fmt_prob(e.prob)}")
    return "\n".join(lines) + "\n"


def dtmc_to_text(d: ConcreteDtmc) -> str:
    lines = ["dtmc", f"states {d.n_states}", f"initial {d.initial}"]
    for i, (name, lab) in enumerate(zip(d.names, d.labels)):
        lines.append(f"state {i} {name} labels={','.join(sorted(lab)) or '-'}")
    lines.append("transitions")
    coo = d.P.tocoo()
    for i, j, v in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
        if v != 0.0:
            lines.append(f"{i} - {j} {_fmt_prob(v)}")
    return "\n".join(lines) + "\n"


def dtmc_from_text(text: str) -> ConcreteDtmc:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "dtmc":
        raise InputError("not a concrete DTMC export (missing 'dtmc' header)")
    n = initial = None
    names: dict[int, str] = {}
    labels: dict[int, frozenset[str]] = {}
    rows, cols, vals = [], [], []
    in_trans = False
    try:
        for ln in lines[1:]:
            parts = ln.split()
            if ln == "transitions":
                in_trans = True
            elif in_trans:
                src, opt, dst, p = parts
                if opt != "-":
                    raise InputError("option-indexed rows need a variable DTMC")
                rows.append(int(src))
                cols.append(int(dst))
                vals.append(float(p))
            elif parts[0] == "states":
                n = int(parts[1])
            elif parts[0] == "initial":
                initial = int(parts[1])
            elif parts[0] == "state":
                sid = int(parts[1])
                names[sid] = parts[2]
                lab = parts[3].split("=", 1)[1] if len(parts) > 3 else "-"
                labels[sid] = frozenset() if lab == "-" else frozenset(lab.split(","))
            else:
                raise InputError(f"unexpected line in DTMC export: {ln}")
    except (ValueError, IndexError):
        raise InputError(f"malformed DTMC export line: {ln}") from None
    if n is None or initial is None:
        raise InputError("DTMC export lacks 'states' or 'initial'")
    P = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return from_matrix(P, initial, [labels.get(i, frozenset()) for i in range(n)],
                       [names.get(i, f"s{i}") for i in range(n)])
