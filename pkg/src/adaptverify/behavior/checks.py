"""Safety, trace-refinement and liveness checks over an :class:`Lts`."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import InputError
from ..goalmodel import ASSERTION_SAFETY, Assertion
from .lts import DEFAULT_STATE_CAP, Lts, expand_lts
from .process import ProcessDefs, is_tau

TICK = "✓"  # successful termination as a pseudo-event in traces

SAFETY_KINDS = ("deadlock-free", "nonterminating", "divergence-free", "deterministic")
_SAFETY_ALIASES = {
    "deadlockfree": "deadlock-free",
    "nonterminating": "nonterminating",
    "divergencefree": "divergence-free",
    "deterministic": "deterministic",
}


@dataclass(frozen=True)
class Verdict:
    holds: bool
    property: str
    witness: tuple[str, ...] | None = None  # trace (and lasso loop, if any)
    detail: str = ""
    state: int | None = None

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class Eventually:
    event: str


@dataclass(frozen=True)
class AlwaysEventually:
    event: str


def _bfs_paths(lts: Lts, allowed=None) -> dict[int, tuple[int, str] | None]:
    """Parent pointers of a BFS from the initial state (restricted to ``allowed`` edges)."""
    parent: dict[int, tuple[int, str] | None] = {lts.initial: None}
    queue = deque([lts.initial])
    while queue:
        s = queue.popleft()
        for t in lts.out(s):
            if allowed is not None and not allowed(t):
                continue
            if t.dst not in parent:
                parent[t.dst] = (s, t.label)
                queue.append(t.dst)
    return parent


def _trace_to(parent: dict[int, tuple[int, str] | None], s: int) -> tuple[str, ...]:
    out = []
    while parent[s] is not None:
        p, label = parent[s]
        out.append(label)
        s = p
    return tuple(reversed(out))


def check_safety(lts: Lts, kind: str) -> Verdict:
    kind = _SAFETY_ALIASES.get(kind, kind)
    if kind not in SAFETY_KINDS:
        raise InputError(f"unknown safety property '{kind}'")
    parent = _bfs_paths(lts)
    order = sorted(parent)
    if kind in ("deadlock-free", "nonterminating"):
        for s in order:
            if lts.out(s):
                continue
            if kind == "deadlock-free" and s in lts.terminated:
                continue
            what = "terminated" if s in lts.terminated else "deadlocked"
            return Verdict(False, kind, _trace_to(parent, s), f"state {s} is {what}", s)
        return Verdict(True, kind)
    if kind == "deterministic":
        for s in order:
            seen: dict[str, int] = {}
            for t in lts.out(s):
                if t.label in seen and seen[t.label] != t.dst:
                    return Verdict(False, kind, _trace_to(parent, s) + (t.label,),
                                   f"state {s} has two '{t.label}' successors", s)
                seen[t.label] = t.dst
        return Verdict(True, kind)
    # divergence-free: no reachable cycle of tau transitions
    taus = [t for t in lts.transitions if is_tau(t.label) and t.src in parent]
    for t in taus:
        if t.src == t.dst:
            return Verdict(False, kind, _trace_to(parent, t.src) + (t.label,), f"tau self-loop at {t.src}", t.src)
    if taus:
        n = lts.n_states
        g = csr_matrix((np.ones(len(taus)), ([t.src for t in taus], [t.dst for t in taus])), shape=(n, n))
        _, comp = connected_components(g, directed=True, connection="strong")
        sizes = np.bincount(comp)
        for t in taus:
            if comp[t.src] == comp[t.dst] and sizes[comp[t.src]] > 1:
                return Verdict(False, kind, _trace_to(parent, t.src), f"tau cycle through state {t.src}", t.src)
    return Verdict(True, kind)


# ---------------------------------------------------------------------------
# trace refinement

def _tau_closure(lts: Lts, states) -> frozenset[int]:
    out = set(states)
    stack = list(states)
    while stack:
        s = stack.pop()
        for t in lts.out(s):
            if is_tau(t.label) and t.dst not in out:
                out.add(t.dst)
                stack.append(t.dst)
    return frozenset(out)


def _visible_moves(lts: Lts, subset: frozenset[int]) -> dict[str, frozenset[int]]:
    moves: dict[str, set[int]] = {}
    for s in subset:
        for t in lts.out(s):
            if not is_tau(t.label):
                moves.setdefault(t.label, set()).add(t.dst)
    return {a: _tau_closure(lts, d) for a, d in moves.items()}


def lts_refines(impl: Lts, spec: Lts) -> Verdict:
    """traces(impl) ⊆ traces(spec) with tau hidden and termination as a visible tick."""
    start = (_tau_closure(impl, [impl.initial]), _tau_closure(spec, [spec.initial]))
    parent: dict = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        isub, ssub = cur
        if isub & impl.terminated and not (ssub & spec.terminated):
            return Verdict(False, "refines", _pair_trace(parent, cur) + (TICK,),
                           "implementation may terminate where the specification cannot")
        smoves = _visible_moves(spec, ssub)
        imoves = _visible_moves(impl, isub)
        for a in sorted(imoves):
            if a not in smoves:
                return Verdict(False, "refines", _pair_trace(parent, cur) + (a,),
                               f"specification cannot perform '{a}' here")
            nxt = (imoves[a], smoves[a])
            if nxt not in parent:
                parent[nxt] = (cur, a)
                queue.append(nxt)
    return Verdict(True, "refines")


def _pair_trace(parent, node) -> tuple[str, ...]:
    out = []
    while parent[node] is not None:
        node, a = parent[node]
        out.append(a)
    return tuple(reversed(out))


def check_refinement(defs: ProcessDefs, impl: str, spec: str, state_cap: int = DEFAULT_STATE_CAP) -> Verdict:
    return lts_refines(expand_lts(defs, impl, state_cap), expand_lts(defs, spec, state_cap))


# ---------------------------------------------------------------------------
# liveness under strong fairness

def _closed_components(lts: Lts, region: set[int], event: str) -> list[set[int]]:
    """SCCs of the event-free graph inside ``region`` that a fair run can never leave."""
    idx = sorted(region)
    pos = {s: i for i, s in enumerate(idx)}
    rows, cols = [], []
    for s in idx:
        for t in lts.out(s):
            if t.label != event and t.dst in pos:
                rows.append(pos[s])
                cols.append(pos[t.dst])
    n = len(idx)
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, comp = connected_components(g, directed=True, connection="strong")
    groups: dict[int, set[int]] = {}
    for i, c in enumerate(comp):
        groups.setdefault(int(c), set()).add(idx[i])
    out = []
    for members in groups.values():
        cyclic = len(members) > 1 or any(t.dst in members and t.label != event
                                         for s in members for t in lts.out(s))
        if not cyclic:
            continue
        closed = all(t.dst in members and t.label != event for s in members for t in lts.out(s))
        if closed:
            out.append(members)
    return out


def _loop_in(lts: Lts, members: set[int], start: int, event: str) -> tuple[str, ...]:
    """Shortest event-free cycle through ``start`` inside ``members``."""
    parent: dict[int, tuple[int, str]] = {}
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for t in lts.out(s):
            if t.dst not in members or t.label == event:
                continue
            if t.dst == start:
                path = [t.label]
                while s != start:
                    p, lab = parent[s]
                    path.append(lab)
                    s = p
                return tuple(reversed(path))
            if t.dst not in seen:
                seen.add(t.dst)
                parent[t.dst] = (s, t.label)
                queue.append(t.dst)
    return ()  # pragma: no cover


def check_temporal(lts: Lts, assertion: Eventually | AlwaysEventually) -> Verdict:
    """Liveness from the LTS's initial state, assuming strongly fair scheduling.

    ``Eventually(e)``: every fair maximal run contains ``e``. ``AlwaysEventually(e)``:
    from every reachable state, every fair maximal run contains ``e``. A run may
    stay forever only inside a strongly connected set that offers no exit; a
    terminal state ends a run.
    """
    event = assertion.event
    name = "eventually" if isinstance(assertion, Eventually) else "always-eventually"
    if isinstance(assertion, Eventually):
        parent = _bfs_paths(lts, allowed=lambda t: t.label != event)
    else:
        parent = _bfs_paths(lts)
    region = set(parent)
    for s in sorted(region):
        if not lts.out(s):
            return Verdict(False, name, _trace_to(parent, s), f"run ends in state {s} without '{event}'", s)
    comps = _closed_components(lts, region, event)
    if comps:
        members = min(comps, key=min)
        entry = min(members, key=lambda s: (len(_trace_to(parent, s)), s))
        loop = _loop_in(lts, members, entry, event)
        return Verdict(False, name, _trace_to(parent, entry) + ("(",) + loop + (")*",),
                       f"'{event}' can be avoided forever in a cycle through state {entry}", entry)
    return Verdict(True, name)


# ---------------------------------------------------------------------------
# model assertions

def check_assertion(defs: ProcessDefs, a: Assertion, state_cap: int = DEFAULT_STATE_CAP) -> Verdict:
    if a.kind in ASSERTION_SAFETY:
        return check_safety(expand_lts(defs, a.process, state_cap), a.kind)
    if a.kind == "refines":
        return check_refinement(defs, a.process, a.argument, state_cap)
    lts = expand_lts(defs, a.process, state_cap)
    prop = Eventually(a.argument) if a.kind == "eventually" else AlwaysEventually(a.argument)
    return check_temporal(lts, prop)
