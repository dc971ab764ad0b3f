"""Rewarded CTMCs derived from concrete DTMCs, and CSL checking.

Derivation: absorbing failure states (and transitions into them) are
removed, every remaining transition gets rate ``1/tc`` of its tag (``1/ftc``
for failure transitions that feed a healing loop), and utility / energy tag
values become per-traversal transition rewards.

Transient probabilities use uniformization with rate ``q = 1.02 * max exit
rate``; Poisson weights come from scipy and the sum is truncated once the
remaining Poisson tail drops below ``1e-10``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags, identity
from scipy.stats import poisson

from .dtmc import (
    SUCCESS, ConcreteDtmc, SatResult, _as_mask, _label_mask, evaluation_states, forward_reachable,
    from_matrix, prob0_prob1, prob_until, solve_fixpoint,
)
from .errors import (
    InputError, MissingTag, MissingTimeCost, NonStochasticModel, UnsupportedOperator, ZeroTimeCost,
)
from .goalmodel import TaggedGoalModel, tag_of
from .logic import (
    And, Atom, Cumulative, FalseF, Next, Not, Or, ProbOp, RewardOp, TrueF, Until, compare, worst,
)

UNIFORMIZATION_FACTOR = 1.02
POISSON_TAIL = 1e-10
DENSE_LIMIT = 128
REWARD_SHORT = {"utility": "u", "energy": "ec"}


@dataclass(frozen=True, eq=False)
class ConcreteCtmc:
    names: tuple[str, ...]
    initial: int
    R: csr_matrix
    labels: tuple[frozenset[str], ...]
    vocabulary: frozenset[str] = frozenset()
    origin: tuple[int, ...] = ()  # DTMC state behind each CTMC state

    @property
    def n_states(self) -> int:
        return len(self.names)

    @cached_property
    def exit_rates(self) -> np.ndarray:
        return np.asarray(self.R.sum(axis=1)).ravel()

    @cached_property
    def absorbing(self) -> np.ndarray:
        return self.exit_rates == 0.0

    @cached_property
    def _graph(self) -> tuple[csr_matrix, csr_matrix]:
        g = self.R.copy()
        g.eliminate_zeros()
        return g.tocsr(), g.T.tocsr()

    def sat(self, atom: str) -> np.ndarray:
        return _label_mask(self.labels, self.vocabulary, atom)

    def mask(self, states) -> np.ndarray:
        return _as_mask(states, self.n_states)

    def embedded(self) -> csr_matrix:
        """Jump chain; absorbing states get a probability-1 self-loop."""
        E = self.exit_rates
        inv = np.divide(1.0, E, out=np.zeros_like(E), where=E > 0)
        P = diags(inv) @ self.R
        P = P + diags((E == 0).astype(float))
        return csr_matrix(P)


@dataclass(frozen=True, eq=False)
class RewardStructure:
    """Per-traversal rewards on transitions (same sparsity as the rate matrix)."""
    name: str
    matrix: csr_matrix

    def rate_vector(self, c: ConcreteCtmc) -> np.ndarray:
        """Expected reward earned per unit time in each state."""
        return np.asarray(c.R.multiply(self.matrix).sum(axis=1)).ravel()

    def scaled(self, k: float) -> "RewardStructure":
        return RewardStructure(self.name, csr_matrix(self.matrix * k))


RewardStructures = Mapping[str, RewardStructure]


def from_rates(R, initial: int = 0, labels=None, names=None) -> ConcreteCtmc:
    R = csr_matrix(R, dtype=float)
    n = R.shape[0]
    if R.nnz and R.data.min() < 0:
        raise NonStochasticModel("negative rate")
    labs = tuple(frozenset(x) for x in labels) if labels is not None else tuple(frozenset() for _ in range(n))
    nm = tuple(names) if names is not None else tuple(f"s{i}" for i in range(n))
    return ConcreteCtmc(nm, initial, R, labs, frozenset().union(*labs) if labs else frozenset(),
                        tuple(range(n)))


def reward_structure(name: str, c: ConcreteCtmc, values) -> RewardStructure:
    """Reward matrix from a dense array or ``{(src, dst): value}`` mapping."""
    n = c.n_states
    if isinstance(values, Mapping):
        keys = list(values)
        M = coo_matrix(([values[k] for k in keys], ([k[0] for k in keys], [k[1] for k in keys])),
                       shape=(n, n))
    else:
        M = values
    M = csr_matrix(M, dtype=float)
    if M.nnz and M.data.min() < 0:
        raise InputError(f"reward structure '{name}' has a negative entry")
    return RewardStructure(name, M)


def derive_ctmc(d: ConcreteDtmc, model: TaggedGoalModel, context: str,
                assignment=None) -> tuple[ConcreteCtmc, dict[str, RewardStructure]]:
    """Rates from tag time costs; utility and energy as transition rewards."""
    valuation = assignment.valuation if assignment is not None else {}
    succ, _ = d._graph
    reach = forward_reachable(succ, d.initial)
    success = np.array([SUCCESS in lab for lab in d.labels])
    failure = d.absorbing & ~success
    keep = reach & ~failure
    kept = [int(s) for s in np.nonzero(keep)[0]]
    index = {s: i for i, s in enumerate(kept)}
    n = len(kept)
    acc: dict[tuple[int, int], list[tuple[float, float, float]]] = {}
    cache: dict = {}
    for e in d.edges:
        if e.kind == "absorb" or e.src not in index or e.dst not in index:
            continue
        if e.task is None:
            raise MissingTimeCost(f"{d.names[e.src]}->{d.names[e.dst]}")
        key = (e.task, e.option)
        tag = cache.get(key)
        if tag is None:
            try:
                tag = tag_of(model, e.task, context, e.option, valuation)
            except MissingTag:
                raise MissingTimeCost(e.task) from None
            cache[key] = tag
        if e.kind == "failure":
            tc, u, en = tag.fail_time_cost, tag.fail_utility, tag.fail_energy_cost
        else:
            tc, u, en = tag.time_cost, tag.utility, tag.energy_cost
        if not tc > 0:
            raise ZeroTimeCost(e.task)
        rate = 1.0 / tc
        acc.setdefault((index[e.src], index[e.dst]), []).append((rate, u, en))
    keys = sorted(acc)
    rows = [k[0] for k in keys]
    cols = [k[1] for k in keys]
    merged = [_merge(acc[k]) for k in keys]
    R = coo_matrix(([m[0] for m in merged], (rows, cols)), shape=(n, n)).tocsr()
    U = coo_matrix(([m[1] for m in merged], (rows, cols)), shape=(n, n)).tocsr()
    EN = coo_matrix(([m[2] for m in merged], (rows, cols)), shape=(n, n)).tocsr()
    c = ConcreteCtmc(tuple(d.names[s] for s in kept), index[d.initial], R,
                     tuple(d.labels[s] for s in kept), d.vocabulary, tuple(kept))
    return c, {"utility": RewardStructure("utility", U), "energy": RewardStructure("energy", EN)}


def _merge(parts: list[tuple[float, float, float]]) -> tuple[float, float, float]:
    """Parallel transitions between the same pair: rates add, rewards are rate-weighted."""
    if len(parts) == 1:
        return parts[0]
    rate = sum(p[0] for p in parts)
    return (rate, sum(p[0] * p[1] for p in parts) / rate, sum(p[0] * p[2] for p in parts) / rate)


# ---------------------------------------------------------------------------
# uniformization

def _uniformized(R: csr_matrix) -> tuple[object, float]:
    E = np.asarray(R.sum(axis=1)).ravel()
    q = UNIFORMIZATION_FACTOR * float(E.max()) if E.size else 0.0
    if q == 0.0:
        return None, 0.0
    n = R.shape[0]
    P = identity(n, format="csr") + (R - diags(E)) / q
    P = P.toarray() if n <= DENSE_LIMIT else csr_matrix(P)
    return P, q


def poisson_terms(lam: float, tail: float = POISSON_TAIL) -> tuple[np.ndarray, np.ndarray]:
    """Poisson(lam) weights ``w[k]`` and upper tails ``P(N > k)`` for k = 0..K.

    K is the first index where the upper tail drops below ``tail``.
    """
    K = int(poisson.isf(tail, lam)) if lam > 0 else 0
    while poisson.sf(K, lam) >= tail:
        K += 1
    ks = np.arange(K + 1)
    return poisson.pmf(ks, lam), poisson.sf(ks, lam)


def transient_until(c: ConcreteCtmc, phi1, phi2, t: float) -> np.ndarray:
    """Per-state probability of ``phi1 U<=t phi2``."""
    phi1, phi2 = c.mask(phi1), c.mask(phi2)
    if t < 0:
        raise InputError("time bound must be nonnegative")
    if math.isinf(t):
        return prob_until(_embedded_dtmc(c), phi1, phi2)
    x = phi2.astype(float)
    if t == 0:
        return x
    live = phi1 & ~phi2
    R = csr_matrix(diags(live.astype(float)) @ c.R)
    P, q = _uniformized(R)
    if P is None:
        return x
    w, _ = poisson_terms(q * t)
    w = w / w.sum()  # spread the truncated tail so target states stay at 1
    acc = w[0] * x
    for k in range(1, w.size):
        x = P @ x
        acc += w[k] * x
    return np.clip(acc, 0.0, 1.0)


def _embedded_dtmc(c: ConcreteCtmc) -> ConcreteDtmc:
    return from_matrix(c.embedded(), c.initial, c.labels, c.names)


def reachability_reward(c: ConcreteCtmc, reward: RewardStructure, target) -> np.ndarray:
    """Expected reward accumulated before first entering ``target``.

    ``inf`` where the target is not reached almost surely.
    """
    target = c.mask(target)
    n = c.n_states
    d = _embedded_dtmc(c)
    _, yes = prob0_prob1(d, np.ones(n, dtype=bool), target)
    E = c.exit_rates
    rho = reward.rate_vector(c)
    r = np.divide(rho, E, out=np.zeros(n), where=E > 0)
    x = np.full(n, np.inf)
    x[target] = 0.0
    maybe = yes & ~target
    if maybe.any():
        idx = np.nonzero(maybe)[0]
        A = csr_matrix(d.P[idx][:, idx])
        x[idx] = solve_fixpoint(A, r[idx])
    return x


def cumulative_reward_vector(c: ConcreteCtmc, reward: RewardStructure, t: float) -> np.ndarray:
    """Expected reward earned within ``[0, t]`` from every state.

    Occupancy form: ``(1/q) * sum_k P(N > k) * P_unif^k * rho`` with N ~ Poisson(q t).
    """
    if t < 0:
        raise InputError("time bound must be nonnegative")
    n = c.n_states
    if t == 0 or n == 0:
        return np.zeros(n)
    if math.isinf(t):
        raise UnsupportedOperator("cumulative reward needs a finite time bound")
    rho = reward.rate_vector(c)
    P, q = _uniformized(c.R)
    if P is None:
        return np.zeros(n)
    _, tails = poisson_terms(q * t)
    x = rho.copy()
    acc = tails[0] * x
    for k in range(1, tails.size):
        x = P @ x
        acc += tails[k] * x
    return acc / q


def cumulative_reward(c: ConcreteCtmc, reward: RewardStructure, t: float) -> float:
    return float(cumulative_reward_vector(c, reward, t)[c.initial])


# ---------------------------------------------------------------------------
# CSL

def _state_sat(c: ConcreteCtmc, rewards: RewardStructures, f) -> np.ndarray:
    n = c.n_states
    if isinstance(f, TrueF):
        return np.ones(n, dtype=bool)
    if isinstance(f, FalseF):
        return np.zeros(n, dtype=bool)
    if isinstance(f, Atom):
        return c.sat(f.name)
    if isinstance(f, Not):
        return ~_state_sat(c, rewards, f.arg)
    if isinstance(f, And):
        return _state_sat(c, rewards, f.left) & _state_sat(c, rewards, f.right)
    if isinstance(f, Or):
        return _state_sat(c, rewards, f.left) | _state_sat(c, rewards, f.right)
    if isinstance(f, (ProbOp, RewardOp)):
        vals = _values(c, rewards, f)
        return np.array([compare(f.cmp, v, f.bound) for v in vals], dtype=bool)
    raise TypeError(f)  # pragma: no cover


def _values(c: ConcreteCtmc, rewards: RewardStructures, f) -> np.ndarray:
    if isinstance(f, ProbOp):
        path = f.path
        if isinstance(path, Next):
            P = c.embedded()
            return np.asarray(P @ _state_sat(c, rewards, path.arg).astype(float)).ravel()
        t = math.inf if path.bound is None else path.bound
        return transient_until(c, _state_sat(c, rewards, path.left),
                               _state_sat(c, rewards, path.right), t)
    if f.reward not in rewards:
        raise InputError(f"unknown reward structure '{f.reward}'")
    rew = rewards[f.reward]
    if isinstance(f.path, Cumulative):
        return cumulative_reward_vector(c, rew, f.path.bound)
    if not isinstance(f.path.left, TrueF):
        raise UnsupportedOperator("reachability rewards take the form R[ true U phi ] or R[ F phi ]")
    return reachability_reward(c, rew, _state_sat(c, rewards, f.path.right))


def csl_check(c: ConcreteCtmc, rewards: RewardStructures, f, from_atom: str | None = None) -> SatResult:
    """Evaluate ``f`` at the initial state (or the entry states of ``from_atom``)."""
    succ, pred = c._graph
    where = evaluation_states(succ, pred, c.initial, c.labels, c.vocabulary, from_atom)
    sat = _state_sat(c, rewards, f)
    if isinstance(f, (ProbOp, RewardOp)):
        vals = _values(c, rewards, f)
        value = worst(f.cmp, (vals[s] for s in where))
        holds = all(compare(f.cmp, vals[s], f.bound) for s in where)
        return SatResult(float(value), holds, sat, vals, tuple(where))
    holds = bool(all(sat[s] for s in where))
    return SatResult(1.0 if holds else 0.0, holds, sat, None, tuple(where))


# ---------------------------------------------------------------------------
# export

def _fmt(v: float) -> str:
    return repr(float(v))


def ctmc_to_text(c: ConcreteCtmc, rewards: RewardStructures) -> str:
    lines = ["ctmc", f"states {c.n_states}", f"initial {c.initial}",
             "rewards " + " ".join(sorted(rewards))]
    for i, (name, lab) in enumerate(zip(c.names, c.labels)):
        lines.append(f"state {i} {name} labels={','.join(sorted(lab)) or '-'}")
    lines.append("transitions")
    coo = c.R.tocoo()
    mats = {k: rewards[k].matrix.tocsr() for k in sorted(rewards)}
    for i, j, r in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
        parts = [f"{i} {j} rate={_fmt(r)}"]
        for k, M in mats.items():
            parts.append(f"{REWARD_SHORT.get(k, k)}={_fmt(M[i, j])}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"
