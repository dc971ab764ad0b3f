from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import csr_matrix

from adaptverify.decision import build_variable_dtmc, decision_space
from adaptverify.dtmc import (
    Assignment, dtmc_from_text, dtmc_to_text, from_matrix, instantiate_dtmc, pctl_check,
    prob0_prob1, prob_until, simulate_dtmc, solve_fixpoint, variable_dtmc_to_text,
)
from adaptverify.errors import (
    IncompleteAssignment, InvalidAssignment, NoConvergence, NonStochasticModel, UnknownAtom,
    UnknownOption,
)
from adaptverify.goalmodel import parse_model
from adaptverify.logic import parse_formula

from chains import random_absorbing_chain

R1 = parse_formula('P>=0.85 [ true U "success" ]', "pctl")
R2 = parse_formula('P>=0.90 [ "locate" U "success" ]', "pctl")


def _structures(model, ctx):
    return list(dict.fromkeys(a.structural for a in decision_space(model, ctx).candidates()))


def _instances(model, vd, ctx):
    return [(s, instantiate_dtmc(vd, Assignment(ctx, s))) for s in _structures(model, ctx)]


def _chain_model(fps):
    names = [f"t{i}" for i in range(len(fps))]
    rel = (f"DecompAnd G -> {','.join(names)} [seq]" if len(names) > 1
           else f"MeansEnds G -> {names[0]}")
    nodes = 'G Goal "g"\n' + "\n".join(f'{n} Task "{n}"' for n in names)
    tags = "\n".join(f"{n} @C1 fp={fp} u=1 tc=1 ec=1" for n, fp in zip(names, fps))
    return parse_model(f'[nodes]\n{nodes}\n[relations]\n{rel}\n[contexts]\nC1 "x"\n'
                       f'[tags]\n{tags}\n[root]\nG\n')


def _reliability_oracle(model, ctx, structural):
    """Closed-form success probability of a MobIS structure.

    Each task succeeds independently with 1 - fp. A failed locate attempt runs the
    check chain and, if that succeeds, retries from the start of locating, so the
    locate stage succeeds with q / (1 - (1 - q) h).
    """
    opts = dict(structural)

    def ok(task, option=None):
        return 1.0 - model.find_tag(task, ctx, option).fp

    reg = ok("register.m") * ok("register.a") * ok("register.p") * ok("register", opts["register"])
    q = ok("locate.m") * ok("locate.a") * ok("locate.p") * ok("locate", opts["locate"])
    h = ok("check.m") * ok("check.a") * ok("check.p") * ok("check")
    loc = q / (1.0 - (1.0 - q) * h)
    pre = ok("describeInterest") * ok("UAccessI", opts["mode"])
    if opts["mode"] == "Online":
        tail = (ok("ConfigForm", opts["form"]) * ok("time.p") * ok("Send") * ok("buffer.p")
                * ok("Load") * ok("persistToDB"))
    else:
        tail = ok("SearchDB", opts["search"]) * ok("filterInfo")
    after_locate = ok("locate", opts["locate"]) * pre * tail
    return reg * loc * pre * tail, after_locate


# ---------------------------------------------------------------------------
# generation

def test_mobis_c1_structure(vd_c1):
    names = {vd_c1.states[s].decision for s in vd_c1.variable_states}
    assert names == {"register", "locate", "mode", "form", "search"}
    assert len(vd_c1.absorbing_states) == 5
    assert not (vd_c1.variable_states & vd_c1.invariable_states)
    assert all(len(vd_c1.states[s].options) >= 2 for s in vd_c1.variable_states)


def test_initial_split(vd_c1):
    row = {e.kind: e.prob for e in vd_c1.row(vd_c1.initial)}
    assert row == {"success": 0.9995, "failure": 0.0005}


def test_rows_stochastic_for_every_option(vd_c1, vd_c2):
    for vd in (vd_c1, vd_c2):
        for st_ in vd.states:
            for o in st_.options or (None,):
                assert abs(sum(e.prob for e in vd.row(st_.id, o)) - 1.0) <= 1e-9


def test_zero_fp_task_gives_two_state_chain():
    _, vd = build_variable_dtmc(_chain_model([0]), "C1")
    d = instantiate_dtmc(vd, Assignment.of("C1"))
    assert d.n_states == 2
    assert d.P.toarray().tolist() == [[0.0, 1.0], [0.0, 1.0]]


def test_three_step_chain():
    _, vd = build_variable_dtmc(_chain_model([0.1, 0.1, 0.1]), "C1")
    d = instantiate_dtmc(vd, Assignment.of("C1"))
    assert pctl_check(d, parse_formula('P>=0.7 [ F "success" ]', "pctl")).value == pytest.approx(0.729, abs=1e-12)


def test_variable_text_export(vd_c2):
    text = variable_dtmc_to_text(vd_c2)
    assert text.startswith("vdtmc\ncontext C2\n")
    assert "decision=locate options=GPS,GSM" in text


# ---------------------------------------------------------------------------
# instantiation

def _locate_failure(vd, ctx, option):
    s = next(s for s in vd.variable_states if vd.states[s].decision == "locate")
    a = Assignment.of(ctx, {"register": "Internet", "locate": option, "mode": "Offline",
                            "search": "Text"})
    d = instantiate_dtmc(vd, a)
    return sum(e.prob for e in d.edges if e.src == s and e.kind == "failure")


def test_instantiate_c1_gps(vd_c1):
    assert _locate_failure(vd_c1, "C1", "GPS") == 0.05


def test_instantiate_c2_gsm(vd_c2):
    assert _locate_failure(vd_c2, "C2", "GSM") == 0.02


def test_every_instantiation_has_five_absorbing_states(mobis, vd_c1, vd_c2):
    for ctx, vd in (("C1", vd_c1), ("C2", vd_c2)):
        for _, d in _instances(mobis, vd, ctx):
            assert int(d.absorbing.sum()) == 5
            sums = np.asarray(d.P.sum(axis=1)).ravel()
            assert np.max(np.abs(sums - 1.0)) <= 1e-9


def test_no_variable_states_identity():
    _, vd = build_variable_dtmc(_chain_model([0.2, 0.3]), "C1")
    d = instantiate_dtmc(vd, Assignment.of("C1"))
    expected = {(s.id, e.dst, e.prob) for s in vd.states for e in vd.row(s.id)}
    coo = d.P.tocoo()
    assert set(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())) == expected


def test_assignment_errors(vd_c2):
    with pytest.raises(UnknownOption):
        instantiate_dtmc(vd_c2, Assignment.of("C2", {"locate": "Radar"}))
    with pytest.raises(InvalidAssignment):
        instantiate_dtmc(vd_c2, Assignment.of("C2", {"colour": "red"}))
    with pytest.raises(IncompleteAssignment):
        instantiate_dtmc(vd_c2, Assignment.of("C2", {"register": "SMS"}))


def test_assignment_json_round_trip():
    a = Assignment.of("C2", {"register": "Internet", "locate": "GSM"}, {"T": 9.0, "B": 15.0})
    assert Assignment.from_json(a.to_json()) == a
    assert a.describe() == "Internet/GSM/T=9/B=15"


# ---------------------------------------------------------------------------
# reachability

def test_deterministic_chain():
    d = from_matrix([[0, 1, 0], [0, 0, 1], [0, 0, 1]], labels=[(), (), ("success",)])
    assert pctl_check(d, parse_formula('P>=1 [ true U "success" ]', "pctl")).value == 1.0
    assert pctl_check(d, parse_formula('P>=1 [ true U "success" ]', "pctl")).holds


def test_one_step_split():
    d = from_matrix([[0, 0.9, 0.1], [0, 1, 0], [0, 0, 1]], labels=[(), ("succ",), ("fail",)])
    assert prob_until(d, np.ones(3, bool), d.sat("succ"))[0] == pytest.approx(0.9, abs=1e-15)


def test_unknown_atom():
    d = from_matrix([[1.0]], labels=[("a",)])
    with pytest.raises(UnknownAtom):
        d.sat("b")


def test_non_stochastic_rejected():
    with pytest.raises(NonStochasticModel):
        from_matrix([[0.5, 0.4], [0, 1]])


def test_gauss_seidel_matches_direct():
    P, initial = random_absorbing_chain(7, 25, 3)
    d = from_matrix(P, initial)
    every = np.ones(25, bool)
    target = d.mask([int(np.nonzero(d.absorbing)[0][0])])
    x1 = prob_until(d, every, target, method="direct")
    x2 = prob_until(d, every, target, method="gauss-seidel")
    assert np.max(np.abs(x1 - x2)) < 1e-9


def test_solver_failures():
    A = csr_matrix(np.array([[0.5, 0.4], [0.3, 0.6]]))
    with pytest.raises(NoConvergence):
        solve_fixpoint(A, np.array([0.1, 0.1]), "gauss-seidel", max_sweeps=1)
    with pytest.raises(NoConvergence):
        solve_fixpoint(csr_matrix(np.eye(2)), np.ones(2), "direct")


def test_mobis_reliability_matches_closed_form(mobis, vd_c1, vd_c2):
    for ctx, vd in (("C1", vd_c1), ("C2", vd_c2)):
        for s, d in _instances(mobis, vd, ctx):
            r1, r2 = _reliability_oracle(mobis, ctx, s)
            assert pctl_check(d, R1).value == pytest.approx(r1, abs=1e-12)
            assert pctl_check(d, R2, "locate").value == pytest.approx(r2, abs=1e-12)


# values frozen from the closed-form oracle above (C2, rounded to 4 places)
C2_RELIABILITY = {
    ("Internet", "GPS", "Online", "Media"): 0.8857,
    ("Internet", "GPS", "Online", "Text"): 0.9229,
    ("Internet", "GPS", "Offline", "Text"): 0.9235,
    ("Internet", "GPS", "Offline", "Voice"): 0.8952,
    ("Internet", "GSM", "Online", "Media"): 0.8898,
    ("Internet", "GSM", "Online", "Text"): 0.9273,
    ("Internet", "GSM", "Offline", "Text"): 0.9278,
    ("Internet", "GSM", "Offline", "Voice"): 0.8994,
}


def test_frozen_c2_reliability(mobis, vd_c2):
    got = {}
    for s, d in _instances(mobis, vd_c2, "C2"):
        o = dict(s)
        key = (o["register"], o["locate"], o["mode"], o.get("form") or o.get("search"))
        got[key] = round(pctl_check(d, R1).value, 4)
    for key, v in C2_RELIABILITY.items():
        assert got[key] == v
    assert all(v < 0.85 for k, v in got.items() if k[0] == "SMS")


# ---------------------------------------------------------------------------
# brute-force path enumeration oracle

def _enumerate_until(P, phi1, phi2, start, bound=None):
    """Sum of probabilities of all finite paths witnessing phi1 U phi2 (acyclic chains)."""
    n = P.shape[0]
    total = 0.0
    stack = [(start, 1.0, 0)]
    while stack:
        s, p, k = stack.pop()
        if phi2[s]:
            total += p
            continue
        if not phi1[s] or P[s, s] == 1.0 or (bound is not None and k >= bound):
            continue
        for j in range(n):
            if P[s, j] > 0:
                stack.append((j, p * P[s, j], k + 1))
    return total


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 8), bound=st.integers(0, 8))
def test_until_matches_path_enumeration(seed, n, bound):
    P, initial = random_absorbing_chain(seed, n, n_absorbing=2, dag=True)
    rng = np.random.default_rng(seed)
    phi1 = rng.random(n) < 0.8
    phi2 = rng.random(n) < 0.3
    d = from_matrix(P, initial)
    unb = prob_until(d, phi1, phi2)
    bnd = prob_until(d, phi1, phi2, bound)
    brute = np.array([_enumerate_until(P, phi1, phi2, s) for s in range(n)])
    brute_b = np.array([_enumerate_until(P, phi1, phi2, s, bound) for s in range(n)])
    assert np.max(np.abs(unb - brute)) <= 1e-9
    assert np.max(np.abs(bnd - brute_b)) <= 1e-9
    no, yes = prob0_prob1(d, phi1, phi2)
    assert np.array_equal(no, brute == 0.0)
    assert np.all(np.abs(brute[yes] - 1.0) <= 1e-9)


# ---------------------------------------------------------------------------
# invariants

@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 30), k=st.integers(1, 4))
def test_total_absorption_mass(seed, n, k):
    P, initial = random_absorbing_chain(seed, n, n_absorbing=k)
    d = from_matrix(P, initial)
    every = np.ones(n, bool)
    mass = sum(prob_until(d, every, d.mask([s]))[initial] for s in np.nonzero(d.absorbing)[0])
    assert abs(mass - 1.0) <= 1e-9


def test_mobis_absorption_mass(mobis, vd_c1, vd_c2):
    for ctx, vd in (("C1", vd_c1), ("C2", vd_c2)):
        for _, d in _instances(mobis, vd, ctx):
            every = np.ones(d.n_states, bool)
            mass = sum(prob_until(d, every, d.mask([s]))[d.initial] for s in np.nonzero(d.absorbing)[0])
            assert abs(mass - 1.0) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 30))
def test_bounded_until_monotone(seed, n):
    P, initial = random_absorbing_chain(seed, n, n_absorbing=2)
    rng = np.random.default_rng(seed ^ 0x5EED)
    phi1 = rng.random(n) < 0.85
    phi2 = rng.random(n) < 0.2
    d = from_matrix(P, initial)
    unb = prob_until(d, phi1, phi2)
    prev = np.zeros(n)
    for t in range(0, 40, 3):
        cur = prob_until(d, phi1, phi2, t)
        assert np.all(cur >= prev - 1e-12)
        assert np.all(cur <= unb + 1e-9)
        prev = cur


# ---------------------------------------------------------------------------
# Monte-Carlo oracle

def test_simulation_deterministic_chain():
    d = from_matrix([[0, 1, 0], [0, 0, 1], [0, 0, 1]], labels=[(), (), ("success",)])
    for seed in (0, 1, 99):
        r = simulate_dtmc(d, d.sat("success"), 1000, seed)
        assert r.estimate == 1.0 and r.stderr == 0.0


def test_simulation_binomial_split():
    d = from_matrix([[0, 0.9, 0.1], [0, 1, 0], [0, 0, 1]], labels=[(), ("succ",), ("fail",)])
    r = simulate_dtmc(d, d.sat("succ"), 1_000_000, seed=3)
    assert abs(r.estimate - 0.9) <= 3 * r.stderr


def test_simulation_is_seeded():
    d = from_matrix([[0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]], labels=[(), ("a",), ()])
    assert simulate_dtmc(d, d.sat("a"), 5000, 11) == simulate_dtmc(d, d.sat("a"), 5000, 11)


# ---------------------------------------------------------------------------
# export

def test_text_round_trip(mobis, vd_c2):
    for _, d in _instances(mobis, vd_c2, "C2")[:4]:
        back = dtmc_from_text(dtmc_to_text(d))
        assert back.initial == d.initial
        assert back.labels == d.labels
        assert abs(back.P - d.P).max() == 0.0
