from __future__ import annotations

import copy
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptverify.decision import (
    VACUOUS, candidate_id, decision_space, enumerate_space, load_requirements,
    parse_requirements, report_to_csv, report_to_json, select_optimal, selection_to_json,
    stage_summary, verify_pipeline,
)
from adaptverify.errors import FormulaError, InputError, NoSurvivors, UnsupportedOperator
from adaptverify.goalmodel import parse_model

from conftest import R1_R5_PATH
from models import random_model, random_requirements


def _model(nodes, relations, tags, params=""):
    return parse_model(f"[nodes]\n{nodes}\n[relations]\n{relations}\n[contexts]\nC1 \"x\"\n"
                       f"[parameters]\n{params}\n[tags]\n{tags}\n[root]\nG\n")


TWO_OPTIONS = dict(
    nodes='G Goal "g" decision=pick\na Task "a" option=A\nb Task "b" option=B',
    relations="MeansEnds G -> a,b",
    tags="G @C1 option=A fp=0.1 u=1 tc=1 ec=4\nG @C1 option=B fp=0.2 u=1 tc=1 ec=4",
)


def _brute_force_count(model, ctx):
    """Cross product of options along each path, times every applicable parameter domain."""
    space = decision_space(model, ctx)
    total = 0
    names = [n for n, _, _ in space.decisions]
    for combo in itertools.product(*[opts for _, _, opts in space.decisions]):
        chosen = dict(zip(names, combo))
        # keep only decisions reachable under the other choices
        live = {n: o for n, o in chosen.items() if space.guards.get(n) is None
                or all(chosen.get(d) == v for d, v in space.guards[n])}
        if any(chosen[n] != opts[0] for n, _, opts in space.decisions if n not in live):
            continue
        k = 1
        for p in model.parameters:
            if p.applies(live):
                k *= len(p.domain)
        total += k
    return total


# ---------------------------------------------------------------------------
# requirements

def test_requirement_file():
    reqs = load_requirements(R1_R5_PATH)
    assert [r.id for r in reqs] == ["R1", "R2", "R3", "R4", "R5"]
    assert reqs[1].from_atom == "locate" and reqs[1].kind == "pctl"
    assert reqs[0].description == "probability of success"


def test_requirement_errors():
    with pytest.raises(InputError, match="duplicate"):
        parse_requirements('A pctl P>=0.5 [ F "x" ]\nA pctl P>=0.5 [ F "x" ]')
    with pytest.raises(FormulaError):
        parse_requirements('A pctl P>=0.5 [ F "x"')
    with pytest.raises(UnsupportedOperator):
        parse_requirements('A pctl R{"energy"}<=3 [ C<=5 ]')


# ---------------------------------------------------------------------------
# enumeration

def test_mobis_c2_has_808_candidates(mobis):
    cands = enumerate_space(mobis, "C2")
    assert len(cands) == 808
    assert len(set(cands)) == 808
    online = [a for a in cands if a.options.get("mode") == "Online"]
    assert len(online) == 800 and all(set(a.valuation) == {"T", "B"} for a in online)
    assert all(not a.valuation for a in cands if a.options.get("mode") == "Offline")


def test_count_matches_brute_force(mobis):
    for ctx in ("C1", "C2"):
        assert decision_space(mobis, ctx).count() == _brute_force_count(mobis, ctx) == 808


def test_enumeration_is_deterministic(mobis):
    assert enumerate_space(mobis, "C2") == enumerate_space(mobis, "C2")


def test_two_option_model():
    assert len(enumerate_space(_model(**TWO_OPTIONS), "C1")) == 2


def test_parameter_only_model():
    m = _model('G Goal "g"\nt Task "t"', "MeansEnds G -> t", "t @C1 fp=0 u=1 tc=1 ec=k",
               "k values=1,2,3")
    cands = enumerate_space(m, "C1")
    assert [a.valuation for a in cands] == [{"k": 1.0}, {"k": 2.0}, {"k": 3.0}]


def test_candidate_ids():
    assert candidate_id(0) == "c0001" and candidate_id(807) == "c0808"


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_random_model_counts(seed):
    m = random_model(seed)
    assert len(enumerate_space(m, "C1")) == _brute_force_count(m, "C1")


# ---------------------------------------------------------------------------
# pipeline

def test_vacuous_fail_for_offline_gsm(c2_report):
    r3 = c2_report.stages[2]
    vac = [i for i, o in r3.outcomes.items() if o.verdict == VACUOUS]
    assert len(vac) == 2
    for i in vac:
        assert c2_report.candidates[i].options["locate"] == "GSM"
        assert c2_report.candidates[i].options["mode"] == "Offline"


def test_memo_matches_plain_evaluation(mobis, reqs_r1_r5, c2_report):
    plain = verify_pipeline(mobis, "C2", reqs_r1_r5, memoize=False)
    for a, b in zip(c2_report.stages, plain.stages):
        assert a.survivors == b.survivors
        assert {i: o.value for i, o in a.outcomes.items()} == {i: o.value for i, o in b.outcomes.items()}


def test_threads_match_serial(mobis, reqs_r1_r5, c2_report):
    threaded = verify_pipeline(mobis, "C2", reqs_r1_r5, workers=4)
    assert report_to_json(threaded) == report_to_json(c2_report)


def test_unknown_atom_rejected(mobis):
    with pytest.raises(InputError, match="nowhere"):
        verify_pipeline(mobis, "C2", parse_requirements('X pctl P>=0.5 [ F "nowhere" ]'))


def test_survivor_monotonicity_on_mobis(c2_report):
    prev = set(range(len(c2_report.candidates)))
    for st_ in c2_report.stages:
        assert set(st_.survivors) <= prev
        assert set(st_.evaluated) == prev
        prev = set(st_.survivors)


def test_stage_summary(c2_report):
    lines = stage_summary(c2_report)
    assert lines[0] == "808 candidates, 16 structures, context C2"
    assert len(lines) == 6


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), perm_seed=st.integers(0, 1000))
def test_order_insensitive_and_monotone(seed, perm_seed):
    m = random_model(seed)
    reqs = random_requirements(seed)
    base = verify_pipeline(m, "C1", reqs)
    prev = set(range(len(base.candidates)))
    for st_ in base.stages:
        assert set(st_.survivors) <= prev
        prev = set(st_.survivors)
    order = list(np.random.default_rng(perm_seed).permutation(len(reqs)))
    shuffled = verify_pipeline(m, "C1", [reqs[i] for i in order])
    assert sorted(shuffled.final) == sorted(base.final)
    plain = verify_pipeline(m, "C1", reqs, memoize=False)
    assert plain.final == base.final


# ---------------------------------------------------------------------------
# selection

def test_single_survivor_selected():
    m = _model(**TWO_OPTIONS)
    reqs = parse_requirements('A pctl P>=0.85 [ F "success" ]\nE csl R{"energy"}<=100 [ C<=10 ]')
    rep = verify_pipeline(m, "C1", reqs)
    assert len(rep.final) == 1
    assert select_optimal(rep, m).options == {"pick": "A"}


def test_tie_goes_to_smaller_parameters():
    m = _model('G Goal "g"\nt Task "t"', "MeansEnds G -> t", "t @C1 fp=0 u=1 tc=1 ec=2",
               "T values=1,3\nB values=2,4")
    reqs = parse_requirements('E csl R{"energy"}<=100 [ C<=10 ]')
    rep = verify_pipeline(m, "C1", reqs)
    assert len(rep.final) == 4
    chosen = select_optimal(rep, m)
    assert chosen.valuation == {"T": 1.0, "B": 2.0}
    assert rep.selection_horizon == 10.0


def test_no_survivors():
    m = _model(**TWO_OPTIONS)
    rep = verify_pipeline(m, "C1", parse_requirements('A pctl P>=0.99 [ F "success" ]'))
    assert rep.final == []
    with pytest.raises(NoSurvivors):
        select_optimal(rep, m)


def test_horizon_required():
    m = _model(**TWO_OPTIONS)
    rep = verify_pipeline(m, "C1", parse_requirements('A pctl P>=0.5 [ F "success" ]'))
    with pytest.raises(InputError):
        select_optimal(rep, m)
    assert select_optimal(rep, m, horizon=5.0).options["pick"] in ("A", "B")


def test_selection_json(c2_report, mobis):
    rep = copy.copy(c2_report)
    select_optimal(rep, mobis)
    doc = json.loads(selection_to_json(rep))
    assert doc["context"] == "C2" and doc["horizon"] == 50.0
    assert {"register", "locate", "mode", "form", "T", "B", "energy"} <= set(doc)


# ---------------------------------------------------------------------------
# reports

def test_json_report_shape(c2_report):
    doc = json.loads(report_to_json(c2_report))
    assert doc["candidates"] == 808 and doc["structures"] == 16
    assert [s["requirement"] for s in doc["stages"]] == ["R1", "R2", "R3", "R4", "R5"]
    first = doc["results"][0]
    assert first["id"] == "c0001" and "R1" in first["checks"]


def test_csv_collapses_for_structural_requirements(mobis):
    reqs = parse_requirements('R1 pctl P>=0.85 [ true U "success" ]')
    rep = verify_pipeline(mobis, "C2", reqs)
    rows = report_to_csv(rep, mobis).splitlines()
    assert rows[0].split(",")[:5] == ["candidate", "register", "locate", "mode", "form"]
    assert len(rows) == 17
    assert sum(1 for r in rows[1:] if r.endswith(",pass")) == 8


def test_csv_full_for_parametric_requirements(mobis, c2_report):
    rows = report_to_csv(c2_report, mobis).splitlines()
    assert len(rows) == 809
    assert rows[0].endswith("R5_value,R5_verdict")
