from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from adaptverify.errors import (
    DuplicateId, FPOutOfRange, InputError, MissingTag, ModelSyntaxError, UnresolvedReference,
)
from adaptverify.goalmodel import (
    NodeKind, load_model, parse_model, serialize_model, tag_of, validate,
)

MINIMAL = '[nodes]\nG Goal "g"\n[contexts]\nC1 "any"\n[root]\nG\n'


def _doc(nodes: str, relations: str = "", tags: str = "") -> str:
    return (f"[nodes]\n{nodes}\n[relations]\n{relations}\n[contexts]\nC1 \"x\"\n"
            f"[tags]\n{tags}\n[root]\nG\n")


def test_minimal_document():
    m = parse_model(MINIMAL)
    assert m.root == "G"
    assert len(m.relations) == 0
    assert validate(m) == []


def test_mobis_has_four_adaptation_goals_and_two_contexts(mobis):
    ags = [n for n, node in mobis.nodes.items() if node.kind == NodeKind.ADAPTATION_GOAL]
    assert sorted(ags) == ["CheckLocation", "ConfigTime", "LoadInfo", "Locate"]
    assert mobis.context_ids() == ["C1", "C2"]


def test_mobis_validates_clean(mobis):
    assert [d for d in validate(mobis) if d.severity == "error"] == []


def test_fp_out_of_range():
    with pytest.raises(FPOutOfRange):
        parse_model(_doc('G Goal "g"\nt Task "t"', "MeansEnds G -> t",
                         "t @C1 fp=1.2 u=1 tc=1 ec=1"))


def test_unresolved_reference():
    with pytest.raises(UnresolvedReference):
        parse_model(_doc('G Goal "g"', "MeansEnds G -> nowhere"))


def test_duplicate_id():
    with pytest.raises(DuplicateId):
        parse_model(_doc('G Goal "g"\nG Task "again"'))


def test_syntax_error_reports_line():
    with pytest.raises(ModelSyntaxError, match="line"):
        parse_model("[nodes]\nG Goal\n[bogus]\n")


def test_missing_file_is_input_error(tmp_path):
    with pytest.raises(InputError):
        load_model(tmp_path / "absent.agm")


def test_monitor_task_under_goal_is_flagged():
    m = parse_model(_doc('G Goal "g"\nm MonitorTask "m"\nx Task "x"', "DecompAnd G -> m,x",
                         "m @C1 fp=0 u=0 tc=1 ec=0\nx @C1 fp=0 u=0 tc=1 ec=0"))
    errs = [d for d in validate(m) if d.severity == "error"]
    assert len(errs) == 1 and errs[0].subject == "m"


def test_decomposition_cycle_is_flagged():
    m = parse_model(_doc('G Goal "g"\ng1 Goal "a"\ng2 Goal "b"\nt Task "t"\nu Task "u"',
                         "DecompAnd G -> g1,t\nDecompAnd g1 -> g2,u\nDecompAnd g2 -> g1,u",
                         "t @C1 fp=0 u=0 tc=1 ec=0\nu @C1 fp=0 u=0 tc=1 ec=0"))
    msgs = [d.message for d in validate(m) if d.severity == "error"]
    assert any("cycle" in msg for msg in msgs)


def test_missing_tag_for_engaged_task():
    m = parse_model(_doc('G Goal "g"\nt Task "t"', "MeansEnds G -> t"))
    assert any("missing tag" in d.message for d in validate(m))
    with pytest.raises(MissingTag):
        tag_of(m, "t", "C1")


# tag lookup against the bundled cost tables

def test_tag_locate_gps_c1(mobis):
    assert tag_of(mobis, "locate", "C1", "GPS", {}).fp == 0.05


def test_tag_send_request_c2_t10(mobis):
    t = tag_of(mobis, "Send", "C2", None, {"T": 10})
    assert t.energy_cost == pytest.approx(2.0)
    assert t.time_cost == pytest.approx(0.2)


def test_tag_load_c2_b1(mobis):
    assert tag_of(mobis, "Load", "C2", None, {"B": 1}).energy_cost == 20


def test_parameter_domains(mobis):
    for name in ("T", "B"):
        assert mobis.parameter(name).domain == tuple(float(v) for v in range(1, 20, 2))


# invariants

def test_round_trip_identity(mobis):
    text = serialize_model(mobis)
    again = parse_model(text)
    assert again == mobis
    assert serialize_model(again) == text


def test_tags_admissible_over_parameter_grid(mobis):
    grid = [dict(zip(("T", "B"), v)) for v in itertools.product(
        mobis.parameter("T").domain, mobis.parameter("B").domain)]
    for tag in mobis.tags:
        for val in grid:
            et = tag_of(mobis, tag.task, tag.context, tag.option, val)
            assert 0.0 <= et.fp <= 1.0
            assert et.time_cost > 0


@settings(max_examples=200, deadline=None)
@given(fps=st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=6),
       tcs=st.lists(st.floats(0.01, 100, allow_nan=False), min_size=6, max_size=6))
def test_round_trip_random_chains(fps, tcs):
    names = [f"t{i}" for i in range(len(fps))]
    nodes = 'G Goal "g"\n' + "\n".join(f'{n} Task "task {n}"' for n in names)
    rel = f"DecompAnd G -> {','.join(names)} [seq]" if len(names) > 1 else f"MeansEnds G -> {names[0]}"
    tags = "\n".join(f"{n} @C1 fp={fp!r} u=1 tc={tc!r} ec=2" for n, fp, tc in zip(names, fps, tcs))
    m = parse_model(_doc(nodes, rel, tags))
    assert parse_model(serialize_model(m)) == m
