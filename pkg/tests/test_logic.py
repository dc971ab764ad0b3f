from __future__ import annotations

import math

import pytest

from adaptverify.errors import FormulaError, UnsupportedOperator
from adaptverify.logic import (
    And, Atom, Cumulative, Not, Or, ProbOp, RewardOp, TrueF, Until, atoms, compare, parse_formula,
    worst,
)


def test_probability_until():
    f = parse_formula('P>=0.85 [ true U "success" ]', "pctl")
    assert f == ProbOp(">=", 0.85, Until(TrueF(), Atom("success")))


def test_eventually_is_until_true():
    assert parse_formula('P>0.5 [ F<=50 "s" ]') == ProbOp(">", 0.5, Until(TrueF(), Atom("s"), 50.0))


def test_cumulative_reward():
    assert parse_formula('R{"energy"}<=180 [ C<=50 ]') == RewardOp("energy", "<=", 180.0, Cumulative(50.0))


def test_precedence():
    f = parse_formula('"a" | "b" & !"c"')
    assert f == Or(Atom("a"), And(Atom("b"), Not(Atom("c"))))


@pytest.mark.parametrize("text", [
    'P>=0.85 [ true U "success" ]',
    'R{"utility"}>=30 [ F "success" ]',
    'P<0.1 [ X !"a" ]',
    'P>=0.5 [ ("a" | "b") U<=4 "c" ]',
])
def test_str_round_trip(text):
    f = parse_formula(text)
    assert parse_formula(str(f)) == f


@pytest.mark.parametrize("text", [
    'S>=0.5 [ "a" ]',
    'P=? [ F "a" ]',
    'P>=0.5 [ G "a" ]',
    'R{"e"}<=1 [ I=5 ]',
    'R{"e"}<=1 [ F<=3 "a" ]',
])
def test_unsupported_operators(text):
    with pytest.raises(UnsupportedOperator):
        parse_formula(text)


@pytest.mark.parametrize("text", [
    'P>=1.5 [ F "a" ]',
    'P>=0.5 [ F "a"',
    'P>=0.5 [ F "a" ] extra',
    '"a" $ "b"',
])
def test_malformed(text):
    with pytest.raises(FormulaError):
        parse_formula(text)


def test_pctl_rules():
    with pytest.raises(FormulaError):
        parse_formula('P>=0.5 [ F<=2.5 "a" ]', "pctl")
    with pytest.raises(UnsupportedOperator):
        parse_formula('R{"e"}<=1 [ C<=5 ]', "pctl")


def test_atoms():
    assert atoms(parse_formula('P>=0.9 [ "locate" U "success" ] & !"x"')) == {"locate", "success", "x"}


def test_compare_and_worst():
    assert compare(">=", 0.9, 0.9) and not compare("<", math.nan, 1.0)
    assert worst(">=", [0.3, 0.7]) == 0.3 and worst("<=", [0.3, 0.7]) == 0.7
