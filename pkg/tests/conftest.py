from __future__ import annotations

from importlib.resources import files

import pytest

from adaptverify.decision import build_variable_dtmc, load_requirements, verify_pipeline
from adaptverify.goalmodel import load_model

DATA = files("adaptverify") / "data"
MOBIS_PATH = str(DATA / "mobis.agm")
R1_PATH = str(DATA / "r1.req")
R1_R5_PATH = str(DATA / "r1-r5.req")


@pytest.fixture(scope="session")
def mobis():
    return load_model(MOBIS_PATH)


@pytest.fixture(scope="session")
def mobis_lts_vd(mobis):
    return {ctx: build_variable_dtmc(mobis, ctx) for ctx in ("C1", "C2")}


@pytest.fixture(scope="session")
def vd_c1(mobis_lts_vd):
    return mobis_lts_vd["C1"][1]


@pytest.fixture(scope="session")
def vd_c2(mobis_lts_vd):
    return mobis_lts_vd["C2"][1]


@pytest.fixture(scope="session")
def reqs_r1_r5():
    return load_requirements(R1_R5_PATH)


@pytest.fixture(scope="session")
def c2_report(mobis, reqs_r1_r5):
    return verify_pipeline(mobis, "C2", reqs_r1_r5)
