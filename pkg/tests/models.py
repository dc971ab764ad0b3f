"""Seeded random tagged goal models for pipeline property tests."""

from __future__ import annotations

import numpy as np

from adaptverify.decision import parse_requirements
from adaptverify.goalmodel import parse_model


def random_model_text(seed: int) -> str:
    """A sequential goal with plain tasks and option decisions plus one parameter ``p``."""
    rng = np.random.default_rng(seed)
    nodes = ['G Goal "root"']
    relations = []
    tags = []
    children = []
    n_blocks = int(rng.integers(2, 5))
    for b in range(n_blocks):
        fp = round(float(rng.uniform(0.0, 0.12)), 4)
        u = round(float(rng.uniform(0.5, 5)), 2)
        ec = round(float(rng.uniform(1, 8)), 2)
        tc = round(float(rng.uniform(0.2, 4)), 2)
        if rng.random() < 0.5:
            name = f"t{b}"
            nodes.append(f'{name} Task "task {b}"')
            tc_expr = f"{tc}*p" if b == 0 else str(tc)
            tags.append(f"{name} @C1 fp={fp} u={u} tc={tc_expr} ec={ec}")
        else:
            name = f"D{b}"
            nodes.append(f'{name} Goal "decision {b}" decision=d{b}')
            opts = []
            for k in range(int(rng.integers(2, 4))):
                label = f"o{k}"
                opt = f"{name}_{label}"
                nodes.append(f'{opt} Task "option {k}" option={label}')
                opts.append(opt)
                ofp = round(float(rng.uniform(0.0, 0.15)), 4)
                otc = round(float(rng.uniform(0.2, 4)), 2)
                oec = round(float(rng.uniform(1, 10)), 2)
                ou = round(float(rng.uniform(0.5, 8)), 2)
                tags.append(f"{name} @C1 option={label} fp={ofp} u={ou} tc={otc} ec={oec}/p")
            relations.append(f"MeansEnds {name} -> {','.join(opts)}")
        children.append(name)
    relations.insert(0, f"DecompAnd G -> {','.join(children)} [seq]")
    domain = ",".join(str(v) for v in sorted({int(x) for x in rng.integers(1, 6, size=3)}))
    return ("[nodes]\n" + "\n".join(nodes) + "\n[relations]\n" + "\n".join(relations)
            + '\n[contexts]\nC1 "only"\n[parameters]\np values=' + domain
            + "\n[tags]\n" + "\n".join(tags) + "\n[root]\nG\n")


def random_model(seed: int):
    return parse_model(random_model_text(seed))


def random_requirements(seed: int):
    rng = np.random.default_rng(seed + 101)
    horizon = round(float(rng.uniform(2, 20)), 1)
    text = "\n".join([
        f'A pctl P>={rng.uniform(0.6, 0.92):.3f} [ F "success" ]',
        f'B csl P>={rng.uniform(0.3, 0.9):.3f} [ F<={horizon} "success" ]',
        f'C csl R{{"energy"}}<={rng.uniform(5, 40):.2f} [ C<={horizon} ]',
        f'D csl R{{"utility"}}>={rng.uniform(1, 15):.2f} [ F "success" ]',
    ])
    return parse_requirements(text)
