"""Command-line interface.

Exit codes: 0 success / all hold, 1 violated or no survivors, 2 usage error,
3 input error, 4 numeric or resource failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import (
    check_assertion, derive_process_defs, expand_lts, format_csp, lts_to_dot, lts_to_text,
)
from .behavior.lts import DEFAULT_STATE_CAP
from .ctmc import ctmc_to_text, derive_ctmc
from .decision import (
    build_variable_dtmc, decision_space, load_requirements, report_to_csv, report_to_json,
    select_optimal, selection_to_json, stage_summary, verify_pipeline,
)
from .dtmc import (
    Assignment, dtmc_to_text, instantiate_dtmc, prob_until, simulate_dtmc, variable_dtmc_to_text,
)
from .errors import AdaptVerifyError, InputError, NoSurvivors, NumericError
from .goalmodel import load_model, validate

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _err(msg: str) -> None:
    print(f"adaptverify: {msg}", file=sys.stderr)


def _load(path: str):
    model = load_model(path)
    errors = [d for d in validate(model) if d.severity == "error"]
    if errors:
        for d in errors:
            _err(str(d))
        raise InputError(f"{path}: model has {len(errors)} validation error(s)")
    return model


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def parse_assignment(spec: str, context: str) -> Assignment:
    """An assignment from a JSON file or an inline ``name=value,...`` list."""
    p = Path(spec)
    if p.is_file():
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read assignment file: {exc}") from None
        obj = dict(obj)
        obj.setdefault("context", context)
        if obj["context"] != context:
            raise InputError(f"assignment is for context {obj['context']}, not {context}")
        return Assignment.from_json(obj)
    structural, params = {}, {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if "=" not in item:
            raise InputError(f"assignment item '{item}' is not name=value")
        k, v = (x.strip() for x in item.split("=", 1))
        try:
            params[k] = float(v)
        except ValueError:
            structural[k] = v
    return Assignment.of(context, structural, params)


# ---------------------------------------------------------------------------
# commands

def cmd_check(args) -> int:
    model = load_model(args.model)
    diags = validate(model)
    for d in diags:
        print(str(d))
    if any(d.severity == "error" for d in diags):
        raise InputError(f"{args.model}: model is invalid")
    defs = derive_process_defs(model)
    rows = []
    all_hold = True
    t0 = time.perf_counter()
    for a in model.assertions:
        s0 = time.perf_counter()
        v = check_assertion(defs, a, args.state_cap)
        rows.append((str(a), v, time.perf_counter() - s0))
        all_hold &= v.holds
    total = time.perf_counter() - t0
    if args.format == "json":
        doc = {"schema": 1, "model": Path(args.model).name, "assertions": [
            {"assertion": name, "holds": v.holds,
             **({"witness": list(v.witness)} if v.witness else {}),
             **({"detail": v.detail} if v.detail else {})} for name, v, _ in rows]}
        print(json.dumps(doc, indent=2))
    else:
        width = max((len(r[0]) for r in rows), default=10)
        print(f"{'assertion':<{width}}  verdict")
        for name, v, secs in rows:
            line = f"{name:<{width}}  {'holds' if v.holds else 'VIOLATED'}"
            if not v.holds:
                line += f"  [{v.detail}; trace: {' '.join(v.witness or ())}]"
            print(line)
        n_ok = sum(1 for r in rows if r[1].holds)
        print(f"{n_ok}/{len(rows)} assertions hold ({total:.3f}s)")
    return EXIT_OK if all_hold else EXIT_VIOLATED


def cmd_lts(args) -> int:
    model = _load(args.model)
    defs = derive_process_defs(model)
    if args.csp:
        text = format_csp(defs)
    else:
        lts = expand_lts(defs, args.process, args.state_cap)
        text = lts_to_dot(lts) if args.format == "dot" else lts_to_text(lts)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_genmodels(args) -> int:
    model = _load(args.model)
    _, vd = build_variable_dtmc(model, args.context, args.state_cap)
    out = Path(args.out)
    _write(out / f"vdtmc-{args.context}.txt", variable_dtmc_to_text(vd))
    if args.assignment:
        a = parse_assignment(args.assignment, args.context)
    else:
        a = decision_space(model, args.context).candidates()[0]
    d = instantiate_dtmc(vd, a)
    c, rewards = derive_ctmc(d, model, args.context, a)
    _write(out / f"dtmc-{args.context}.txt", dtmc_to_text(d))
    _write(out / f"ctmc-{args.context}.txt", f"# assignment {a.describe()}\n" + ctmc_to_text(c, rewards))
    print(f"variable DTMC: {vd.n_states} states ({len(vd.variable_states)} variable, "
          f"{len(vd.absorbing_states)} absorbing)")
    print(f"sample CTMC for {a.describe()}: {c.n_states} states")
    print(f"written to {out}")
    return EXIT_OK


def _pipeline(args):
    model = _load(args.model)
    reqs = load_requirements(args.reqs)
    if args.order:
        by_id = {r.id: r for r in reqs}
        wanted = [x.strip() for x in args.order.split(",") if x.strip()]
        missing = [x for x in wanted if x not in by_id]
        if missing:
            raise InputError(f"unknown requirement id(s) in --order: {', '.join(missing)}")
        reqs = [by_id[x] for x in wanted]
    report = verify_pipeline(model, args.context, reqs, memoize=not args.no_memo,
                             workers=args.workers, state_cap=args.state_cap)
    return model, report


def cmd_verify(args) -> int:
    model, report = _pipeline(args)
    if report.final and args.select:
        select_optimal(report, model, args.reward)
    out = Path(args.out)
    js = report_to_json(report)
    cs = report_to_csv(report, model)
    _write(out / "report.json", js)
    _write(out / "report.csv", cs)
    if args.format == "json":
        sys.stdout.write(js)
    elif args.format == "csv":
        sys.stdout.write(cs)
    else:
        for line in stage_summary(report):
            print(line)
        print(f"reports written to {out / 'report.json'} and {out / 'report.csv'}")
    if not report.final:
        _err("no candidate satisfies every requirement")
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_decide(args) -> int:
    model, report = _pipeline(args)
    try:
        select_optimal(report, model, args.reward, args.horizon)
    except NoSurvivors:
        for line in stage_summary(report):
            _err(line)
        _err("no candidate satisfies every requirement; no decision")
        return EXIT_VIOLATED
    sys.stdout.write(selection_to_json(report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args.model)
    _, vd = build_variable_dtmc(model, args.context, args.state_cap)
    a = parse_assignment(args.assignment, args.context)
    d = instantiate_dtmc(vd, a)
    target = d.sat(args.target)
    sim = simulate_dtmc(d, target, args.runs, args.seed, args.step_cap)
    analytic = float(prob_until(d, np.ones(d.n_states, dtype=bool), target)[d.initial])
    doc = {"schema": 1, "context": args.context, "assignment": a.to_json(), "target": args.target,
           "runs": sim.runs, "seed": args.seed, "hits": sim.hits, "estimate": sim.estimate,
           "stderr": sim.stderr, "analytic": analytic,
           "z": (sim.estimate - analytic) / sim.stderr if sim.stderr > 0 else 0.0}
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptverify",
                                description="Verification-driven adaptation decisions for tagged goal models.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, context=False):
        sp.add_argument("model", help="tagged goal model file (.agm)")
        sp.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP,
                        help="maximum number of LTS states (default %(default)s)")
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        if context:
            sp.add_argument("--context", required=True, help="context class id, e.g. C2")

    sp = sub.add_parser("check", help="validate the model and check its assertions")
    common(sp)
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("lts", help="export the labelled transition system")
    common(sp)
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.add_argument("--process", help="process to expand (default: the root goal)")
    sp.add_argument("--format", choices=("text", "dot"), default="text")
    sp.add_argument("--csp", action="store_true", help="print the derived process definitions instead")
    sp.set_defaults(func=cmd_lts)

    sp = sub.add_parser("genmodels", help="write the variable DTMC and a sample DTMC/CTMC")
    common(sp, context=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--assignment", help="JSON file or name=value list (default: first candidate)")
    sp.set_defaults(func=cmd_genmodels)

    for name, func, helptext in (("verify", cmd_verify, "run the requirement pipeline and write reports"),
                                 ("decide", cmd_decide, "print the selected adaptation decision")):
        sp = sub.add_parser(name, help=helptext)
        common(sp, context=True)
        sp.add_argument("--reqs", required=True, help="requirements file")
        sp.add_argument("--order", help="comma-separated requirement ids to apply, in this order")
        sp.add_argument("--workers", type=int, default=1, help="threads for candidate evaluation")
        sp.add_argument("--no-memo", action="store_true", help="evaluate every candidate separately")
        sp.add_argument("--reward", default="energy", help="reward minimised by the selection")
        if name == "verify":
            sp.add_argument("--out", default=".", help="directory for report.json and report.csv")
            sp.add_argument("--format", choices=("text", "json", "csv"), default="text")
            sp.add_argument("--select", action="store_true", help="also select the optimal survivor")
        else:
            sp.add_argument("--horizon", type=float, help="selection horizon (default: cumulative bound)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("simulate", help="Monte-Carlo estimate of reaching a label")
    common(sp, context=True)
    sp.add_argument("--assignment", required=True, help="JSON file or name=value list")
    sp.add_argument("--runs", type=int, default=100_000)
    sp.add_argument("--target", default="success", help="atomic proposition to reach")
    sp.add_argument("--step-cap", type=int, default=100_000)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1 or getattr(args, "runs", 1) < 1 or args.state_cap < 1:
        parser.error("counts must be positive")
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except NoSurvivors as exc:
        _err(str(exc))
        return EXIT_VIOLATED
    except (NumericError, AdaptVerifyError) as exc:
        _err(str(exc))
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
