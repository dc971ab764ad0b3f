"""Decision space enumeration, the sequential verification pipeline and selection.

Candidates are checked requirement by requirement; a candidate that fails
(or cannot be evaluated) is dropped before the next requirement. Values that
only depend on the structural choices, or on a subset of the parameters, are
computed once per distinct key and shared.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .behavior import derive_process_defs, expand_lts
from .behavior.lts import DEFAULT_STATE_CAP, Lts
from .ctmc import cumulative_reward, csl_check, derive_ctmc
from .dtmc import (
    Assignment, ConcreteDtmc, VariableDtmc, generate_variable_dtmc, instantiate_dtmc, pctl_check,
)
from .errors import (
    AdaptVerifyError, EmptyDomain, InputError, MissingParameter, NoEntryStates, NoSurvivors,
    UnresolvedReference,
)
from .goalmodel import TaggedGoalModel, _preorder
from .logic import (
    And, Cumulative, Next, Not, Or, ProbOp, RewardOp, Until, atoms, parse_formula,
)

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous-fail"
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# requirements

@dataclass(frozen=True)
class Requirement:
    id: str
    kind: str  # pctl | csl
    formula: object
    description: str = ""
    from_atom: str | None = None
    text: str = ""

    def __str__(self) -> str:
        where = f' from "{self.from_atom}"' if self.from_atom else ""
        return f"{self.id} {self.kind} {self.formula}{where}"


_FROM = re.compile(r'\s+from\s+"([^"]+)"\s*$')


def _strip_comment(line: str) -> tuple[str, str]:
    inside = False
    for i, ch in enumerate(line):
        if ch == '"':
            inside = not inside
        elif ch == "#" and not inside:
            return line[:i].rstrip(), line[i + 1:].strip()
    return line.rstrip(), ""


def parse_requirements(text: str) -> list[Requirement]:
    """One requirement per line: ``<id> <pctl|csl> <formula> [from "<atom>"] [# text]``."""
    out: list[Requirement] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        body, desc = _strip_comment(raw)
        if not body.strip():
            continue
        parts = body.split(None, 2)
        if len(parts) < 3:
            raise InputError(f"line {lineno}: expected '<id> <pctl|csl> <formula>'")
        rid, kind, rest = parts
        if kind not in ("pctl", "csl"):
            raise InputError(f"line {lineno}: requirement kind must be pctl or csl, got '{kind}'")
        if rid in seen:
            raise InputError(f"line {lineno}: duplicate requirement id '{rid}'")
        seen.add(rid)
        from_atom = None
        m = _FROM.search(rest)
        if m:
            from_atom = m.group(1)
            rest = rest[:m.start()]
        try:
            formula = parse_formula(rest, kind)
        except InputError as exc:
            raise type(exc)(f"line {lineno} ({rid}): {exc}") from None
        out.append(Requirement(rid, kind, formula, desc, from_atom, rest.strip()))
    if not out:
        raise InputError("requirements file contains no requirements")
    return out


def load_requirements(path) -> list[Requirement]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read requirements file: {exc}") from None
    return parse_requirements(text)


# ---------------------------------------------------------------------------
# decision space

def decision_options(model: TaggedGoalModel, node: str) -> tuple[str, ...]:
    kids = model.children(node)
    tagged = [model.nodes[k].option for k in kids if model.nodes[k].option]
    return tuple(tagged) if tagged else tuple(kids)


@dataclass(frozen=True)
class DecisionSpace:
    context: str
    decisions: tuple[tuple[str, str, tuple[str, ...]], ...]  # (name, node, options) in preorder
    guards: Mapping[str, tuple[tuple[str, str], ...]]         # decision -> enclosing (decision, option)
    parameters: tuple  # model Parameter objects in declaration order

    def structures(self) -> list[tuple[tuple[str, str], ...]]:
        out: list[tuple[tuple[str, str], ...]] = []

        def rec(i: int, chosen: list[tuple[str, str]]) -> None:
            if i == len(self.decisions):
                out.append(tuple(chosen))
                return
            name, _, options = self.decisions[i]
            current = dict(chosen)
            if any(current.get(d) != o for d, o in self.guards[name]):
                rec(i + 1, chosen)
                return
            for opt in options:
                rec(i + 1, chosen + [(name, opt)])

        rec(0, [])
        return out

    def parameters_for(self, structure: Sequence[tuple[str, str]]) -> list:
        s = dict(structure)
        return [p for p in self.parameters if p.applies(s)]

    def candidates(self) -> list[Assignment]:
        out = []
        for st in self.structures():
            params = self.parameters_for(st)
            for values in itertools.product(*(p.domain for p in params)):
                out.append(Assignment(self.context, st,
                                      tuple((p.name, float(v)) for p, v in zip(params, values))))
        return out

    def count(self) -> int:
        total = 0
        for st in self.structures():
            total += math.prod(len(p.domain) for p in self.parameters_for(st))
        return total


def decision_space(model: TaggedGoalModel, context: str) -> DecisionSpace:
    if context not in model.context_ids():
        raise UnresolvedReference(context)
    order = _preorder(model, model.root)
    dnodes = [n for n in order if model.nodes[n].decision]
    name_of = {n: model.nodes[n].decision for n in dnodes}
    decisions = []
    guards: dict[str, tuple[tuple[str, str], ...]] = {}
    seen: set[str] = set()
    for n in dnodes:
        name = name_of[n]
        if name in seen:
            raise InputError(f"decision name '{name}' is used by more than one node")
        seen.add(name)
        options = decision_options(model, n)
        if not options:
            raise EmptyDomain(f"decision '{name}' has no options")
        decisions.append((name, n, options))
        g = []
        child = n
        for anc in model.ancestors(n):
            if anc in name_of:
                k = model.nodes[child]
                g.append((name_of[anc], k.option or child))
            child = anc
        guards[name] = tuple(reversed(g))
    for p in model.parameters:
        if not p.domain:
            raise EmptyDomain(f"parameter '{p.name}' has an empty domain")
    return DecisionSpace(context, tuple(decisions), guards, tuple(model.parameters))


def enumerate_space(model: TaggedGoalModel, context: str) -> list[Assignment]:
    """All candidate assignments of ``context`` in lexicographic order."""
    return decision_space(model, context).candidates()


def candidate_id(i: int) -> str:
    return f"c{i + 1:04d}"


# ---------------------------------------------------------------------------
# pipeline

@dataclass(frozen=True)
class Outcome:
    value: float | None
    verdict: str
    reason: str = ""


@dataclass
class Stage:
    requirement: Requirement
    evaluated: list[int]
    outcomes: dict[int, Outcome]
    survivors: list[int]
    parameter_dependent: bool = False
    seconds: float = 0.0


@dataclass
class PipelineReport:
    context: str
    requirements: list[Requirement]
    candidates: list[Assignment]
    stages: list[Stage]
    selected: int | None = None
    selection_value: float | None = None
    selection_reward: str | None = None
    selection_horizon: float | None = None
    timing: dict[int, float] = field(default_factory=dict)  # seconds per candidate (not exported)

    @property
    def final(self) -> list[int]:
        if not self.stages:
            return list(range(len(self.candidates)))
        return self.stages[-1].survivors

    def survivors_after(self, k: int) -> list[int]:
        return self.stages[k].survivors

    @property
    def structures(self) -> list[tuple]:
        return list(dict.fromkeys(a.structural for a in self.candidates))


class _Evaluator:
    """Caches concrete chains per structure and CTMCs per candidate."""

    def __init__(self, model: TaggedGoalModel, context: str, vd: VariableDtmc):
        self.model = model
        self.context = context
        self.vd = vd
        self._dtmc: dict[tuple, ConcreteDtmc] = {}
        self._deps: dict[tuple, frozenset[str]] = {}

    def dtmc(self, a: Assignment) -> ConcreteDtmc:
        d = self._dtmc.get(a.structural)
        if d is None:
            d = instantiate_dtmc(self.vd, Assignment(a.context, a.structural))
            self._dtmc[a.structural] = d
        return d

    def evaluate(self, req: Requirement, a: Assignment) -> Outcome:
        try:
            d = self.dtmc(a)
            if req.kind == "pctl":
                r = pctl_check(d, req.formula, req.from_atom)
            else:
                c, rewards = derive_ctmc(d, self.model, self.context, a)
                r = csl_check(c, rewards, req.formula, req.from_atom)
        except MissingParameter as exc:
            return Outcome(None, VACUOUS, f"parameter '{exc.name}' does not apply to this structure")
        except NoEntryStates as exc:
            return Outcome(None, VACUOUS, f"no reachable '{exc.atom}' state")
        return Outcome(r.value, PASS if r.holds else FAIL)

    # -- parameter dependence -------------------------------------------
    def dependencies(self, req: Requirement, a: Assignment) -> frozenset[str]:
        """Parameters the value of ``req`` can depend on for this structure."""
        if req.kind == "pctl":
            return frozenset()
        key = (req.id, a.structural)
        deps = self._deps.get(key)
        if deps is None:
            deps = self._compute_deps(req, a)
            self._deps[key] = deps
        return deps

    def _compute_deps(self, req: Requirement, a: Assignment) -> frozenset[str]:
        d = self.dtmc(a)
        timed, rewards = _formula_needs(req.formula)
        out_deg: dict[int, int] = {}
        live = {i for i, lab in enumerate(d.labels) if not (d.absorbing[i] and "success" not in lab)}
        edges = [e for e in d.edges if e.kind != "absorb" and e.src in live and e.dst in live]
        for e in edges:
            out_deg[e.src] = out_deg.get(e.src, 0) + 1
        deps: set[str] = set()
        for e in edges:
            if e.task is None:
                continue
            tag = self.model.find_tag(e.task, self.context, e.option)
            fail = e.kind == "failure"
            tc = (tag.fail_time_cost or tag.time_cost) if fail else tag.time_cost
            if timed or out_deg[e.src] > 1:
                deps |= tc.params
            if "energy" in rewards:
                ec = (tag.fail_energy_cost or tag.energy_cost) if fail else tag.energy_cost
                deps |= ec.params
        return frozenset(deps)


def _formula_needs(f) -> tuple[bool, set[str]]:
    """(uses real time, reward structures used) for a CSL formula."""
    if isinstance(f, ProbOp):
        timed = isinstance(f.path, Until) and f.path.bound is not None
        t1, r1 = _formula_needs(f.path.left) if isinstance(f.path, Until) else _formula_needs(f.path.arg)
        t2, r2 = _formula_needs(f.path.right) if isinstance(f.path, Until) else (False, set())
        return timed or t1 or t2, r1 | r2
    if isinstance(f, RewardOp):
        if isinstance(f.path, Cumulative):
            return True, {f.reward}
        t, r = _formula_needs(f.path.right)
        return t, r | {f.reward}
    if isinstance(f, (And, Or)):
        t1, r1 = _formula_needs(f.left)
        t2, r2 = _formula_needs(f.right)
        return t1 or t2, r1 | r2
    if isinstance(f, Not):
        return _formula_needs(f.arg)
    if isinstance(f, Next):
        return _formula_needs(f.arg)
    return False, set()


def build_variable_dtmc(model: TaggedGoalModel, context: str,
                        state_cap: int = DEFAULT_STATE_CAP) -> tuple[Lts, VariableDtmc]:
    lts = expand_lts(derive_process_defs(model), None, state_cap)
    return lts, generate_variable_dtmc(lts, model, context)


def verify_pipeline(model: TaggedGoalModel, context: str, requirements: Sequence[Requirement],
                    *, memoize: bool = True, workers: int = 1,
                    state_cap: int = DEFAULT_STATE_CAP,
                    candidates: Sequence[Assignment] | None = None) -> PipelineReport:
    """Filter all candidates of ``context`` through ``requirements`` in order."""
    if not requirements:
        raise InputError("at least one requirement is needed")
    _, vd = build_variable_dtmc(model, context, state_cap)
    for req in requirements:
        for atom in sorted(atoms(req.formula) | ({req.from_atom} if req.from_atom else set())):
            if atom not in vd.vocabulary:
                raise InputError(f"{req.id}: unknown atomic proposition '{atom}'")
    space = decision_space(model, context)
    declared = {name: opts for name, _, opts in space.decisions}
    for name, opts in vd.decisions.items():
        if name not in declared or set(opts) - set(declared[name]):
            raise InputError(f"decision '{name}' of the behaviour model does not match the goal model")
    cands = list(candidates) if candidates is not None else space.candidates()
    ev = _Evaluator(model, context, vd)
    report = PipelineReport(context, list(requirements), cands, [])
    alive = list(range(len(cands)))
    for req in requirements:
        t0 = time.perf_counter()
        memo: dict[tuple, Outcome] = {}
        dependent = False

        def run(i: int) -> tuple[int, Outcome, float]:
            a = cands[i]
            s0 = time.perf_counter()
            try:
                if memoize:
                    deps = ev.dependencies(req, a)
                    vals = a.valuation
                    key = (a.structural, tuple((p, vals.get(p)) for p in sorted(deps)))
                    hit = memo.get(key)
                    if hit is None:
                        hit = ev.evaluate(req, a)
                        memo[key] = hit
                    out = hit
                else:
                    out = ev.evaluate(req, a)
            except AdaptVerifyError as exc:
                exc.args = (f"{candidate_id(i)} ({a.describe()}): {exc}",)
                raise
            return i, out, time.perf_counter() - s0

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, alive))
        else:
            results = [run(i) for i in alive]
        outcomes = {}
        for i, out, secs in results:
            outcomes[i] = out
            report.timing[i] = report.timing.get(i, 0.0) + secs
        if memoize:
            dependent = any(ev.dependencies(req, cands[i]) for i in alive)
        else:
            dependent = req.kind != "pctl"
        survivors = [i for i in alive if outcomes[i].verdict == PASS]
        report.stages.append(Stage(req, list(alive), outcomes, survivors, dependent,
                                   time.perf_counter() - t0))
        alive = survivors
    return report


def select_optimal(report: PipelineReport, model: TaggedGoalModel, reward: str = "energy",
                   horizon: float | None = None) -> Assignment:
    """Survivor with the least expected ``reward`` accumulated within ``horizon``.

    The horizon defaults to the time bound of the last cumulative requirement on
    ``reward``. Ties go to the smaller parameter tuple, then the earlier candidate.
    """
    final = report.final
    if not final:
        raise NoSurvivors()
    if horizon is None:
        for req in reversed(report.requirements):
            f = req.formula
            if isinstance(f, RewardOp) and f.reward == reward and isinstance(f.path, Cumulative):
                horizon = f.path.bound
                break
        else:
            raise InputError(f"no horizon given and no cumulative '{reward}' requirement to take it from")
    _, vd = build_variable_dtmc(model, report.context)
    ev = _Evaluator(model, report.context, vd)
    best = None
    for i in final:
        a = report.candidates[i]
        c, rewards = derive_ctmc(ev.dtmc(a), model, report.context, a)
        if reward not in rewards:
            raise InputError(f"unknown reward structure '{reward}'")
        v = cumulative_reward(c, rewards[reward], horizon)
        key = (v, tuple(x for _, x in a.parameters), i)
        if best is None or key < best:
            best = key
    report.selected = best[2]
    report.selection_value = best[0]
    report.selection_reward = reward
    report.selection_horizon = float(horizon)
    return report.candidates[best[2]]


# ---------------------------------------------------------------------------
# output

def _json_value(v: float | None):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _assignment_json(i: int, a: Assignment) -> dict:
    d = a.to_json()
    return {"id": candidate_id(i), "structural": d["structural"], "parameters": d["parameters"]}


def report_to_json(report: PipelineReport) -> str:
    """Full report; no timing so identical inputs give identical bytes."""
    results = []
    for i, a in enumerate(report.candidates):
        entry = _assignment_json(i, a)
        checks = {}
        for st in report.stages:
            out = st.outcomes.get(i)
            if out is None:
                continue
            item = {"value": _json_value(out.value), "verdict": out.verdict}
            if out.reason:
                item["reason"] = out.reason
            checks[st.requirement.id] = item
        entry["checks"] = checks
        results.append(entry)
    stages = []
    for st in report.stages:
        counts = {PASS: 0, FAIL: 0, VACUOUS: 0}
        for out in st.outcomes.values():
            counts[out.verdict] += 1
        stages.append({
            "requirement": st.requirement.id,
            "evaluated": len(st.evaluated),
            "passed": counts[PASS],
            "failed": counts[FAIL],
            "vacuous": counts[VACUOUS],
            "survivor_structures": len({report.candidates[i].structural for i in st.survivors}),
            "survivors": [candidate_id(i) for i in st.survivors],
        })
    doc = {
        "schema": SCHEMA_VERSION,
        "context": report.context,
        "candidates": len(report.candidates),
        "structures": len(report.structures),
        "requirements": [
            {"id": r.id, "kind": r.kind, "formula": str(r.formula), "from": r.from_atom,
             "description": r.description} for r in report.requirements],
        "stages": stages,
        "final_survivors": [candidate_id(i) for i in report.final],
        "selected": None,
        "results": results,
    }
    if report.selected is not None:
        sel = _assignment_json(report.selected, report.candidates[report.selected])
        sel["criterion"] = {"reward": report.selection_reward, "horizon": report.selection_horizon,
                            "value": _json_value(report.selection_value)}
        doc["selected"] = sel
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _csv_num(v: float | None) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def report_to_csv(report: PipelineReport, model: TaggedGoalModel) -> str:
    """One row per candidate (per structure when no requirement depends on parameters)."""
    space = decision_space(model, report.context)
    dims = [name for name, _, _ in space.decisions]
    params = [p.name for p in space.parameters]
    collapse = not any(st.parameter_dependent for st in report.stages)
    header = ["candidate", *dims, *params]
    for st in report.stages:
        header += [f"{st.requirement.id}_value", f"{st.requirement.id}_verdict"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    seen: set[tuple] = set()
    for i, a in enumerate(report.candidates):
        if collapse:
            if a.structural in seen:
                continue
            seen.add(a.structural)
        opts = a.options
        vals = a.valuation
        row = [candidate_id(i), *(opts.get(d, "") for d in dims)]
        row += ["" if collapse or p not in vals else _csv_num(vals[p]) for p in params]
        for st in report.stages:
            out = st.outcomes.get(i)
            row += ["", "-"] if out is None else [_csv_num(out.value), out.verdict]
        w.writerow(row)
    return buf.getvalue()


def selection_to_json(report: PipelineReport) -> str:
    if report.selected is None:
        raise NoSurvivors()
    a = report.candidates[report.selected]
    doc = {"schema": SCHEMA_VERSION, "context": report.context, "candidate": candidate_id(report.selected)}
    doc.update(a.options)
    for k, v in a.parameters:
        doc[k] = int(v) if float(v).is_integer() else v
    doc[report.selection_reward] = _json_value(report.selection_value)
    doc["horizon"] = report.selection_horizon
    return json.dumps(doc, sort_keys=False) + "\n"


def stage_summary(report: PipelineReport) -> list[str]:
    lines = [f"{len(report.candidates)} candidates, {len(report.structures)} structures, "
             f"context {report.context}"]
    for st in report.stages:
        n_struct = len({report.candidates[i].structural for i in st.survivors})
        vac = sum(1 for o in st.outcomes.values() if o.verdict == VACUOUS)
        extra = f", {vac} vacuous" if vac else ""
        lines.append(f"{st.requirement.id}: {len(st.evaluated)} evaluated, {len(st.survivors)} pass "
                     f"({n_struct} structures){extra}")
    return lines
