"""Verification drivers behind the CLI.

Every driver takes ``(problem, config)`` and returns a :class:`RunReport`.
Reports are deterministic for a fixed config and seed; wall-clock data lives
under the single ``volatile`` key so that :meth:`RunReport.stable_json` can be
compared byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._accel import backend
from .config import RunConfig
from .errors import NotPositiveDefinite
from .fem import FiniteElementFunction, Mesh, assemble, discretize, factorize, sample_grid, solve
from .green import GreenKernel, compute_kernel, green_matrix, positivity_report, restrict_kernel, uniform_grid
from .problem import Problem, SecondOrderProblem, validate_problem
from .recovery import continuity_jumps, strong_residuals
from .signs import (SampledFunction, bump, check_certificate, random_sign_pattern, sign_chain_certificate,
                    verify_nondecrease)
from .tn import tn_report
from .transforms import SturmWeight, conjugation_study, sturm_weight

DEFAULT_LEVELS = {
    "refine": (16, 32, 64, 128),
    "residuals": (64, 128, 256),
    "transform": (8, 16, 32, 64),
}
WITNESS_WIDTHS = (1 / 8, 1 / 16, 1 / 32, 1 / 64)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


@dataclass
class RunReport:
    command: str
    problem: dict
    config: dict
    checks: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.get("pass", True) for c in self.checks.values())

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 1
        return 0 if self.passed else 2

    def stable_dict(self) -> dict:
        return _clean({
            "command": self.command,
            "problem": self.problem,
            "config": self.config,
            "checks": self.checks,
            "pass": self.passed,
            "error": self.error,
            "tool": {"name": "signreg", "version": __version__, "backend": backend()},
        })

    def to_dict(self) -> dict:
        d = self.stable_dict()
        d["volatile"] = _clean({"timestamp": datetime.now(timezone.utc).isoformat(), "timings": self.timings})
        return d

    def stable_json(self) -> str:
        return json.dumps(self.stable_dict(), sort_keys=True, indent=2)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, out_dir) -> Path:
        """Write ``report.json`` and every artifact into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in sorted(self.artifacts.items()):
            (out / name).write_text(content if isinstance(content, str) else json.dumps(_clean(content), sort_keys=True, indent=2))
        path = out / "report.json"
        path.write_text(self.to_json() + "\n")
        return path


def _new_report(command: str, problem: Problem, config: RunConfig) -> RunReport:
    cfg = config.to_dict()
    cfg.pop("out", None)
    cfg.pop("source", None)
    return RunReport(command, problem.to_dict(), cfg)


@contextmanager
def _timed(report: RunReport, key: str):
    t0 = time.perf_counter()
    yield
    report.timings[key] = time.perf_counter() - t0


def _levels(config: RunConfig, command: str) -> tuple:
    return config.levels if config.levels is not None else DEFAULT_LEVELS[command]


def _orders(values) -> list:
    v = np.abs(np.asarray(values, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(v[:-1] / v[1:]).tolist()


# ---------------------------------------------------------------------------
# check / green / positivity
# ---------------------------------------------------------------------------

def _kernel(problem: Problem, config: RunConfig, interior: bool = False) -> GreenKernel:
    return compute_kernel(problem, config.mesh, uniform_grid(config.grid, include_ends=not interior))


def _positivity_check(kernel: GreenKernel, config: RunConfig) -> dict:
    rep = positivity_report(kernel, config.tolerances.boundary_margin, config.tolerances.positivity)
    d = rep.to_dict()
    d["pass"] = rep.classification in ("closed-uniform-positive", "interior-positive")
    return d


def run_check(problem: Problem, config: RunConfig) -> RunReport:
    """Validate, factorize and classify the kernel sign."""
    report = _new_report("check", problem, config)
    with _timed(report, "check"):
        v = validate_problem(problem, strict=False)
        report.checks["validation"] = {**v.to_dict(), "pass": v.passed}
        if not v.passed:
            return report
        try:
            fact = discretize(problem, config.mesh, uniform_grid(config.grid))
        except NotPositiveDefinite as exc:
            report.checks["factorization"] = {"pass": False, "message": str(exc), "min_pivot": exc.min_pivot}
            return report
        report.checks["factorization"] = {"pass": True, "n_elements": fact.mesh.n_elements,
                                          "min_pivot": fact.min_pivot,
                                          "pivot_tol": fact.pivot_tol}
        kernel = green_matrix(fact, uniform_grid(config.grid), uniform_grid(config.grid))
        report.checks["positivity"] = _positivity_check(kernel, config)
    return report


def run_green(problem: Problem, config: RunConfig) -> RunReport:
    """Kernel samples as CSV plus symmetry and sign summaries."""
    report = _new_report("green", problem, config)
    with _timed(report, "kernel"):
        kernel = _kernel(problem, config)
    scale = float(np.max(np.abs(kernel.values)))
    defect = kernel.symmetry_defect()
    report.checks["symmetry"] = {"defect": defect, "tolerance": config.tolerances.exact,
                                 "pass": defect <= config.tolerances.exact}
    report.checks["positivity"] = {**positivity_report(kernel, config.tolerances.boundary_margin,
                                                       config.tolerances.positivity).to_dict(),
                                   "max_abs": scale}
    report.artifacts["kernel.csv"] = kernel.to_csv()
    return report


# ---------------------------------------------------------------------------
# sign counting
# ---------------------------------------------------------------------------

def run_signs(problem: Problem, config: RunConfig) -> RunReport:
    """Verdict for the single load ``random_sign_pattern(config.n, config.seed)``."""
    report = _new_report("signs", problem, config)
    with _timed(report, "solve"):
        fact = discretize(problem, config.mesh)
        f = random_sign_pattern(config.n, config.seed)
        y = solve(fact, f)
        res = verify_nondecrease(fact, f, y=y)
    report.checks["nondecrease"] = res.to_dict()
    if not res.passed:
        report.artifacts["witness.json"] = _witness(fact, f, y, res, {"n": config.n, "seed": config.seed})
    return report


def _witness(fact, f: SampledFunction, y: FiniteElementFunction, res, origin: dict) -> dict:
    return {"origin": origin, "n_elements": int(fact.mesh.n_elements), "mesh_nodes": fact.mesh.nodes.tolist(),
            "f": f.to_dict(), "y_dofs": np.asarray(y.dofs).tolist(), "n_f": res.n_f, "n_y": res.n_y}


def replay_witness(problem: Problem, witness: dict) -> dict:
    """Re-solve a stored witness on its recorded mesh, without any RNG."""
    fact = factorize(assemble(problem, Mesh(np.asarray(witness["mesh_nodes"]))))
    f = SampledFunction.from_dict(witness["f"])
    y = solve(fact, f)
    res = verify_nondecrease(fact, f, y=y)
    stored = np.asarray(witness["y_dofs"])
    drift = float(np.max(np.abs(np.asarray(y.dofs) - stored))) / max(float(np.max(np.abs(stored))), 1e-300)
    return {"n_f": res.n_f, "n_y": res.n_y, "pass": res.passed, "solution_drift": drift}


def _bump_witness(fact, s: float, t_grid) -> Optional[tuple]:
    """A nonnegative load concentrated near ``s`` whose response changes sign."""
    for w in WITNESS_WIDTHS:
        f = bump(s, w)
        y = solve(fact, f)
        res = verify_nondecrease(fact, f, y=y)
        if not res.passed:
            return f, y, res, w
    return None


def run_verify_suite(problem: Problem, config: RunConfig) -> RunReport:
    """Kernel sign evidence first, then random loads for n = 0..n_max and ``seeds`` seeds.

    Seeds are ``config.seed + k`` for k < ``config.seeds``.  Failures are
    stored as replayable witnesses.  For a sign-changing kernel a bump load at
    the column of the kernel minimum is tried as an explicit witness.
    """
    report = _new_report("suite", problem, config)
    grid = uniform_grid(config.grid)
    with _timed(report, "factorize"):
        fact = discretize(problem, config.mesh, grid)
    with _timed(report, "kernel"):
        kernel = green_matrix(fact, grid, grid)
        pos = positivity_report(kernel, config.tolerances.boundary_margin, config.tolerances.positivity)
    kernel_ok = pos.classification in ("closed-uniform-positive", "interior-positive")
    report.checks["kernel_positivity"] = {**pos.to_dict(), "pass": True,
                                          "hypothesis_supported": kernel_ok}
    witnesses = []
    per_n = {}
    with _timed(report, "suite"):
        for n in range(config.n_max + 1):
            ok = 0
            worst = 0
            for k in range(config.seeds):
                seed = config.seed + k
                f = random_sign_pattern(n, seed)
                y = solve(fact, f)
                res = verify_nondecrease(fact, f, y=y)
                ok += res.passed
                worst = max(worst, res.n_y - res.n_f)
                if not res.passed:
                    witnesses.append(_witness(fact, f, y, res, {"n": n, "seed": seed}))
            per_n[str(n)] = {"runs": config.seeds, "passed": ok, "max_excess": worst}
    total = sum(v["runs"] for v in per_n.values())
    passed = sum(v["passed"] for v in per_n.values())
    report.checks["nondecrease"] = {
        "conditional_on": f"kernel classified {pos.classification}",
        "per_n": per_n, "runs": total, "passed": passed, "pass_fraction": passed / total,
        "pass": passed == total,
    }
    if pos.classification == "sign-changing":
        found = _bump_witness(fact, pos.argmin_closed[1], grid)
        entry = {"pass": found is None, "column": pos.argmin_closed[1]}
        if found is not None:
            f, y, res, w = found
            entry.update(half_width=w, n_f=res.n_f, n_y=res.n_y)
            witnesses.insert(0, _witness(fact, f, y, res, {"bump_center": pos.argmin_closed[1], "half_width": w}))
        report.checks["kernel_witness"] = entry
    if witnesses:
        report.checks["nondecrease"]["witnesses"] = len(witnesses)
        report.artifacts["witnesses.json"] = witnesses
    return report


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------

def run_certificate(problem: Problem, config: RunConfig, count: Optional[int] = None,
                    max_scan: int = 2000) -> RunReport:
    """Interlacing certificates for random loads, each re-checked independently."""
    report = _new_report("certificate", problem, config)
    count = config.seeds if count is None else count
    fact0 = discretize(problem, config.mesh)
    results, skipped, seed = [], 0, config.seed
    with _timed(report, "certificates"):
        while len(results) < count and seed < config.seed + max_scan:
            n = 1 + seed % 3
            f = random_sign_pattern(n, seed)
            y0 = solve(fact0, f)
            if verify_nondecrease(fact0, f, y=y0).n_y < 1:
                skipped += 1
                seed += 1
                continue
            entry = {"seed": seed, "n_f": n}
            try:
                cert, y, fact = sign_chain_certificate(fact0, f, config.tolerances.certificate)
                bad = check_certificate(cert, y, f, problem)
                entry.update({"n_y": cert.n, "m": cert.m, "attempts": cert.attempts,
                              "n_elements": cert.n_elements, "recheck_failures": bad, "pass": not bad})
                report.artifacts[f"certificate_{seed}.json"] = cert.to_dict()
            except Exception as exc:  # report content: a failed search is a failed check
                entry.update({"pass": False, "error": f"{type(exc).__name__}: {exc}"})
            results.append(entry)
            seed += 1
    report.checks["certificates"] = {
        "requested": count, "found": len(results), "skipped_no_sign_change": skipped,
        "cert_tol": config.tolerances.certificate, "results": results,
        "pass": len(results) == count and all(r["pass"] for r in results),
    }
    return report


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def run_transform(problem: Problem, config: RunConfig) -> RunReport:
    """Conjugation residuals of the chosen reduction across dyadic levels."""
    kind = "variable_change" if config.mode == "variable" else "multiplier"
    report = _new_report("transform", problem, config)
    levels = _levels(config, "transform")
    with _timed(report, "study"):
        study = conjugation_study(problem, kind, levels)
    res = study["residuals"]
    tol = config.tolerances
    exact = max(res) <= tol.exact
    order_ok = bool(study["orders"]) and study["orders"][-1] >= tol.conjugation_order
    report.checks["conjugation"] = {**study, "min_order": tol.conjugation_order, "exact_tol": tol.exact,
                                    "exact": exact, "pass": exact or order_ok}
    if kind == "variable_change":
        w: SturmWeight = sturm_weight(SecondOrderProblem(problem.p, problem.q), levels[-1])
        report.checks["sturm_weight"] = {"omega": w.omega, "sigma_0": float(w.sigma(0.0)),
                                         "sigma_1": float(w.sigma(1.0)), "sigma_min": w.sigma_min,
                                         "integral": w.integral(), "n_elements": levels[-1],
                                         "pass": w.sigma_min > 0}
    return report


# ---------------------------------------------------------------------------
# total nonnegativity and restriction
# ---------------------------------------------------------------------------

def run_tn(problem: Problem, config: RunConfig) -> RunReport:
    """Compound minors up to ``config.order`` on an interior grid of ``config.grid`` points."""
    report = _new_report("tn", problem, config)
    with _timed(report, "kernel"):
        kernel = _kernel(problem, config, interior=True)
    with _timed(report, "minors"):
        tn = tn_report(kernel, min(config.order, config.grid), config.tolerances.minor, seed=config.seed)
    report.checks["tn"] = {**tn.to_dict(), "pass": tn.passed}
    return report


def _embedded_load(n: int, seed: int, eps: float) -> SampledFunction:
    """``random_sign_pattern`` squeezed into [eps, 1 - eps], zero outside."""
    g = random_sign_pattern(n, seed)
    pts = eps + (1 - 2 * eps) * g.points
    vals = g.values.copy()
    vals[0] = vals[-1] = 0.0
    return SampledFunction(np.concatenate([[0.0], pts, [1.0]]), np.concatenate([[0.0], vals, [0.0]]))


def run_restrict(problem: Problem, config: RunConfig) -> RunReport:
    """Kernel positivity on [eps, 1 - eps]^2 and sign counts for loads supported there.

    Response sign changes are counted on [eps, 1 - eps] only.
    """
    report = _new_report("restrict", problem, config)
    eps = config.eps
    grid = np.union1d(uniform_grid(config.grid), [eps, 1 - eps])
    with _timed(report, "kernel"):
        fact = discretize(problem, config.mesh, grid)
        kernel = restrict_kernel(green_matrix(fact, grid, grid), eps)
    pos = positivity_report(kernel, 0.0, config.tolerances.positivity)
    report.checks["restricted_positivity"] = {**pos.to_dict(), "eps": eps,
                                              "pass": pos.classification == "closed-uniform-positive"}
    x = sample_grid(fact.mesh)
    x = x[(x >= eps) & (x <= 1 - eps)]
    ok, total, fails = 0, 0, []
    for n in range(config.n_max + 1):
        for k in range(config.seeds):
            f = _embedded_load(n, config.seed + k, eps)
            res = verify_nondecrease(fact, f, eval_grid=x)
            total += 1
            ok += res.passed
            if not res.passed:
                fails.append({"n": n, "seed": config.seed + k, "n_f": res.n_f, "n_y": res.n_y})
    report.checks["interior_nondecrease"] = {"runs": total, "passed": ok, "failures": fails[:50],
                                             "pass": ok == total}
    return report


# ---------------------------------------------------------------------------
# refinement and the three-point residuals
# ---------------------------------------------------------------------------

def refinement_study(problem: Problem, point, levels) -> dict:
    """``G_h(t, s)`` on dyadic meshes with observed self-convergence orders."""
    levels = [int(v) for v in levels]
    if len(levels) < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    t, s = point
    values = [float(compute_kernel(problem, n, [t], [s]).values[0, 0]) for n in levels]
    diffs = np.diff(values).tolist()
    return {"levels": levels, "point": [t, s], "values": values, "differences": diffs,
            "orders": _orders(diffs) if len(diffs) >= 2 else []}


def run_refine(problem: Problem, config: RunConfig) -> RunReport:
    report = _new_report("refine", problem, config)
    with _timed(report, "study"):
        study = refinement_study(problem, config.point, _levels(config, "refine"))
    tol = config.tolerances
    scale = max(abs(v) for v in study["values"]) or 1.0
    exact = max(abs(d) for d in study["differences"]) <= tol.exact * max(scale, 1.0)
    order_ok = bool(study["orders"]) and study["orders"][-1] >= tol.conjugation_order
    report.checks["refinement"] = {**study, "exact": exact, "exact_tol": tol.exact,
                                   "min_order": tol.conjugation_order, "pass": exact or order_ok}
    return report


def threepoint_residuals(problem: Problem, n_elements: int, load: float = 1.0) -> dict:
    fact = discretize(problem, n_elements)
    y = solve(fact, SampledFunction(np.array([0.0, 1.0]), np.array([load, load])))
    ynorm = y.sup_norm()
    rows = strong_residuals(y, problem, load)
    for r in rows:
        r["relative"] = abs(r["residual"]) / ynorm
    interior = [a for a in problem.atom_locations() if 0.0 < a < 1.0]
    return {"n_elements": n_elements, "y_sup": ynorm, "residuals": rows,
            "max_relative": max(r["relative"] for r in rows),
            "jumps": {str(a): continuity_jumps(y, a) for a in interior}}


def run_threepoint_residuals(problem: Problem, config: RunConfig) -> RunReport:
    """Strong-form point conditions of the weak solution for a constant load."""
    report = _new_report("residuals", problem, config)
    levels = _levels(config, "residuals")
    if len(levels) < 3:
        raise ValueError("residual decay needs at least 3 levels")
    tol = config.tolerances
    with _timed(report, "solves"):
        rows = [threepoint_residuals(problem, n, config.load) for n in levels]
    finest = rows[-1]
    orders = _orders([r["max_relative"] for r in rows])
    report.checks["residuals"] = {"finest": finest, "tolerance": tol.residual,
                                  "pass": finest["max_relative"] <= tol.residual}
    fit = float(np.polyfit(np.log(levels), -np.log([r["max_relative"] for r in rows]), 1)[0])
    report.checks["decay"] = {"levels": list(levels), "max_relative": [r["max_relative"] for r in rows],
                              "orders": orders, "fitted_order": fit, "min_order": tol.residual_order,
                              "pass": fit >= tol.residual_order}
    return report


COMMANDS = {
    "check": run_check,
    "green": run_green,
    "signs": run_signs,
    "suite": run_verify_suite,
    "certificate": run_certificate,
    "transform": run_transform,
    "tn": run_tn,
    "restrict": run_restrict,
    "refine": run_refine,
    "residuals": run_threepoint_residuals,
}


def run(command: str, problem: Problem, config: RunConfig) -> RunReport:
    """Dispatch with errors captured in the report (exit code 1)."""
    try:
        return COMMANDS[command](problem, config)
    except Exception as exc:
        report = _new_report(command, problem, config)
        report.error = f"{type(exc).__name__}: {exc}"
        return report
