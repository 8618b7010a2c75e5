"""TOML run configurations: a problem definition plus run options.

A config has the sections ``[p]``, ``[q]``, ``[h]``, ``[subspace]``, ``[run]``
and ``[tolerances]`` (all but ``[p]`` optional)::

    name = "threepoint"

    [p]
    constant = 1.0                  # or piecewise = {breakpoints = [...], coefficients = [[...], ...]}
                                    # or sampled = {points = [...], values = [...]}
    [q]
    atoms = ["1.0 1.0 0"]           # "location weight order", or [location, weight, order]

    [h]
    constant = 1.0
    atoms = ["0.5 1 0", "1 1 0", "1 -1 1"]

    [subspace]
    clamp = [0]                     # y(e) = y'(e) = 0
    functionals = ["1 1 0"]         # "endpoint a b":  a y(e) + b y'(e) = 0

    [run]
    mesh = 256

Unknown keys anywhere are errors, reported with their line and column.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import tomli

from .errors import ParseError
from .problem import (AtomicTerm, BoundaryFunctional, GeneralizedCoefficient, Problem, ScalarCoefficient,
                      SubspaceSpec, validate_problem)

BUNDLED = ("cantilever", "threepoint", "prop11", "stiff_foundation", "sturm", "variable_p")


@dataclass(frozen=True)
class Tolerances:
    positivity: float = 1e-9
    boundary_margin: float = 1.0 / 64
    minor: float = 1e-9
    certificate: float = 1e-9
    residual: float = 1e-6
    residual_order: float = 1.5
    conjugation_order: float = 1.8
    exact: float = 1e-10


@dataclass(frozen=True)
class RunConfig:
    """Run options; every field has a default so an empty ``[run]`` is valid."""

    mesh: int = 256
    grid: int = 33
    seeds: int = 50
    seed: int = 0
    n_max: int = 4
    n: int = 2
    load: float = 1.0
    eps: float = 1.0 / 16
    order: int = 4
    levels: Optional[tuple] = None
    point: tuple = (0.5, 0.5)
    mode: str = "variable"
    out: Optional[str] = None
    source: Optional[str] = None
    command: Optional[str] = None
    name: str = ""
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        checks = [
            (2 <= self.mesh <= 65536, "mesh must lie in 2..65536"),
            (2 <= self.grid <= 4097, "grid must lie in 2..4097"),
            (self.seeds >= 1, "seeds must be at least 1"),
            (self.seed >= 0, "seed must be nonnegative"),
            (0 <= self.n_max <= 32 and 0 <= self.n <= 32, "sign-change counts must lie in 0..32"),
            (0.0 < self.eps < 0.5, "eps must lie in (0, 1/2)"),
            (self.order >= 1, "order must be at least 1"),
            (self.mode in ("variable", "multiplier"), "mode must be 'variable' or 'multiplier'"),
            (len(self.point) == 2 and all(0.0 <= v <= 1.0 for v in self.point), "point must be two numbers in [0, 1]"),
        ]
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
            checks.append((all(v >= 2 for v in self.levels), "levels must be element counts >= 2"))
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        for ok, msg in checks:
            if not ok:
                raise ParseError(msg)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = None if self.levels is None else list(self.levels)
        d["point"] = list(self.point)
        return d


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"tolerances", "source", "command", "name"}
_TOL_KEYS = {f.name for f in fields(Tolerances)}
_TOP_KEYS = {"name", "description", "p", "q", "h", "subspace", "run", "tolerances"}
_SMOOTH_KEYS = {"constant", "piecewise", "sampled"}


# ---------------------------------------------------------------------------
# locating keys in the source text (tomli does not keep positions)
# ---------------------------------------------------------------------------

def _locate(text: str, section: Optional[str], key: str) -> tuple:
    lines = text.splitlines()
    start = 0
    if section is not None:
        header = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
        for i, line in enumerate(lines):
            if header.match(line):
                start = i + 1
                break
        else:
            # dotted or inline form: fall back to searching the whole text
            start = 0
    pat = re.compile(r"(^|[\s{,.])" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if section is None and i > start and lines[i].lstrip().startswith("["):
            break
        m = pat.search(lines[i])
        if m:
            return i + 1, m.start() + len(m.group(1)) + 1
    return None, None


def _fail(text, section, key, msg):
    line, col = _locate(text, section, key)
    raise ParseError(msg, line, col)


def _check_keys(text, section, table, allowed):
    for key in table:
        if key not in allowed:
            where = f"[{section}]" if section else "top level"
            _fail(text, section, key, f"unknown key {key!r} at {where}; allowed: {sorted(allowed)}")


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

def _floats(text, section, key, value, what):
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        _fail(text, section, key, f"{what} must be a list of numbers")


def _smooth(text, section, table) -> Optional[ScalarCoefficient]:
    given = [k for k in _SMOOTH_KEYS if k in table]
    if len(given) > 1:
        _fail(text, section, given[1], f"[{section}] takes at most one of {sorted(_SMOOTH_KEYS)}")
    if not given:
        return None
    key = given[0]
    val = table[key]
    if key == "constant":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            _fail(text, section, key, "constant must be a number")
        return ScalarCoefficient.constant(float(val))
    if not isinstance(val, dict):
        _fail(text, section, key, f"{key} must be a table")
    if key == "piecewise":
        _check_keys(text, section, val, {"breakpoints", "coefficients", "local"})
        bp = _floats(text, section, "breakpoints", val.get("breakpoints", []), "breakpoints")
        coefs = [_floats(text, section, "coefficients", c, "each coefficient row")
                 for c in val.get("coefficients", [])]
        return ScalarCoefficient.piecewise(bp, coefs, local=bool(val.get("local", False)))
    _check_keys(text, section, val, {"points", "values"})
    return ScalarCoefficient.sampled(_floats(text, section, "points", val.get("points", []), "points"),
                                     _floats(text, section, "values", val.get("values", []), "values"))


def _atom(text, section, raw) -> AtomicTerm:
    parts = raw.split() if isinstance(raw, str) else raw
    try:
        if not 2 <= len(parts) <= 3:
            raise ValueError
        loc, weight = float(parts[0]), float(parts[1])
        order = int(parts[2]) if len(parts) == 3 else 0
        if len(parts) == 3 and float(parts[2]) != order:
            raise ValueError
    except (TypeError, ValueError):
        _fail(text, section, "atoms", f"atom {raw!r} must be 'location weight [order]'")
    return AtomicTerm(loc, weight, order)


def _generalized(text, section, table) -> GeneralizedCoefficient:
    _check_keys(text, section, table, _SMOOTH_KEYS | {"atoms"})
    atoms = table.get("atoms", [])
    if not isinstance(atoms, list):
        _fail(text, section, "atoms", "atoms must be a list")
    return GeneralizedCoefficient(_smooth(text, section, table), tuple(_atom(text, section, a) for a in atoms))


def _subspace(text, table) -> SubspaceSpec:
    _check_keys(text, "subspace", table, {"clamp", "functionals"})
    out = []
    for e in table.get("clamp", []):
        if e not in (0, 1):
            _fail(text, "subspace", "clamp", "clamp entries must be 0 or 1")
        out += [BoundaryFunctional(int(e), 1.0, 0.0), BoundaryFunctional(int(e), 0.0, 1.0)]
    for raw in table.get("functionals", []):
        parts = raw.split() if isinstance(raw, str) else raw
        try:
            e, a, b = int(parts[0]), float(parts[1]), float(parts[2])
            if len(parts) != 3:
                raise ValueError
        except (TypeError, ValueError, IndexError):
            _fail(text, "subspace", "functionals", f"functional {raw!r} must be 'endpoint a b'")
        out.append(BoundaryFunctional(e, a, b))
    return SubspaceSpec(tuple(out))


def _run(text, table, tol_table, name) -> RunConfig:
    _check_keys(text, "run", table, _RUN_KEYS)
    _check_keys(text, "tolerances", tol_table, _TOL_KEYS)
    try:
        tol = Tolerances(**{k: float(v) for k, v in tol_table.items()})
        kw = dict(table)
        if "levels" in kw:
            kw["levels"] = tuple(kw["levels"])
        if "point" in kw:
            kw["point"] = tuple(kw["point"])
        return RunConfig(**kw, tolerances=tol, name=name)
    except ParseError as exc:
        bad = next((k for k in table if k in str(exc)), None)
        line, col = _locate(text, "run", bad) if bad else (None, None)
        raise ParseError(str(exc), line, col) from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad [run] or [tolerances] value: {exc}") from None


def parse_config(text: str, source: Optional[str] = None) -> tuple:
    """Parse config text into ``(Problem, RunConfig)``.

    The problem is validated (errors from :func:`validate_problem` propagate)
    and returned in canonical form.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"malformed TOML: {exc}", line, col) from None
    _check_keys(text, None, doc, _TOP_KEYS)
    for sec in ("p", "q", "h", "subspace", "run", "tolerances"):
        if sec in doc and not isinstance(doc[sec], dict):
            _fail(text, None, sec, f"{sec} must be a table")
    if "p" not in doc:
        raise ParseError("missing required section [p]")
    _check_keys(text, "p", doc["p"], _SMOOTH_KEYS)
    p = _smooth(text, "p", doc["p"])
    if p is None:
        raise ParseError("[p] needs one of constant, piecewise or sampled")
    problem = Problem(p, _generalized(text, "q", doc.get("q", {})), _generalized(text, "h", doc.get("h", {})),
                      _subspace(text, doc.get("subspace", {})))
    problem = validate_problem(problem).canonical
    name = str(doc.get("name", Path(source).stem if source else ""))
    run = _run(text, doc.get("run", {}), doc.get("tolerances", {}), name)
    return problem, replace(run, source=source)


def bundled_text(name: str) -> str:
    return resources.files("signreg.data").joinpath(f"{name}.toml").read_text()


def load_config(path_or_name: str) -> tuple:
    """Read a config from a file, or a bundled one by name (see :data:`BUNDLED`)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_config(path.read_text(), str(path))
    if path_or_name in BUNDLED:
        return parse_config(bundled_text(path_or_name), path_or_name)
    raise ParseError(f"no config file or bundled config named {path_or_name!r}")
