"""Time the numba and numpy routes of every hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is called once per route before timing (JIT warm-up), then the
best of ``--repeat`` runs is reported together with the max difference
between the two routes' outputs.
"""

import json
import time
from itertools import combinations

import click
import numpy as np

from signreg import kernels
from signreg._accel import HAVE_NUMBA
from signreg.fem import assemble, build_mesh
from signreg.problem import stiff_foundation


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(n_elements):
    op = assemble(stiff_foundation(), build_mesh(stiff_foundation(), n_elements))
    ab = op.band
    lb, d, _ = kernels.ldlt_band(ab, use_numba=False)
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal((ab.shape[1], 16))
    signal = np.sin(40 * np.linspace(0, 1, 200_000)) + 1e-3 * rng.standard_normal(200_000)
    g = rng.random((12, 12)) + 12 * np.eye(12)
    sel = np.array(list(combinations(range(12), 3)), dtype=np.int64)
    return {
        "ldlt_band": lambda fast: kernels.ldlt_band(ab, 0.0, use_numba=fast)[1],
        "ldlt_solve": lambda fast: kernels.ldlt_solve(lb, d, rhs, use_numba=fast),
        "alternations": lambda fast: np.array(kernels.alternations(signal, 1e-6, use_numba=fast), dtype=float),
        "minor_table": lambda fast: kernels.minor_table(g, sel, sel, use_numba=fast)[0],
    }


@click.command()
@click.option("--elements", default=4096, show_default=True, help="Mesh size for the band kernels.")
@click.option("--repeat", default=5, show_default=True)
@click.option("--json", "json_out", type=click.Path(dir_okay=False), default=None)
def main(elements, repeat, json_out):
    rows = []
    for name, fn in _cases(elements).items():
        ref = fn(False)
        t_np = _best(lambda: fn(False), repeat)
        if HAVE_NUMBA:
            out = fn(True)  # warm-up compile
            diff = float(np.max(np.abs(out - ref)) / max(np.max(np.abs(ref)), 1e-300))
            t_nb = _best(lambda: fn(True), repeat)
        else:
            diff, t_nb = float("nan"), float("nan")
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb, "rel_diff": diff})
    click.echo(f"{'kernel':<14}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'rel diff':>12}")
    for r in rows:
        click.echo(f"{r['kernel']:<14}{r['numpy_s']:>12.4g}{r['numba_s']:>12.4g}{r['speedup']:>10.1f}{r['rel_diff']:>12.2e}")
    if json_out:
        with open(json_out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
