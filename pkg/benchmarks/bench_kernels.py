"""Compare the compiled and numpy kernels on the unit-beam workloads.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from beamroa import _kernels_py
from beamroa.beam_model import BeamParameters, build_model
from beamroa.sdp_solver import _Cone, _Scaling
from beamroa.simulator import default_datum, nodes
from beamroa.sos_program import assemble_roa_sdp

try:
    from beamroa import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def schur_workload(model):
    program = assemble_roa_sdp(model, 0.5823, 1.7173)
    cone = _Cone(program)
    x = cone.identity()
    scal = _Scaling(cone, x, x)
    m = program.n_eq

    def run(mod):
        M = np.zeros((m, m))
        for pd, W in zip(cone.psd, scal.W):
            mod.schur_psd_block(np.ascontiguousarray(W), pd.ptr, pd.ii, pd.jj, pd.vv, pd.eq, M)
        return M

    return run


def upwind_workload(model, n_cells=400, steps=50):
    x = nodes(model, n_cells)
    r0 = default_datum(model, 1e-3)(x) @ model.L.T
    G = np.ascontiguousarray(np.stack(model.G))
    dt = 0.9 * (model.length / n_cells) / model.speeds.max()
    args = (model.signed_speeds.copy(), dt, model.length / n_cells, np.ascontiguousarray(model.B), G, np.eye(6))

    def run(mod):
        r = r0.copy()
        for _ in range(steps):
            r = mod.upwind_step(r, *args, True)
        return r

    return run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    model = build_model(BeamParameters.unit_beam())
    for name, work in (("schur_psd_block", schur_workload(model)), ("upwind_step x50", upwind_workload(model))):
        t_py = _time(lambda: work(_kernels_py), args.repeat)
        line = f"{name:18s} numpy {t_py * 1e3:9.2f} ms"
        if _kernels_c is not None:
            t_c = _time(lambda: work(_kernels_c), args.repeat)
            diff = np.abs(work(_kernels_c) - work(_kernels_py)).max()
            line += f"   cython {t_c * 1e3:9.2f} ms   speedup {t_py / t_c:5.1f}x   max diff {diff:.1e}"
        else:
            line += "   cython unavailable"
        print(line)


if __name__ == "__main__":
    main()
