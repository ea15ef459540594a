"""Acceptance criteria for the unit-beam study.

Every test appends one ``PASS``/``FAIL`` line to the session summary before
asserting, so the verdicts are listed together at the end of the run.
Reference numbers are fixed unit-beam targets.
"""

import time

import numpy as np
import pytest

from beamroa.beam_model import BeamParameters, build_model, eval_g, eval_gbar
from beamroa.roa_optimizer import (
    Degrees,
    compute_region_bound,
    evaluate_pair,
    kappa_from_gain,
    optimize_ratio,
    sweep_grid,
)
from beamroa.simulator import SimConfig, scaled_datum, simulate_and_fit
from beamroa.sos_program import dissipation_matrix

REF_GAMMA, REF_NU = 0.5823, 1.7173
REF_CS = 0.3380
REF_RATIO = 0.1146
REF_KAPPA_BAR = np.array([1.0079, 0.8725, 0.8549, 1.4397, 0.8530, 0.8528])
REF_EPS = 0.0095
N_RANDOM = 100

pytestmark = pytest.mark.slow


def verdict(lines, number, title, ok, detail):
    lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")
    assert ok, detail


def random_beam(rng, curved=True):
    names = [f for f in BeamParameters.__dataclass_fields__ if f != "curvature"]
    kw = {n: float(rng.uniform(0.3, 3.0)) for n in names}
    kw["curvature"] = tuple(rng.uniform(-0.5, 0.5, 3)) if curved else (0.0, 0.0, 0.0)
    return BeamParameters(**kw)


@pytest.fixture(scope="module")
def degree_runs(unit_model):
    return {p: optimize_ratio(unit_model, (1.0, 1.0), degrees=Degrees(p, p)) for p in (2, 6)}


def test_1_inner_sdp(unit_model, acceptance):
    t0 = time.perf_counter()
    beta, _ = evaluate_pair(unit_model, REF_GAMMA, REF_NU, Degrees(4, 4))
    elapsed = time.perf_counter() - t0
    ok = abs(beta - REF_CS) <= 0.01 and elapsed < 30
    verdict(acceptance, 1, "inner SDP beta", ok, f"beta={beta:.6f} (target {REF_CS} +- 0.01), {elapsed:.1f} s")


def test_2_outer_optimum(unit_optimum, acceptance):
    r = unit_optimum
    dg, dn = abs(r.gamma - REF_GAMMA), abs(r.nu - REF_NU)
    ok = dg <= 0.02 and dn <= 0.02 and abs(r.ratio - REF_RATIO) <= 0.005
    detail = f"(gamma, nu)=({r.gamma:.5f}, {r.nu:.5f}) off by ({dg:.4f}, {dn:.4f}); ratio={r.ratio:.5f} (target {REF_RATIO} +- 0.005); {r.evaluations} evaluations"
    verdict(acceptance, 2, "Nelder-Mead optimum", ok, detail)


def test_3_feedback_matrix(unit_optimum, acceptance):
    kb = unit_optimum.kappa_bar
    diag = np.diag(kb)
    rel = np.abs(diag - REF_KAPPA_BAR) / REF_KAPPA_BAR
    off = np.abs(kb - np.diag(diag)).max()
    ok = bool(np.all(rel <= 0.05) and off < 0.05)
    detail = "diag=" + " ".join(f"{v:.4f}" for v in diag) + f"; worst relative error {rel.max():.3f} (entry {int(np.argmax(rel)) + 1}); max off-diagonal {off:.2e}"
    verdict(acceptance, 3, "feedback matrix", ok, detail)


def test_4_region_bound(unit_model, unit_optimum, acceptance):
    r = unit_optimum
    bound = compute_region_bound(unit_model, r.C_S, r.C_Q, alpha=0.0)
    eps = bound["epsilon_upper"]
    factor = max(eps / REF_EPS, REF_EPS / eps)
    ok = factor <= 1.5
    detail = f"epsilon_upper={eps:.5f} (C1={unit_model.C1:.4f}), epsilon={bound['epsilon']:.3e}; factor {factor:.2f} from {REF_EPS}"
    verdict(acceptance, 4, "region bound at alpha=0", ok, detail)


def test_5_symmetry(unit_optimum, acceptance):
    cert = unit_optimum.certificate
    q = cert.q_values(np.linspace(0.0, cert.length, 1001))
    worst = 0.0
    for k in (3, 5, 6):
        for offset in (0, 6):
            worst = max(worst, float(np.abs(q[:, offset + k - 1] - q[:, offset + 1]).max()))
    verdict(acceptance, 5, "q-profiles of directions 3, 5, 6 match direction 2", worst <= 1e-3, f"sup difference {worst:.2e} (tolerance 1e-3)")


def test_6_degree_robustness(unit_optimum, degree_runs, acceptance):
    base = unit_optimum.ratio
    changes = {p: abs(r.ratio - base) / base for p, r in degree_runs.items()}
    ok = all(c < 0.10 for c in changes.values())
    detail = f"ratio degree 4 {base:.5f}; " + "; ".join(
        f"degree {p} {degree_runs[p].ratio:.5f} at ({degree_runs[p].gamma:.4f}, {degree_runs[p].nu:.4f}) change {100 * c:.1f}%"
        for p, c in changes.items()
    )
    verdict(acceptance, 6, "degree robustness", ok, detail)


def unimodal(seq):
    seq = seq[~np.isnan(seq)]
    if len(seq) < 3:
        return True
    peak = int(np.argmax(seq))
    return bool(np.all(np.diff(seq[: peak + 1]) >= -1e-9) and np.all(np.diff(seq[peak:]) <= 1e-9))


def test_7_contour_sweep(unit_model, unit_optimum, acceptance):
    rows = sweep_grid(unit_model, (0.52, 0.64), (1.56, 1.90), 10)
    ratio = np.array([r[3] for r in rows], dtype=float).reshape(10, 10)
    best = np.nanmax(ratio)
    gap = abs(best - unit_optimum.ratio) / unit_optimum.ratio
    shape = all(unimodal(ratio[i]) for i in range(10)) and all(unimodal(ratio[:, j]) for j in range(10))
    ok = gap <= 0.02 and shape
    i, j = np.unravel_index(np.nanargmax(ratio), ratio.shape)
    detail = f"10x10 grid max {best:.5f} at ({rows[10 * i + j][0]:.4f}, {rows[10 * i + j][1]:.4f}), {100 * gap:.2f}% from optimum; rows and columns unimodal: {shape}"
    verdict(acceptance, 7, "contour sweep", ok, detail)


def test_8_property_suite(acceptance):
    rng = np.random.default_rng(2024)
    failures = {}

    def check(name, ok):
        failures[name] = failures.get(name, 0) + (0 if ok else 1)

    for _ in range(N_RANDOM):
        params = random_beam(rng)
        m = build_model(params)
        check("diagonalization", np.abs(m.L @ m.A @ m.L_inv - m.Dfull).max() < 1e-10)
        P = np.diag(np.concatenate([np.diag(m.sections.M), np.diag(m.sections.C_inv)]))
        y = rng.uniform(-1, 1, 12)
        check("energy orthogonality", abs(eval_gbar(m, y) @ P @ y) < 1e-10 * max(1.0, np.abs(P).max()))
        r = rng.standard_normal(12)
        g = eval_g(m, r)
        check("polarization", np.abs(g - [r @ G @ r for G in m.G]).max() < 1e-10 * max(1.0, np.abs(g).max()))

        kt = rng.standard_normal((6, 6)) * rng.uniform(0, 1)
        qd = np.diag(rng.uniform(0.1, 2.0, 6))
        block_psd = np.linalg.eigvalsh(np.block([[np.eye(6), kt], [kt.T, qd]]))[0] >= -1e-12
        schur_psd = np.linalg.eigvalsh(qd - kt.T @ kt)[0] >= -1e-12
        check("Schur consistency", block_psd == schur_psd)

        gamma = rng.uniform(0.05, 1.0)
        out = evaluate_pair(m, gamma, gamma * rng.uniform(1.0, 5.0), Degrees(2, 2), eps1=None)
        if not out:
            check("beta domination", False)
        else:
            beta, cert = out
            xs = np.linspace(0.0, m.length, 200)
            S = dissipation_matrix(m, cert.q_values(xs), cert.q_derivative_values(xs))
            check("beta domination", np.linalg.eigvalsh(S)[:, 0].min() >= beta - 1e-5 * max(1.0, abs(beta)))
            q0 = cert.q_values(0.0)[0]
            lhs = np.diag(q0[:6] * m.speeds) - cert.kappa_tilde.T @ cert.kappa_tilde
            check("Schur consistency", np.linalg.eigvalsh(lhs)[0] >= -1e-6)

        C_S, C_Q = rng.uniform(1e-3, 5.0), rng.uniform(1.0, 10.0)
        bound = compute_region_bound(m, C_S, C_Q, rng.uniform(0, 1) * 0.5 * C_S * C_Q)
        check("epsilon direction", bound["epsilon"] <= bound["epsilon_upper"] * (1 + 1e-12))
    total = sum(failures.values())
    detail = f"{N_RANDOM} randomized instances per property; failures " + ", ".join(f"{k} {v}" for k, v in failures.items())
    verdict(acceptance, 8, "property suite", total == 0, detail)


def test_9_simulation_decay(unit_model, unit_optimum, acceptance):
    r = unit_optimum
    transit = unit_model.length / float(np.min(unit_model.speeds))
    datum = scaled_datum(unit_model, 0.5 * r.epsilon, 200)
    base = SimConfig(n_cells=200, t_final=20.0, initial_datum=datum)
    cert_traj, alpha_cert = simulate_and_fit(unit_model, r, base)
    after = cert_traj.t >= transit
    monotone = bool(np.all(np.diff(cert_traj.lyapunov[after]) <= 0))

    free_kappa = kappa_from_gain(unit_model, np.zeros((6, 6)))
    free_traj, alpha_free = simulate_and_fit(unit_model, r, SimConfig(n_cells=200, t_final=20.0, initial_datum=datum, feedback=free_kappa))
    no_certificate = not evaluate_pair(unit_model, r.gamma, r.nu, Degrees(4, 4), kappa=free_kappa)
    plateau = free_traj.h1_norm[-1] >= 0.5 * free_traj.h1_norm[0]

    ok = monotone and alpha_cert > 0 and no_certificate and plateau and alpha_free < 0.1 * alpha_cert
    detail = (
        f"certified: L non-increasing after t={transit:.3f}: {monotone}, alpha={alpha_cert:.4f}; "
        f"free end: certificate exists: {not no_certificate}, alpha={alpha_free:.4f}, "
        f"H1 kept {free_traj.h1_norm[-1] / free_traj.h1_norm[0]:.2f} of initial"
    )
    verdict(acceptance, 9, "closed-loop decay", ok, detail)
