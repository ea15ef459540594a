from dataclasses import replace

import numpy as np
import pytest

from beamroa.beam_model import BeamParameters, build_model
from beamroa.polynomials import Poly
from beamroa.sdp_solver import SolveStatus, solve
from beamroa.sos_program import (
    FREE,
    NONNEG,
    PSD,
    CertificationError,
    PreconditionError,
    ProgramBuilder,
    assemble_roa_sdp,
    decision_layout,
    dissipation_matrix,
    export_sdpa,
    extract_certificate,
    matrix_sos_gram,
    scalar_sos_gram,
)

from oracles import parse_sdpa

GRID = np.linspace(0.0, 1.0, 200)


def put(x, blk, mat):
    mat = np.atleast_2d(mat)
    for i in range(blk.size):
        for j in range(i, blk.size):
            x[blk.index(i, j)] = mat[i, j]


def solve_fixed(build):
    b = ProgramBuilder()
    blk = build(b)
    prog = b.build()
    return prog, blk, solve(prog)


class TestScalarSos:
    def test_square(self):
        prog, W, r = solve_fixed(lambda b: scalar_sos_gram(b, Poly([0, 0, 1]), 2, "W"))
        assert r.status == SolveStatus.OPTIMAL
        np.testing.assert_allclose(W.matrix(r.primal), np.diag([0.0, 1.0]), atol=1e-7)

    def test_shifted_square(self):
        prog, W, r = solve_fixed(lambda b: scalar_sos_gram(b, Poly([1, -2, 1]), 2, "W"))
        assert r.status == SolveStatus.OPTIMAL
        np.testing.assert_allclose(W.matrix(r.primal), [[1, -1], [-1, 1]], atol=1e-7)

    def test_indefinite_is_infeasible(self):
        _, _, r = solve_fixed(lambda b: scalar_sos_gram(b, Poly([0, -1, 1]), 2, "W"))
        assert r.status == SolveStatus.INFEASIBLE

    def test_odd_degree_rejected(self):
        with pytest.raises(PreconditionError):
            scalar_sos_gram(ProgramBuilder(), Poly([0, 1]), 3, "W")
        with pytest.raises(PreconditionError):
            scalar_sos_gram(ProgramBuilder(), Poly([0, 0, 0, 1]), 2, "W")


class TestMatrixSos:
    def test_identity(self):
        P = {(i, i): 1.0 for i in range(12)}
        _, W, r = solve_fixed(lambda b: matrix_sos_gram(b, P, 12, 0, "W"))
        assert r.status == SolveStatus.OPTIMAL
        np.testing.assert_allclose(W.matrix(r.primal), np.eye(12), atol=1e-7)

    def test_diagonal_squares(self):
        sq = Poly([1, -2, 1])
        _, W, r = solve_fixed(lambda b: matrix_sos_gram(b, {(0, 0): sq, (1, 1): sq}, 2, 2, "W"))
        assert r.status == SolveStatus.OPTIMAL
        block = np.array([[1, -1], [-1, 1.0]])
        np.testing.assert_allclose(W.matrix(r.primal), np.kron(np.eye(2), block), atol=1e-6)

    def test_negative_entry_is_infeasible(self):
        P = {(0, 0): 1.0, (1, 1): -1.0}
        _, _, r = solve_fixed(lambda b: matrix_sos_gram(b, P, 2, 0, "W"))
        assert r.status == SolveStatus.INFEASIBLE

    def test_asymmetric_rejected(self):
        P = {(0, 1): Poly([0, 1]), (1, 0): Poly([0, 2])}
        with pytest.raises(PreconditionError):
            matrix_sos_gram(ProgramBuilder(), P, 2, 2, "W")


class TestAssembly:
    def test_gram_size(self, unit_model):
        prog = assemble_roa_sdp(unit_model, 0.5, 2.0)
        assert prog.block("gram_S").size == 48
        assert prog.metadata["gram_degree"] == 6

    def test_layout_is_injective(self, unit_model):
        prog = assemble_roa_sdp(unit_model, 0.5, 2.0)
        lay = decision_layout(prog)
        slots = lay.slots()
        assert len(np.unique(slots)) == len(slots) == 12 * 5 + 36 + 1
        assert slots.min() >= 0 and slots.max() < prog.n_vars
        for name in lay.gram_block_ids:
            assert prog.block(name).kind == PSD

    def test_preconditions(self, unit_model):
        with pytest.raises(PreconditionError):
            assemble_roa_sdp(unit_model, 2.0, 1.0)
        with pytest.raises(PreconditionError):
            assemble_roa_sdp(unit_model, 0.0, 1.0)
        with pytest.raises(PreconditionError):
            assemble_roa_sdp(unit_model, 0.5, np.inf)

    def test_equal_bounds_pin_q(self, unit_model):
        prog = assemble_roa_sdp(unit_model, 0.8, 0.8, eps1=None)
        r = solve(prog)
        assert r.status == SolveStatus.OPTIMAL
        cert = extract_certificate(prog, r.primal)
        np.testing.assert_allclose(cert.q_values(GRID), 0.8, atol=1e-5)


def hand_built_point(model, c, gamma, nu):
    """Feasible point with q == c, kappa_tilde = 0 and zero multipliers."""
    prog = assemble_roa_sdp(model, gamma, nu, eps1=None)
    lay = decision_layout(prog)
    x = np.zeros(prog.n_vars)
    x[lay.q_coeff_index[:, 0]] = c
    S = c * (model.B + model.B.T)
    beta = float(np.linalg.eigvalsh(S)[0])
    x[lay.beta_index] = beta
    m = prog.metadata["gram_degree"] // 2
    G = np.zeros((12 * (m + 1), 12 * (m + 1)))
    G[:: m + 1, :: m + 1] = S - beta * np.eye(12)
    put(x, prog.block("gram_S"), G)
    bnd = np.zeros((12, 12))
    bnd[:6, :6] = np.eye(6)
    bnd[6:, 6:] = c * np.diag(model.speeds[:6])
    put(x, prog.block("boundary"), bnd)
    for i in range(12):
        Wl = np.zeros((m + 1, m + 1))
        Wl[0, 0] = c - gamma
        put(x, prog.block(f"lower[{i}]"), Wl)
        Wl[0, 0] = nu - c
        put(x, prog.block(f"upper[{i}]"), Wl)
    return prog, x, beta


class TestHandBuiltPoint:
    def test_round_trip(self, unit_model):
        prog, x, beta = hand_built_point(unit_model, 1.0, 0.5, 2.0)
        assert np.abs(prog.residual(x)).max() < 1e-12
        cert = extract_certificate(prog, x)
        assert cert.beta == beta
        np.testing.assert_allclose(cert.q_values(GRID), 1.0, atol=1e-14)
        np.testing.assert_array_equal(cert.kappa_tilde, np.zeros((6, 6)))
        for s in (cert.s1, cert.s2, cert.s3):
            assert s.is_zero()
        for blk in prog.blocks:
            if blk.kind == PSD:
                assert np.linalg.eigvalsh(blk.matrix(x))[0] >= -1e-12

    def test_perturbed_point_is_rejected(self, unit_model):
        prog, x, _ = hand_built_point(unit_model, 1.0, 0.5, 2.0)
        x[decision_layout(prog).q_coeff_index[3, 2]] += 1e-3
        with pytest.raises(CertificationError, match="residual"):
            extract_certificate(prog, x)


@pytest.fixture(scope="module")
def solved(unit_model):
    prog = assemble_roa_sdp(unit_model, 0.5823, 1.7173)
    r = solve(prog)
    assert r.status == SolveStatus.OPTIMAL
    return prog, r, extract_certificate(prog, r.primal)


class TestSolvedCertificate:
    def test_beta_slot_is_objective(self, solved):
        prog, r, cert = solved
        assert r.primal[decision_layout(prog).beta_index] == pytest.approx(-r.objective, abs=1e-12)
        assert cert.beta == pytest.approx(-r.objective, abs=1e-12)

    def test_dissipation_holds_on_grid(self, unit_model, solved):
        _, _, cert = solved
        S = dissipation_matrix(unit_model, cert.q_values(GRID), cert.q_derivative_values(GRID))
        lam = np.linalg.eigvalsh(S - cert.beta * np.eye(12))[:, 0]
        assert lam.min() >= -1e-6

    def test_boundary_schur_complement(self, unit_model, solved):
        _, _, cert = solved
        kt = cert.kappa_tilde
        qm = cert.q_values(0.0)[0, :6]
        schur = np.diag(qm * unit_model.speeds[:6]) - kt.T @ kt
        assert np.linalg.eigvalsh(schur)[0] >= -1e-6
        block = np.block([[np.eye(6), kt], [kt.T, np.diag(qm * unit_model.speeds[:6])]])
        assert np.linalg.eigvalsh(block)[0] >= -1e-6

    def test_eigenvalue_bounds_hold(self, solved):
        _, _, cert = solved
        qv = cert.q_values(GRID)
        assert qv.min() >= cert.gamma - 1e-6
        assert qv.max() <= cert.nu + 1e-6
        qe = cert.q_values(1.0)[0]
        assert np.all(qe[6:] >= qe[:6] - 1e-6)

    def test_multipliers_nonnegative(self, solved):
        _, _, cert = solved
        for s in (cert.s1, cert.s2, cert.s3):
            assert s(np.linspace(-3, 3, 101)).min() >= -1e-6

    def test_homogeneity(self, unit_model, solved):
        # scaling (q, gamma, nu) by t scales every constraint, so beta scales by t
        _, r, _ = solved
        r3 = solve(assemble_roa_sdp(unit_model, 3 * 0.5823, 3 * 1.7173, eps1=None))
        assert -r3.objective == pytest.approx(-3 * r.objective, rel=1e-6)


class TestAgainstFrozenOracle:
    @pytest.mark.parametrize("key", ["ref_deg4", "sqrt3_deg4", "narrow_deg4", "ref_deg2", "wide_deg4"])
    def test_beta(self, unit_model, frozen, key):
        ref = frozen["inner_beta_cvxpy_oracle"][key]
        prog = assemble_roa_sdp(unit_model, ref["gamma"], ref["nu"], ref["degree_q"], ref["degree_s"])
        r = solve(prog)
        assert r.status == SolveStatus.OPTIMAL
        assert -r.objective == pytest.approx(ref["beta"], abs=1e-6)

    def test_infeasible_pairs(self, unit_model, frozen):
        for gamma, nu in frozen["infeasible_pairs"]:
            assert solve(assemble_roa_sdp(unit_model, gamma, nu)).status == SolveStatus.INFEASIBLE


class TestNonUnitLength:
    def test_certificate_in_physical_coordinates(self):
        params = replace(BeamParameters.unit_beam(), length=2.0)
        model = build_model(params)
        prog = assemble_roa_sdp(model, 0.5, 2.0)
        r = solve(prog)
        assert r.status == SolveStatus.OPTIMAL
        cert = extract_certificate(prog, r.primal)
        assert cert.length == 2.0
        xs = np.linspace(0.0, 2.0, 200)
        S = dissipation_matrix(model, cert.q_values(xs), cert.q_derivative_values(xs))
        assert np.linalg.eigvalsh(S - cert.beta * np.eye(12))[:, 0].min() >= -1e-6
        qv = cert.q_values(xs)
        assert qv.min() >= 0.5 - 1e-6 and qv.max() <= 2.0 + 1e-6
        # the multipliers certify the rescaled interval, so they are checked there too
        ind = Poly([0.0, -2.0, 1.0])
        q0 = cert.q[0]
        lower = q0 - Poly.constant(0.5) + cert.s2 * ind
        assert lower(np.linspace(-2, 4, 61)).min() >= -1e-5


def sdpa_inner(F_blocks, Y_blocks):
    total = 0.0
    for F, Y in zip(F_blocks, Y_blocks):
        total += float(np.sum(F * Y))
    return total


def sdpa_point(prog, x):
    """Map a decision vector onto SDPA block variables."""
    Y = [blk.matrix(x) for blk in prog.blocks if blk.kind == PSD]
    lp = []
    for blk in prog.blocks:
        vals = x[blk.offset : blk.offset + blk.size]
        if blk.kind == NONNEG:
            lp += vals.tolist()
        elif blk.kind == FREE:
            for v in vals:
                lp += [max(v, 0.0), max(-v, 0.0)]
    if lp:
        Y.append(np.array(lp))
    return Y


class TestSdpaExport:
    def test_round_trip(self, unit_model):
        prog = assemble_roa_sdp(unit_model, 0.5, 2.0, 2, 2)
        c, sizes, F = parse_sdpa(export_sdpa(prog))
        np.testing.assert_array_equal(c, prog.b)
        assert len(F) == prog.n_eq + 1
        rng = np.random.default_rng(3)
        x = rng.standard_normal(prog.n_vars)
        Y = sdpa_point(prog, x)
        assert [y.shape[0] for y in Y] == [abs(s) for s in sizes]
        assert sdpa_inner(F[0], Y) == pytest.approx(-prog.c @ x, abs=1e-10)
        Ax = prog.A @ x
        for k in range(prog.n_eq):
            assert sdpa_inner(F[k + 1], Y) == pytest.approx(Ax[k], abs=1e-10)

    def test_bit_stable(self, unit_model):
        a = export_sdpa(assemble_roa_sdp(unit_model, 0.5, 2.0))
        b = export_sdpa(assemble_roa_sdp(unit_model, 0.5, 2.0))
        assert a == b

    def test_empty_program(self):
        text = export_sdpa(ProgramBuilder().build())
        assert text.splitlines()[1:] == ["0", "0", "", ""]

    def test_one_by_one(self):
        b = ProgramBuilder()
        X = b.add_block(PSD, 1, "X")
        b.add_equality({X.index(0, 0): 1.0}, 1.0)
        b.set_objective(X.index(0, 0), 2.0)
        lines = export_sdpa(b.build()).splitlines()
        assert lines[1:] == ["1", "1", "1", "1.0", "0 1 1 1 -2.0", "1 1 1 1 1.0"]


class TestFixedFeedback:
    def test_zero_feedback_matches_free_search(self, unit_model, frozen):
        ref = frozen["inner_beta_cvxpy_oracle"]["ref_deg4"]
        prog = assemble_roa_sdp(unit_model, ref["gamma"], ref["nu"], kappa=np.zeros((6, 6)))
        assert prog.block("boundary").size == 6
        assert decision_layout(prog).kappa_tilde_index.size == 0
        r = solve(prog)
        assert -r.objective == pytest.approx(ref["beta"], abs=1e-6)
        np.testing.assert_array_equal(extract_certificate(prog, r.primal).kappa_tilde, np.zeros((6, 6)))

    def test_free_end_has_no_decay_certificate(self, unit_model):
        # the undamped beam with a free end conserves energy
        for pair in ((0.5823, 1.7173), (0.05, 5.0)):
            assert solve(assemble_roa_sdp(unit_model, *pair, kappa=np.eye(6))).status == SolveStatus.INFEASIBLE
            relaxed = solve(assemble_roa_sdp(unit_model, *pair, eps1=None, kappa=np.eye(6)))
            assert relaxed.status == SolveStatus.OPTIMAL
            assert -relaxed.objective <= 1e-6

    def test_fixed_gain_round_trips(self, unit_model):
        kappa = 0.3 * np.eye(6)
        prog = assemble_roa_sdp(unit_model, 0.5823, 1.7173, kappa=kappa)
        cert = extract_certificate(prog, solve(prog).primal)
        q0 = cert.q_values(0.0)[0]
        np.testing.assert_allclose(cert.kappa_tilde / np.sqrt(q0[6:] * unit_model.speeds)[:, None], kappa, atol=1e-12)

    def test_rejects_bad_shape(self, unit_model):
        with pytest.raises(PreconditionError):
            assemble_roa_sdp(unit_model, 0.5, 2.0, kappa=np.eye(3))
