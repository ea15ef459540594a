"""Outer search over eigenvalue bounds and post-processing of certificates.

For fixed bounds ``gamma <= q_i(x) <= nu`` the inner program maximizes the
dissipation floor ``beta``.  The outer loop maximizes ``beta / C_Q**2`` with
``C_Q = max(nu, 1/gamma)``; the best certificate is then checked by dense
sampling, the boundary feedback is recovered, and the region-of-attraction
bound is evaluated.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from .beam_model import BeamModel
from .linalg import jacobi_eigvalsh
from .sdp_solver import SolveStatus, solve
from .sos_program import (
    EPS1,
    CertificationError,
    Certificate,
    PreconditionError,
    assemble_roa_sdp,
    dissipation_matrix,
    extract_certificate,
)

log = logging.getLogger(__name__)

PENALTY = -1e3
SAMPLE_TOL = 1e-6
STRICT_TOL = 1e-9
DEFAULT_GRID = 500


class FeedbackError(ArithmeticError):
    """The boundary gain cannot be mapped back to a physical feedback."""


class BoundError(ValueError):
    """Decay rate outside the admissible range of the region bound."""


class SearchError(RuntimeError):
    """The outer search found no feasible pair."""


@dataclass(frozen=True)
class Infeasible:
    """Tagged outcome of an inner solve that produced no certificate."""

    gamma: float
    nu: float
    status: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Degrees:
    q: int = 4
    s: int = 4


@dataclass
class SearchOptions:
    xatol: float = 1e-4
    fatol: float = 1e-7
    max_evals: int = 400
    restarts: int = 0
    reinit: int = 4
    seed: int = 0
    tol: float = 1e-8
    workers: int = 1
    grid_n: int = DEFAULT_GRID
    alpha: float = 0.0


@dataclass
class RoaResult:
    gamma: float
    nu: float
    certificate: Certificate
    C_S: float
    C_Q: float
    ratio: float
    kappa: np.ndarray
    kappa_bar: np.ndarray
    delta: float
    alpha: float
    eta: float
    C_IB: float
    epsilon: float
    epsilon_upper: float = 0.0
    sampled_C_S: float = 0.0
    search_ratio: float = 0.0
    margins: dict = field(default_factory=dict)
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "nu": self.nu,
            "C_S": self.C_S,
            "sampled_C_S": self.sampled_C_S,
            "C_Q": self.C_Q,
            "ratio": self.ratio,
            "search_ratio": self.search_ratio,
            "kappa": np.asarray(self.kappa).tolist(),
            "kappa_bar": np.asarray(self.kappa_bar).tolist(),
            "delta": self.delta,
            "alpha": self.alpha,
            "eta": self.eta,
            "C_IB": self.C_IB,
            "epsilon": self.epsilon,
            "epsilon_upper": self.epsilon_upper,
            "margins": {k: v for k, v in self.margins.items() if k != "violations"},
            "evaluations": self.evaluations,
            "certificate": self.certificate.to_dict(),
        }


# ---------------------------------------------------------------------------
# inner solves


def evaluate_pair(model: BeamModel, gamma: float, nu: float, degrees: Degrees = Degrees(), eps1=EPS1, tol=1e-8, kappa=None):
    """Solve the inner program at ``(gamma, nu)``.

    Returns ``(beta, certificate)`` or an :class:`Infeasible` tag.  With
    ``eps1=None`` the floor on ``beta`` is dropped and the program is always
    feasible; ``beta`` may then be negative.  A given ``kappa`` fixes the
    boundary feedback rather than optimizing over it.

    If the floored solve stalls numerically, the relaxed program is solved
    instead.  When its optimum clears the floor, the floor was inactive and
    the relaxed certificate is also optimal for the floored program.
    """
    program = assemble_roa_sdp(model, gamma, nu, degrees.q, degrees.s, eps1=eps1, kappa=kappa)
    report = solve(program, tol=tol)
    if eps1 is not None and report.status in (SolveStatus.ILL_CONDITIONED, SolveStatus.ITERATION_LIMIT):
        relaxed = assemble_roa_sdp(model, gamma, nu, degrees.q, degrees.s, eps1=None, kappa=kappa)
        retry = solve(relaxed, tol=tol)
        if retry.status == SolveStatus.OPTIMAL and -retry.objective >= eps1:
            log.debug("pair (%.6f, %.6f): floor inactive, using the relaxed solve", gamma, nu)
            program, report = relaxed, retry
    if report.status != SolveStatus.OPTIMAL:
        log.debug("pair (%.6f, %.6f): %s", gamma, nu, report.status.value)
        return Infeasible(float(gamma), float(nu), report.status.value)
    cert = extract_certificate(program, report.primal)
    return cert.beta, cert


def enforced_cq(gamma: float, nu: float) -> float:
    return max(nu, 1.0 / gamma)


def ratio_objective(model: BeamModel, gamma: float, nu: float, degrees: Degrees = Degrees(), tol=1e-8) -> float:
    """``beta / max(nu, 1/gamma)**2``, or :data:`PENALTY` when infeasible."""
    out = evaluate_pair(model, gamma, nu, degrees, tol=tol)
    if isinstance(out, Infeasible):
        return PENALTY
    return out[0] / enforced_cq(gamma, nu) ** 2


class _SearchValue:
    """Cached, graded objective for the derivative-free search.

    Uses the relaxed inner program (no floor on ``beta``), so infeasible
    pairs still carry a meaningful value and the simplex is pulled back
    toward the region where ``beta > 0``.  Pairs with ``gamma > nu`` or
    ``gamma <= 0`` get a penalty growing with the violation.
    """

    def __init__(self, model, degrees, tol):
        self.model = model
        self.degrees = degrees
        self.tol = tol
        self.cache: dict = {}

    def __call__(self, p):
        gamma, nu = float(p[0]), float(p[1])
        if gamma <= 1e-3 or gamma > nu:
            viol = max(1e-3 - gamma, 0.0) + max(gamma - nu, 0.0)
            return -PENALTY * (1.0 + viol)
        key = (round(gamma, 12), round(nu, 12))
        if key not in self.cache:
            out = evaluate_pair(self.model, gamma, nu, self.degrees, eps1=None, tol=self.tol)
            if isinstance(out, Infeasible):
                val = -PENALTY
            else:
                val = -out[0] / enforced_cq(gamma, nu) ** 2
            self.cache[key] = val
        return self.cache[key]


def _simplex(x):
    return np.array([x, x + [0.05 * x[0], 0.0], x + [0.0, 0.05 * x[1]]])


def _nelder_mead(task):
    """One search, re-seeded with a fresh simplex at each converged point.

    The objective has a kink along ``nu = 1/gamma`` where the simplex tends
    to collapse before reaching the optimum, so the search is restarted
    from the best vertex until a restart stops improving the value.
    """
    model, degrees, opts, x0 = task
    value = _SearchValue(model, degrees, opts.tol)
    x = np.array([min(x0[0], x0[1]), max(x0[0], x0[1])])
    best = None
    used = 0
    for _ in range(1 + opts.reinit):
        budget = opts.max_evals - used
        if budget <= 3:
            break
        res = scipy.optimize.minimize(
            value,
            x,
            method="Nelder-Mead",
            options={"xatol": opts.xatol, "fatol": opts.fatol, "maxfev": budget, "initial_simplex": _simplex(x)},
        )
        used += res.nfev
        improved = best is None or best.fun - res.fun > opts.fatol * max(1.0, abs(best.fun))
        if best is None or res.fun < best.fun:
            best = res
        if not improved:
            break
        x = best.x
    log.info("search from %s: %s after %d evaluations", x0, best.x, used)
    return best, len(value.cache)


def optimize_ratio(
    model: BeamModel,
    start=(1.0, 1.0),
    options: Optional[SearchOptions] = None,
    degrees: Degrees = Degrees(),
) -> RoaResult:
    """Nelder-Mead over ``(gamma, nu)``; returns the certified optimum."""
    opts = options or SearchOptions()
    starts = [np.asarray(start, dtype=float)]
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.restarts):
        starts.append(starts[0] * np.exp(rng.uniform(-0.3, 0.3, size=2)))
    tasks = [(model, degrees, opts, x0) for x0 in starts]
    if opts.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            runs = list(pool.map(_nelder_mead, tasks))
    else:
        runs = [_nelder_mead(t) for t in tasks]
    best, _ = min(runs, key=lambda run: run[0].fun)
    n_evals = sum(n for _, n in runs)
    gamma, nu = float(best.x[0]), float(best.x[1])
    if best.fun >= 0:
        raise SearchError("no pair with positive dissipation found; run a grid pre-scan (sweep) for a start point")
    out = evaluate_pair(model, gamma, nu, degrees, tol=opts.tol)
    if isinstance(out, Infeasible):
        raise SearchError(f"optimum ({gamma:.6f}, {nu:.6f}) is not certifiable: {out.status}")
    result = build_result(model, out[1], alpha=opts.alpha, grid_n=opts.grid_n)
    result.search_ratio = -float(best.fun)
    result.evaluations = n_evals
    return result


def build_result(model: BeamModel, cert: Certificate, alpha: float = 0.0, grid_n: int = DEFAULT_GRID) -> RoaResult:
    """Certify ``cert``, recover the feedback and evaluate the bounds."""
    kappa, kappa_bar = recover_feedback(model, cert)
    sampled_C_S, C_Q, margins = certify(model, cert, grid_n)
    C_S = cert.beta
    bound = compute_region_bound(model, C_S, C_Q, alpha)
    return RoaResult(
        gamma=cert.gamma,
        nu=cert.nu,
        certificate=cert,
        C_S=C_S,
        C_Q=C_Q,
        ratio=C_S / C_Q**2,
        kappa=kappa,
        kappa_bar=kappa_bar,
        delta=bound["delta"],
        alpha=float(alpha),
        eta=bound["eta"],
        C_IB=bound["C_IB"],
        epsilon=bound["epsilon"],
        epsilon_upper=bound["epsilon_upper"],
        sampled_C_S=sampled_C_S,
        margins=margins,
    )


# ---------------------------------------------------------------------------
# feedback and certification


def _q_plus_d0(model: BeamModel, cert: Certificate) -> np.ndarray:
    q0 = cert.q_values(0.0)[0]
    return q0[6:] * model.speeds


def recover_feedback(model: BeamModel, cert: Certificate):
    """``kappa = (Q_+(0) D)^(-1/2) kappa_tilde`` and the physical gain.

    ``kappa_bar = M D (I - kappa)(I + kappa)^-1``.  Warns when the gain is
    not symmetric positive definite.
    """
    qd = _q_plus_d0(model, cert)
    if np.any(qd <= 0):
        raise FeedbackError("Q_+(0) D is not positive definite")
    kappa = np.asarray(cert.kappa_tilde, dtype=float) / np.sqrt(qd)[:, None]
    I = np.eye(6)
    ipk = I + kappa
    if np.linalg.cond(ipk) > 1e12:
        raise FeedbackError("I + kappa is singular")
    MD = model.sections.M @ model.D
    kappa_bar = MD @ (I - kappa) @ np.linalg.inv(ipk)
    asym = np.abs(kappa_bar - kappa_bar.T).max()
    if asym > 1e-6:
        warnings.warn(f"feedback gain is not symmetric (asymmetry {asym:.2e})", RuntimeWarning)
    elif jacobi_eigvalsh(0.5 * (kappa_bar + kappa_bar.T))[0] <= 0:
        warnings.warn("feedback gain is not positive definite", RuntimeWarning)
    return kappa, kappa_bar


def kappa_from_gain(model: BeamModel, kappa_bar) -> np.ndarray:
    """``kappa = (M D + kappa_bar)^-1 (M D - kappa_bar)``."""
    MD = model.sections.M @ model.D
    return np.linalg.solve(MD + kappa_bar, MD - kappa_bar)


def _sigma_min(model, cert, xs):
    S = dissipation_matrix(model, cert.q_values(xs), cert.q_derivative_values(xs))
    return np.linalg.eigvalsh(S)[:, 0]


def _refine(fn, xs, vals, n_nodes=33, n_minima=3):
    """Chebyshev nodes around the lowest sampled local minima of ``fn``."""
    idx = [i for i in range(len(xs)) if (i == 0 or vals[i] <= vals[i - 1]) and (i == len(xs) - 1 or vals[i] <= vals[i + 1])]
    idx = sorted(idx, key=lambda i: vals[i])[:n_minima]
    best = float(np.min(vals))
    k = np.arange(n_nodes)
    cheb = np.cos(np.pi * (2 * k + 1) / (2 * n_nodes))
    for i in idx:
        a = xs[max(i - 1, 0)]
        b = xs[min(i + 1, len(xs) - 1)]
        nodes = np.concatenate([[a, b], 0.5 * (a + b) + 0.5 * (b - a) * cheb])
        best = min(best, float(np.min(fn(nodes))))
    return best


def certify(model: BeamModel, cert: Certificate, grid_n: int = DEFAULT_GRID, raise_on_failure: bool = True):
    """Sample the stabilization inequalities of ``cert`` on ``[0, length]``.

    Returns ``(C_S, C_Q, margins)``.  ``C_S`` is the sampled minimum of
    ``lambda_min(S(x))``; ``C_Q = max(max q_i, 1 / min q_i)``.  ``margins``
    holds the worst value of each inequality and a ``violations`` list.
    """
    if grid_n < 100:
        raise PreconditionError("grid_n must be at least 100")
    ell = cert.length
    xs = np.linspace(0.0, ell, grid_n)
    sig = _sigma_min(model, cert, xs)
    C_S = _refine(lambda x: _sigma_min(model, cert, x), xs, sig)
    qv = cert.q_values(xs)
    q_max = max(float(qv.max()), -_refine(lambda x: -cert.q_values(x).max(axis=1), xs, -qv.max(axis=1)))
    q_min = min(float(qv.min()), _refine(lambda x: cert.q_values(x).min(axis=1), xs, qv.min(axis=1)))
    C_Q = max(q_max, 1.0 / q_min) if q_min > 0 else np.inf

    qL = cert.q_values(ell)[0]
    end_margin = float(np.min(qL[6:] - qL[:6]))
    q0 = cert.q_values(0.0)[0]
    d = model.speeds
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            kappa, _ = recover_feedback(model, cert)
        K = np.diag(q0[:6] * d) - kappa.T @ np.diag(q0[6:] * d) @ kappa
        boundary_margin = float(jacobi_eigvalsh(0.5 * (K + K.T))[0])
    except FeedbackError:
        boundary_margin = -np.inf
    margins = {
        "dissipation": C_S,
        "end": end_margin,
        "boundary": boundary_margin,
        "q_min": q_min,
        "q_max": q_max,
        "beta_gap": C_S - cert.beta,
    }
    violations = []
    if end_margin < -SAMPLE_TOL:
        violations.append(f"right-end condition Q+(l) >= Q-(l) violated (margin {end_margin:.3e})")
    if boundary_margin < -SAMPLE_TOL:
        violations.append(f"left-end condition Q-(0)D - k^T Q+(0)D k >= 0 violated (margin {boundary_margin:.3e})")
    if C_S <= STRICT_TOL:
        violations.append(f"dissipation condition S(x) > 0 violated (min eigenvalue {C_S:.3e})")
    if q_min <= 0:
        violations.append(f"Lyapunov weight not positive (min q {q_min:.3e})")
    margins["violations"] = violations
    if violations and raise_on_failure:
        raise CertificationError("; ".join(violations))
    return C_S, C_Q, margins


def sigma_profile(model: BeamModel, cert: Certificate, n: int = DEFAULT_GRID):
    """``x``, ``q_i(x)`` and ``lambda_min(S(x))`` samples for plotting."""
    xs = np.linspace(0.0, cert.length, n)
    return xs, cert.q_values(xs), _sigma_min(model, cert, xs)


# ---------------------------------------------------------------------------
# region-of-attraction bound


def _cib(model: BeamModel, delta: float) -> float:
    nd = model.norm_Dfull
    lower = model.C_B + model.C_g * delta
    return max(nd, 1.0 / nd, lower, lower / nd)


def _eps_of_delta(model: BeamModel, C_Q: float, delta):
    delta = np.asarray(delta, dtype=float)
    cib = np.vectorize(lambda d: _cib(model, d))(delta)
    eta = C_Q * (2.0 * cib + 1.0) * model.norm_L * model.norm_L_inv
    return delta / (model.norm_L * 2.0 * model.C1 * eta), eta, cib


def compute_region_bound(model: BeamModel, C_S: float, C_Q: float, alpha: float = 0.0, n_curve: int = 101) -> dict:
    """Decay margin ``delta``, overshoot ``eta`` and the radius ``epsilon``.

    ``epsilon_upper`` is the closed-form bound obtained by dropping the
    ``C_IB`` dependence.  The dict also carries ``curve_delta`` (epsilon
    against delta at this ``C_Q``) and ``curve_alpha`` (epsilon against the
    decay rate).
    """
    if C_S <= 0 or C_Q <= 0:
        raise BoundError("C_S and C_Q must be positive")
    alpha_max = 0.5 * C_S * C_Q
    if not 0.0 <= alpha <= alpha_max:
        raise BoundError(f"alpha must lie in [0, {alpha_max:.6g}], got {alpha}")
    delta = max((C_S - 2.0 * alpha / C_Q) / (4.0 * C_Q * model.C_g), 0.0)
    eps, eta, cib = _eps_of_delta(model, C_Q, delta)
    denom = 4.0 * model.C1 * model.C_g * model.norm_L**2 * model.norm_L_inv
    eps_upper = (C_S / C_Q**2 - 2.0 * alpha / C_Q**3) / denom

    d_max = C_S / (4.0 * C_Q * model.C_g)
    deltas = np.linspace(0.0, d_max, n_curve)
    eps_d, _, _ = _eps_of_delta(model, C_Q, deltas)
    alphas = np.linspace(0.0, alpha_max, n_curve)
    deltas_a = np.maximum((C_S - 2.0 * alphas / C_Q) / (4.0 * C_Q * model.C_g), 0.0)
    eps_a, _, _ = _eps_of_delta(model, C_Q, deltas_a)
    return {
        "delta": float(delta),
        "eta": float(eta),
        "C_IB": float(cib),
        "epsilon": float(eps),
        "epsilon_upper": float(eps_upper),
        "curve_delta": np.column_stack([deltas, eps_d]),
        "curve_alpha": np.column_stack([alphas, eps_a]),
    }


# ---------------------------------------------------------------------------
# sweep


def _sweep_cell(args):
    model, gamma, nu, degrees, tol = args
    if gamma > nu:
        return gamma, nu, np.nan, np.nan, "gamma>nu"
    out = evaluate_pair(model, gamma, nu, degrees, tol=tol)
    if isinstance(out, Infeasible):
        return gamma, nu, np.nan, np.nan, out.status
    beta = out[0]
    return gamma, nu, beta, beta / enforced_cq(gamma, nu) ** 2, "optimal"


def sweep_grid(model, gamma_range, nu_range, n_per_axis, degrees: Degrees = Degrees(), workers: int = 1, tol=1e-8):
    """Ratio on a ``gamma x nu`` grid.

    Returns a list of ``(gamma, nu, beta, ratio, status)`` rows, gamma
    varying slowest.  Infeasible cells have ``nan`` ratio and a status other
    than ``"optimal"``.
    """
    if np.ndim(n_per_axis) == 0:
        n_g = n_n = int(n_per_axis)
    else:
        n_g, n_n = (int(v) for v in n_per_axis)
    if n_g < 1 or n_n < 1:
        raise ValueError("grid needs at least one point per axis")
    for lo, hi in (gamma_range, nu_range):
        if lo <= 0 or hi <= 0 or hi < lo:
            raise ValueError("sweep ranges must be positive and increasing")
    gs = np.linspace(gamma_range[0], gamma_range[1], n_g) if n_g > 1 else np.array([gamma_range[0]])
    ns = np.linspace(nu_range[0], nu_range[1], n_n) if n_n > 1 else np.array([nu_range[0]])
    tasks = [(model, float(g), float(n), degrees, tol) for g in gs for n in ns]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]
