"""Closed-loop simulation of the beam in Riemann invariants.

Solves ``r_t + Dfull r_x + B r = g(r)`` on ``[0, length]`` with
``r_-(length) = -r_+(length)`` and ``r_+(0) = kappa r_-(0)`` by first-order
upwinding on a uniform node grid.  The first six components of ``r``
travel left, the last six right.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .beam_model import BeamModel
from .sos_program import Certificate

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e3
COMPAT_TOL = 1e-8


class SimulationError(ValueError):
    """Invalid simulation setup (CFL, compatibility, shapes)."""


@dataclass
class SimConfig:
    """Discretization and closed-loop setup.

    ``initial_datum`` is either a callable mapping node coordinates to
    ``(len(x), 12)`` values of ``y = (v, s)`` or such an array sampled on the
    ``n_cells + 1`` nodes.
    """

    n_cells: int = 200
    cfl: float = 0.9
    t_final: float = 20.0
    initial_datum: Union[Callable, np.ndarray, None] = None
    feedback: Optional[np.ndarray] = None
    nonlinear: bool = True
    sample_every: int = 10

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise SimulationError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.n_cells < 2:
            raise SimulationError("need at least two cells")
        if self.t_final <= 0:
            raise SimulationError("t_final must be positive")
        if self.sample_every < 1:
            raise SimulationError("sample_every must be at least 1")


@dataclass
class SimState:
    t: float
    r: np.ndarray  # (n_cells + 1, 12) nodal values
    lyapunov: float = float("nan")
    h1_norm: float = float("nan")


@dataclass
class Trajectory:
    t: np.ndarray
    lyapunov: np.ndarray
    h1_norm: np.ndarray
    v_left: np.ndarray  # v(0, t), (n_samples, 6)
    s_right: np.ndarray  # s(length, t), (n_samples, 6)
    blew_up: bool = False
    final: Optional[SimState] = None
    info: dict = field(default_factory=dict)

    def rows(self):
        for k in range(len(self.t)):
            yield [self.t[k], self.lyapunov[k], self.h1_norm[k], *self.v_left[k], *self.s_right[k]]

    @staticmethod
    def columns():
        return (
            ["t", "lyapunov", "h1_norm"]
            + [f"v{i + 1}_at_0" for i in range(6)]
            + [f"s{i + 1}_at_l" for i in range(6)]
        )


def nodes(model: BeamModel, n_cells: int) -> np.ndarray:
    return np.linspace(0.0, model.length, n_cells + 1)


def stable_dt(model: BeamModel, n_cells: int, cfl: float) -> float:
    dx = model.length / n_cells
    return cfl * dx / float(np.max(model.speeds))


def step(model: BeamModel, state: SimState, dt: float, kappa, nonlinear: bool = True) -> SimState:
    """Advance ``state`` by one explicit upwind step of size ``dt``."""
    r = state.r
    n_cells = r.shape[0] - 1
    dx = model.length / n_cells
    if dt <= 0 or dt > dx / float(np.max(model.speeds)) * (1.0 + 1e-12):
        raise SimulationError(f"dt={dt:.3e} violates the CFL limit {dx / np.max(model.speeds):.3e}")
    G = np.ascontiguousarray(np.stack(model.G)) if nonlinear else np.zeros((12, 12, 12))
    r_new = kernels.upwind_step(
        np.ascontiguousarray(r, dtype=float),
        np.ascontiguousarray(model.signed_speeds),
        float(dt),
        float(dx),
        np.ascontiguousarray(model.B),
        G,
        np.ascontiguousarray(kappa, dtype=float),
        bool(nonlinear),
    )
    return SimState(t=state.t + dt, r=r_new)


def time_derivative(model: BeamModel, r: np.ndarray, nonlinear: bool = True) -> np.ndarray:
    """``r_t = -Dfull r_x - B r + g(r)`` with one-sided differences at the ends."""
    dx = model.length / (r.shape[0] - 1)
    rx = np.gradient(r, dx, axis=0, edge_order=1)
    out = -rx * model.signed_speeds[None, :] - r @ model.B.T
    if nonlinear:
        out += np.einsum("nj,ijk,nk->ni", r, np.stack(model.G), r, optimize=True)
    return out


def lyapunov_eval(model: BeamModel, certificate: Optional[Certificate], state: SimState, nonlinear: bool = True) -> float:
    """Trapezoidal ``int <r, Q r> + <r_t, Q r_t> dx``; ``Q = I`` without a certificate."""
    r = state.r
    x = np.linspace(0.0, model.length, r.shape[0])
    q = certificate.q_values(x) if certificate is not None else np.ones_like(r)
    rt = time_derivative(model, r, nonlinear)
    integrand = np.sum(q * r * r, axis=1) + np.sum(q * rt * rt, axis=1)
    return float(np.trapezoid(integrand, x))


def h1_norm(model: BeamModel, r: np.ndarray) -> float:
    """``||y||_{H^1}`` of ``y = L^-1 r`` by the trapezoid rule."""
    y = r @ model.L_inv.T
    dx = model.length / (r.shape[0] - 1)
    yx = np.gradient(y, dx, axis=0, edge_order=1)
    x = np.linspace(0.0, model.length, r.shape[0])
    return float(np.sqrt(np.trapezoid(np.sum(y * y + yx * yx, axis=1), x)))


def default_datum(model: BeamModel, amplitude: float = 1.0):
    """Smooth datum satisfying both end conditions for any feedback.

    ``v = c (1 - x/l)^2 sin^2(pi x/l)`` and ``s = c sin^2(pi x/l)`` on every
    component: ``v(l) = 0`` and ``s(0) = v(0) = 0``, and all first
    derivatives vanish at both ends.
    """
    ell = model.length

    def datum(x):
        x = np.asarray(x, dtype=float)
        bump = np.sin(np.pi * x / ell) ** 2
        v = amplitude * (1.0 - x / ell) ** 2 * bump
        s = amplitude * bump
        return np.column_stack([np.repeat(v[:, None], 6, axis=1), np.repeat(s[:, None], 6, axis=1)])

    return datum


def scaled_datum(model: BeamModel, target_h1: float, n_cells: int = 400):
    """:func:`default_datum` rescaled to have ``H^1`` norm ``target_h1``."""
    x = nodes(model, n_cells)
    unit = default_datum(model)(x)
    norm = h1_norm(model, unit @ model.L.T)
    return default_datum(model, target_h1 / norm)


def initial_state(model: BeamModel, config: SimConfig) -> SimState:
    x = nodes(model, config.n_cells)
    datum = config.initial_datum if config.initial_datum is not None else default_datum(model, 0.0)
    y0 = np.asarray(datum(x) if callable(datum) else datum, dtype=float)
    if y0.shape != (len(x), 12):
        raise SimulationError(f"initial datum must have shape {(len(x), 12)}, got {y0.shape}")
    r0 = y0 @ model.L.T
    kappa = _feedback(config)
    scale = max(1.0, float(np.abs(r0).max()))
    right = np.abs(r0[-1, :6] + r0[-1, 6:]).max()
    left = np.abs(r0[0, 6:] - kappa @ r0[0, :6]).max()
    if right > COMPAT_TOL * scale or left > COMPAT_TOL * scale:
        raise SimulationError(f"initial datum is not compatible with the boundary conditions ({right:.2e}, {left:.2e})")
    return SimState(t=0.0, r=r0)


def _feedback(config: SimConfig) -> np.ndarray:
    if config.feedback is None:
        raise SimulationError("config.feedback (kappa) is required")
    kappa = np.asarray(config.feedback, dtype=float)
    if kappa.shape != (6, 6):
        raise SimulationError("feedback must be 6x6")
    return kappa


def run(model: BeamModel, config: SimConfig, certificate: Optional[Certificate] = None) -> Trajectory:
    """Integrate to ``config.t_final`` and sample the monitors."""
    kappa = _feedback(config)
    state = initial_state(model, config)
    dt_max = stable_dt(model, config.n_cells, config.cfl)
    n_steps = int(np.ceil(config.t_final / dt_max))
    dt = config.t_final / n_steps
    ts, Ls, hs, vl, sr = [], [], [], [], []
    h0 = h1_norm(model, state.r)
    blew_up = False

    def record(st):
        y_left = model.L_inv @ st.r[0]
        y_right = model.L_inv @ st.r[-1]
        ts.append(st.t)
        Ls.append(lyapunov_eval(model, certificate, st, config.nonlinear))
        hs.append(h1_norm(model, st.r))
        vl.append(y_left[:6])
        sr.append(y_right[6:])

    record(state)
    for k in range(1, n_steps + 1):
        state = step(model, state, dt, kappa, config.nonlinear)
        if k % config.sample_every == 0 or k == n_steps:
            record(state)
            if not np.isfinite(hs[-1]) or (h0 > 0 and hs[-1] > BLOWUP_FACTOR * h0):
                log.warning("norm growth beyond %gx at t=%.3f", BLOWUP_FACTOR, state.t)
                blew_up = True
                break
    final = replace(state, lyapunov=Ls[-1], h1_norm=hs[-1])
    return Trajectory(
        t=np.array(ts),
        lyapunov=np.array(Ls),
        h1_norm=np.array(hs),
        v_left=np.array(vl),
        s_right=np.array(sr),
        blew_up=blew_up,
        final=final,
        info={"dt": dt, "n_steps": n_steps, "h1_initial": h0},
    )


def fit_decay(t: np.ndarray, lyapunov: np.ndarray) -> float:
    """``-slope/2`` of a least-squares line through ``log L`` on the second half."""
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    tt, LL = t[half], lyapunov[half]
    if len(tt) < 2 or np.any(LL <= 0):
        return float("nan")
    slope = np.polyfit(tt, np.log(LL), 1)[0]
    return float(-0.5 * slope)


def simulate_and_fit(model: BeamModel, result, config: SimConfig):
    """Run the closed loop with ``result``'s feedback; return ``(trajectory, alpha)``.

    ``result`` is a :class:`~beamroa.roa_optimizer.RoaResult`.  If
    ``config.feedback`` is unset, the certified ``kappa`` is used.  The fit
    is skipped (``nan``) for a zero datum or after blow-up.
    """
    if config.feedback is None:
        config = replace(config, feedback=np.asarray(result.kappa))
    traj = run(model, config, result.certificate)
    h0 = traj.info["h1_initial"]
    if h0 > result.epsilon:
        log.warning("initial H1 norm %.3e exceeds the certified radius %.3e", h0, result.epsilon)
    if h0 == 0.0 or traj.blew_up:
        return traj, float("nan")
    return traj, fit_decay(traj.t, traj.lyapunov)
