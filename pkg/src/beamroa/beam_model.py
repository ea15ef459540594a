"""Coefficients of the intrinsic geometrically exact beam (IGEB) system.

The state is ``y = (v, s)`` (velocities and strains, six components each).
Its diagonal form uses the Riemann invariants ``r = L y``.  Everything in
here is pure and deterministic: a :class:`BeamModel` is built once and then
shared read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .linalg import operator_norm


class ParameterError(ValueError):
    """Invalid or missing beam parameters."""


@dataclass(frozen=True)
class BeamParameters:
    """Sectional constants of an isotropic beam, in product form.

    Inertias are mass moments per unit length (``rho*I2``, ``rho*I3``) and the
    stiffnesses are the products ``E*a``, ``G*a``, ``G*(I2+I3)``, ``E*I2`` and
    ``E*I3``.  ``curvature`` is the constant pre-curvature vector.
    """

    mass_per_length: float
    rotational_inertia_i2: float
    rotational_inertia_i3: float
    axial_stiffness: float
    shear_stiffness: float
    torsional_stiffness: float
    bending_stiffness_2: float
    bending_stiffness_3: float
    k1: float
    k2: float
    k3: float
    length: float
    curvature: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "curvature":
                continue
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{f.name} must be strictly positive, got {value!r}")
        curv = tuple(float(c) for c in self.curvature)
        if len(curv) != 3 or not all(np.isfinite(curv)):
            raise ParameterError("curvature must be a finite 3-vector")
        object.__setattr__(self, "curvature", curv)

    @classmethod
    def unit_beam(cls) -> "BeamParameters":
        """The beam with unitary structural and geometrical properties."""
        return cls(
            mass_per_length=1.0,
            rotational_inertia_i2=1.0,
            rotational_inertia_i3=1.0,
            axial_stiffness=1.0,
            shear_stiffness=1.0,
            torsional_stiffness=1.0,
            bending_stiffness_2=1.0,
            bending_stiffness_3=1.0,
            k1=1.0,
            k2=1.0,
            k3=1.0,
            length=1.0,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "BeamParameters":
        names = [f.name for f in fields(cls)]
        required = [n for n in names if n != "curvature"]
        missing = [n for n in required if n not in data]
        if missing:
            raise ParameterError("missing beam parameter(s): " + ", ".join(missing))
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ParameterError("unknown beam parameter(s): " + ", ".join(unknown))
        kwargs = {n: float(data[n]) for n in required}
        if "curvature" in data:
            kwargs["curvature"] = tuple(data["curvature"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "BeamParameters":
        data = json.loads(Path(path).read_text())
        if "beam" in data and isinstance(data["beam"], dict):
            data = data["beam"]
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["curvature"] = list(self.curvature)
        return out


@dataclass(frozen=True)
class SectionMatrices:
    M: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray


def hat(u) -> np.ndarray:
    """Skew matrix with ``hat(u) @ z == cross(u, z)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise ValueError("hat expects a 3-vector")
    return np.array(
        [
            [0.0, -u[2], u[1]],
            [u[2], 0.0, -u[0]],
            [-u[1], u[0], 0.0],
        ]
    )


def vec(U, atol: float = 1e-12) -> np.ndarray:
    """Inverse of :func:`hat`; rejects matrices that are not skew."""
    U = np.asarray(U, dtype=float)
    if U.shape != (3, 3):
        raise ValueError("vec expects a 3x3 matrix")
    if np.abs(U + U.T).max() > atol:
        raise ValueError("vec expects a skew-symmetric matrix")
    return np.array([U[2, 1], U[0, 2], U[1, 0]])


def L1(u) -> np.ndarray:
    """``[[hat(u2), 0], [hat(u1), hat(u2)]]`` for ``u = (u1, u2)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((6, 6))
    out[:3, :3] = hat(u[3:])
    out[3:, :3] = hat(u[:3])
    out[3:, 3:] = hat(u[3:])
    return out


def L2(u) -> np.ndarray:
    """``[[0, hat(u1)], [hat(u1), hat(u2)]]`` for ``u = (u1, u2)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((6, 6))
    out[:3, 3:] = hat(u[:3])
    out[3:, :3] = hat(u[:3])
    out[3:, 3:] = hat(u[3:])
    return out


def build_section_matrices(params: BeamParameters) -> SectionMatrices:
    p = params
    M = np.diag(
        [
            p.mass_per_length,
            p.mass_per_length,
            p.mass_per_length,
            (p.rotational_inertia_i2 + p.rotational_inertia_i3) * p.k1,
            p.rotational_inertia_i2,
            p.rotational_inertia_i3,
        ]
    )
    C_inv = np.diag(
        [
            p.axial_stiffness,
            p.k2 * p.shear_stiffness,
            p.k3 * p.shear_stiffness,
            p.torsional_stiffness * p.k1,
            p.bending_stiffness_2,
            p.bending_stiffness_3,
        ]
    )
    C = np.diag(1.0 / np.diag(C_inv))
    return SectionMatrices(M=M, C=C, C_inv=C_inv)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BeamModel:
    """All coefficient matrices of the IGEB system and its diagonal form."""

    params: BeamParameters
    sections: SectionMatrices
    A: np.ndarray
    Bbar: np.ndarray
    E: np.ndarray
    L: np.ndarray
    L_inv: np.ndarray
    D: np.ndarray
    Dfull: np.ndarray
    B: np.ndarray
    G: tuple = field(default=())
    C_g: float = 0.0
    C_B: float = 0.0
    norm_L: float = 0.0
    norm_L_inv: float = 0.0
    norm_Dfull: float = 0.0
    C1: float = 0.0

    @property
    def length(self) -> float:
        return self.params.length

    @property
    def speeds(self) -> np.ndarray:
        """Diagonal of ``D`` (positive wave speeds)."""
        return np.diag(self.D).copy()

    @property
    def signed_speeds(self) -> np.ndarray:
        """Diagonal of ``Dfull = diag(-D, D)``."""
        return np.diag(self.Dfull).copy()

    def B_at(self, x: float) -> np.ndarray:
        # constant pre-curvature: B does not depend on x
        return self.B

    def eval_gbar(self, y) -> np.ndarray:
        return eval_gbar(self, y)

    def eval_g(self, r) -> np.ndarray:
        return eval_g(self, r)


def eval_gbar(model: BeamModel, y) -> np.ndarray:
    """Quadratic nonlinearity of the IGEB system in ``y = (v, s)``."""
    y = np.asarray(y, dtype=float)
    v, s = y[:6], y[6:]
    M = model.sections.M
    M_inv = np.diag(1.0 / np.diag(M))
    C_inv = model.sections.C_inv
    Lv = L1(v)
    top = -(M_inv @ (Lv @ (M @ v)) + M_inv @ (L2(C_inv @ s) @ s))
    bottom = Lv.T @ s
    return np.concatenate([top, bottom])


def eval_g(model: BeamModel, r) -> np.ndarray:
    """Nonlinearity in Riemann invariants, ``L gbar(L^-1 r)``."""
    r = np.asarray(r, dtype=float)
    return model.L @ eval_gbar(model, model.L_inv @ r)


def extract_quadratic_forms(model: BeamModel) -> tuple:
    """Symmetric matrices ``G^i`` with ``g_i(r) = <r, G^i r>``, by polarization."""
    n = 12
    eye = np.eye(n)
    diag_vals = np.array([eval_g(model, eye[j]) for j in range(n)])  # (j, i)
    G = np.zeros((n, n, n))
    for j in range(n):
        G[:, j, j] = diag_vals[j]
        for k in range(j + 1, n):
            gjk = eval_g(model, eye[j] + eye[k])
            val = 0.5 * (gjk - diag_vals[j] - diag_vals[k])
            G[:, j, k] = val
            G[:, k, j] = val
    return tuple(_frozen(G[i]) for i in range(n))


def sobolev_constant(length: float) -> float:
    """``sqrt(1 + 1/length)``: the embedding constant used throughout.

    Follows from ``phi(x)^2 <= |phi|_2^2 / length + 2 |phi|_2 |phi'|_2``
    and Young's inequality.
    """
    return float(np.sqrt(1.0 + 1.0 / length))


def compute_constants(model: BeamModel, n_samples: int = 1) -> dict:
    """Scalar constants characterising the lower-order and quadratic terms."""
    xs = np.linspace(0.0, model.length, max(int(n_samples), 1))
    C_B = max(operator_norm(model.B_at(x)) for x in xs)
    C_g = float(np.sqrt(sum(operator_norm(Gi) ** 2 for Gi in model.G))) if model.G else 0.0
    return {
        "C_g": C_g,
        "C_B": C_B,
        "norm_L": operator_norm(model.L),
        "norm_L_inv": operator_norm(model.L_inv),
        "norm_Dfull": operator_norm(model.Dfull),
        "C1": sobolev_constant(model.length),
    }


def build_model(params: BeamParameters) -> BeamModel:
    """Assemble the IGEB coefficients, diagonalization and constants."""
    sec = build_section_matrices(params)
    M, C, C_inv = sec.M, sec.C, sec.C_inv
    M_inv = np.diag(1.0 / np.diag(M))
    I6 = np.eye(6)
    Z6 = np.zeros((6, 6))

    s_bar = np.concatenate([[1.0, 0.0, 0.0], params.curvature])
    E = L1(s_bar)
    MC_inv = np.diag(1.0 / np.diag(M @ C))
    A = np.block([[Z6, -MC_inv], [-I6, Z6]])
    Bbar = np.block([[Z6, -M_inv @ E @ C_inv], [E.T, Z6]])

    D = np.diag(1.0 / np.sqrt(np.diag(M @ C)))
    L = np.block([[I6, D], [I6, -D]])
    D_inv = np.diag(1.0 / np.diag(D))
    L_inv = 0.5 * np.block([[I6, I6], [D_inv, -D_inv]])
    Dfull = np.block([[-D, Z6], [Z6, D]])
    B = L @ Bbar @ L_inv

    model = BeamModel(
        params=params,
        sections=SectionMatrices(_frozen(M), _frozen(C), _frozen(C_inv)),
        A=_frozen(A),
        Bbar=_frozen(Bbar),
        E=_frozen(E),
        L=_frozen(L),
        L_inv=_frozen(L_inv),
        D=_frozen(D),
        Dfull=_frozen(Dfull),
        B=_frozen(B),
    )
    model = replace(model, G=extract_quadratic_forms(model))
    return replace(model, **compute_constants(model))
