"""Compile the polynomial stabilization conditions into a conic program.

The program is kept in primal standard form::

    minimize    c^T x
    subject to  A x = b,   x in K_1 x ... x K_p

where each block ``K_i`` is a PSD cone, a nonnegative orthant or a free
block.  PSD blocks are stored by their upper-triangular entries
(row-major), and a coefficient on entry ``(i, j)`` multiplies the matrix
value ``X[i, j]`` (so ``<A_k, X>`` has off-diagonal weight halved when the
coefficient vector is read back as a symmetric matrix).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .beam_model import BeamModel
from .polynomials import Poly, PolyMatrix

PSD = "psd"
NONNEG = "nonneg"
FREE = "free"

EPS1 = 1e-6
RESIDUAL_TOL = 1e-7


class PreconditionError(ValueError):
    """Bad arguments handed to the program assembler."""


class CertificationError(RuntimeError):
    """A returned solution does not satisfy the program it came from."""


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    size: int
    name: str
    offset: int

    @property
    def length(self) -> int:
        if self.kind == PSD:
            return self.size * (self.size + 1) // 2
        return self.size

    def index(self, i: int, j: Optional[int] = None) -> int:
        """Position in the decision vector of entry ``i`` (or ``(i, j)``)."""
        if self.kind != PSD:
            if j is not None:
                raise IndexError(f"block {self.name!r} is not a matrix block")
            if not 0 <= i < self.size:
                raise IndexError(i)
            return self.offset + i
        j = i if j is None else j
        if i > j:
            i, j = j, i
        n = self.size
        if not (0 <= i and j < n):
            raise IndexError((i, j))
        return self.offset + i * n - i * (i - 1) // 2 + (j - i)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Symmetric matrix held by this PSD block in decision vector ``x``."""
        n = self.size
        iu = np.triu_indices(n)
        out = np.zeros((n, n))
        out[iu] = x[self.offset : self.offset + self.length]
        return out + np.triu(out, 1).T

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size, "name": self.name, "offset": self.offset}


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    blocks: list
    row_labels: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = sum(blk.length for blk in self.blocks)
        offset = 0
        for blk in self.blocks:
            if blk.offset != offset:
                raise ValueError(f"block {blk.name!r} is not contiguous")
            offset += blk.length
        if self.c.shape != (n,):
            raise ValueError("objective length does not match the cone product")
        if self.A.shape != (len(self.b), n):
            raise ValueError("equality map has inconsistent dimensions")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_eq(self) -> int:
        return self.b.shape[0]

    def block(self, name: str) -> ConeBlock:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    def layout_json(self) -> str:
        """JSON dump of blocks and decision layout, for debugging."""
        payload = {
            "n_vars": self.n_vars,
            "n_eq": self.n_eq,
            "blocks": [blk.to_dict() for blk in self.blocks],
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(type(obj))


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`."""

    def __init__(self):
        self.blocks: list = []
        self._offset = 0
        self._rows: list = []
        self._cols: list = []
        self._vals: list = []
        self._rhs: list = []
        self._labels: list = []
        self._obj: dict = {}
        self.metadata: dict = {}

    def add_block(self, kind: str, size: int, name: str) -> ConeBlock:
        if kind not in (PSD, NONNEG, FREE):
            raise ValueError(kind)
        if any(blk.name == name for blk in self.blocks):
            raise ValueError(f"duplicate block name {name!r}")
        blk = ConeBlock(kind, int(size), name, self._offset)
        self.blocks.append(blk)
        self._offset += blk.length
        return blk

    def add_equality(self, coeffs: dict, rhs: float, label: str = "") -> int:
        row = len(self._rhs)
        for col, val in coeffs.items():
            if val != 0.0:
                self._rows.append(row)
                self._cols.append(col)
                self._vals.append(float(val))
        self._rhs.append(float(rhs))
        self._labels.append(label)
        return row

    def set_objective(self, col: int, value: float) -> None:
        self._obj[col] = float(value)

    def build(self) -> ConicProgram:
        n = self._offset
        m = len(self._rhs)
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(m, n))
        A.sum_duplicates()
        c = np.zeros(n)
        for col, val in self._obj.items():
            c[col] = val
        return ConicProgram(
            c=c,
            A=A,
            b=np.array(self._rhs, dtype=float),
            blocks=list(self.blocks),
            row_labels=list(self._labels),
            metadata=dict(self.metadata),
        )


# ---------------------------------------------------------------------------
# polynomials whose coefficients are affine in the decision vector


class AffinePoly:
    """Polynomial whose coefficients are affine expressions.

    ``terms[k]`` maps decision-vector positions to coefficients; the key
    ``None`` holds the constant part.
    """

    def __init__(self, terms=None):
        self.terms = [dict(t) for t in (terms or [{}])]

    @classmethod
    def from_poly(cls, p: Poly) -> "AffinePoly":
        return cls([{None: float(c)} for c in p.coeffs])

    @classmethod
    def variable(cls, cols) -> "AffinePoly":
        """Polynomial whose k-th coefficient is decision variable ``cols[k]``."""
        return cls([{int(c): 1.0} for c in cols])

    @property
    def degree(self) -> int:
        for k in range(len(self.terms) - 1, -1, -1):
            if any(v != 0.0 for v in self.terms[k].values()):
                return k
        return 0

    def _padded(self, n):
        return self.terms + [{} for _ in range(n - len(self.terms))]

    def __add__(self, other):
        other = _as_affine(other)
        n = max(len(self.terms), len(other.terms))
        out = []
        for a, b in zip(self._padded(n), other._padded(n)):
            d = dict(a)
            for key, val in b.items():
                d[key] = d.get(key, 0.0) + val
            out.append(d)
        return AffinePoly(out)

    __radd__ = __add__

    def scale(self, s: float) -> "AffinePoly":
        return AffinePoly([{k: s * v for k, v in t.items()} for t in self.terms])

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-_as_affine(other))

    def times_poly(self, p: Poly) -> "AffinePoly":
        out = [dict() for _ in range(len(self.terms) + len(p.coeffs) - 1)]
        for k, t in enumerate(self.terms):
            for j, pc in enumerate(p.coeffs):
                if pc == 0.0:
                    continue
                d = out[k + j]
                for key, val in t.items():
                    d[key] = d.get(key, 0.0) + pc * val
        return AffinePoly(out)

    def derivative(self) -> "AffinePoly":
        if len(self.terms) <= 1:
            return AffinePoly([{}])
        return AffinePoly([{k: j * v for k, v in t.items()} for j, t in enumerate(self.terms) if j > 0])

    def coefficient(self, k: int) -> dict:
        return dict(self.terms[k]) if k < len(self.terms) else {}

    def evaluate(self, x_vec: np.ndarray) -> Poly:
        """Numeric polynomial at the decision vector ``x_vec``."""
        coeffs = []
        for t in self.terms:
            coeffs.append(sum(v * (1.0 if key is None else x_vec[key]) for key, v in t.items()))
        return Poly(coeffs)


def _as_affine(obj) -> AffinePoly:
    if isinstance(obj, AffinePoly):
        return obj
    if isinstance(obj, Poly):
        return AffinePoly.from_poly(obj)
    return AffinePoly([{None: float(obj)}])


def gram_poly(block: ConeBlock) -> AffinePoly:
    """``z(x)^T W z(x)`` with ``z = (1, x, ..., x^m)`` for PSD block ``W``."""
    m = block.size - 1
    terms = [dict() for _ in range(2 * m + 1)]
    for a in range(m + 1):
        for bb in range(a, m + 1):
            col = block.index(a, bb)
            terms[a + bb][col] = terms[a + bb].get(col, 0.0) + (1.0 if a == bb else 2.0)
    return AffinePoly(terms)


def _equate(builder: ProgramBuilder, lhs: dict, gram: dict, label: str) -> None:
    """Add ``lhs == gram`` where both are affine dicts (``None`` = constant)."""
    coeffs = {}
    for key, val in lhs.items():
        if key is not None:
            coeffs[key] = coeffs.get(key, 0.0) + val
    for key, val in gram.items():
        coeffs[key] = coeffs.get(key, 0.0) - val
    builder.add_equality(coeffs, -lhs.get(None, 0.0), label)


def scalar_sos_gram(builder: ProgramBuilder, p, degree: int, name: str) -> ConeBlock:
    """Constrain ``p`` to be a sum of squares of degree ``degree``.

    Emits one PSD block of size ``degree/2 + 1`` and one equality per
    coefficient of ``p``.
    """
    p = _as_affine(p)
    if degree % 2:
        raise PreconditionError(f"SOS target degree must be even, got {degree}")
    if p.degree > degree:
        raise PreconditionError(f"polynomial degree {p.degree} exceeds Gram target {degree}")
    W = builder.add_block(PSD, degree // 2 + 1, name)
    gp = gram_poly(W)
    for k in range(degree + 1):
        _equate(builder, p.coefficient(k), gp.coefficient(k), f"{name}[x^{k}]")
    return W


def matrix_sos_gram(builder: ProgramBuilder, P: dict, dim: int, degree: int, name: str) -> ConeBlock:
    """Constrain the symmetric polynomial matrix ``P`` to be SOS.

    ``P`` maps ``(i, j)`` with ``i <= j`` to affine polynomials (missing
    entries are zero).  The Gram block uses the basis ``I_dim (x) z(x)``.
    """
    if degree % 2:
        raise PreconditionError(f"SOS target degree must be even, got {degree}")
    if any(i > j for (i, j) in P):
        lower = {(i, j): v for (i, j), v in P.items() if i > j}
        for (i, j), v in lower.items():
            upper = P.get((j, i))
            if upper is None or not _affine_close(upper, v):
                raise PreconditionError("polynomial matrix is not symmetric")
        P = {k: v for k, v in P.items() if k[0] <= k[1]}
    m = degree // 2
    W = builder.add_block(PSD, dim * (m + 1), name)
    for i in range(dim):
        for j in range(i, dim):
            pij = _as_affine(P.get((i, j), 0.0))
            if pij.degree > degree:
                raise PreconditionError(f"entry ({i},{j}) exceeds Gram target degree")
            for k in range(degree + 1):
                gram = {}
                for a in range(max(0, k - m), min(m, k) + 1):
                    bb = k - a
                    col = W.index(i * (m + 1) + a, j * (m + 1) + bb)
                    weight = 1.0
                    gram[col] = gram.get(col, 0.0) + weight
                _equate(builder, pij.coefficient(k), gram, f"{name}[{i},{j}][x^{k}]")
    return W


def _affine_close(a: AffinePoly, b: AffinePoly, atol: float = 1e-12) -> bool:
    diff = _as_affine(a) - _as_affine(b)
    return all(abs(v) <= atol for t in diff.terms for v in t.values())


def _even_up(d: int) -> int:
    return d + (d % 2)


# ---------------------------------------------------------------------------
# the region-of-attraction program


@dataclass
class Certificate:
    """A solved instance: Lyapunov weight, boundary block and multipliers.

    Polynomials are in the physical coordinate ``x in [0, length]``.
    """

    q: list
    kappa_tilde: np.ndarray
    beta: float
    s1: Poly
    s2: Poly
    s3: Poly
    gamma: float
    nu: float
    degree_q: int
    degree_s: int
    length: float

    @property
    def Q(self) -> PolyMatrix:
        return PolyMatrix.diag(self.q)

    def q_values(self, x) -> np.ndarray:
        """Diagonal of ``Q`` at points ``x``; shape ``(len(x), 12)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([p(x) for p in self.q], axis=1)

    def q_derivative_values(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([p.derivative()(x) for p in self.q], axis=1)

    def to_dict(self) -> dict:
        return {
            "q": [p.to_list() for p in self.q],
            "kappa_tilde": np.asarray(self.kappa_tilde).tolist(),
            "beta": float(self.beta),
            "s1": self.s1.to_list(),
            "s2": self.s2.to_list(),
            "s3": self.s3.to_list(),
            "gamma": float(self.gamma),
            "nu": float(self.nu),
            "degree_q": int(self.degree_q),
            "degree_s": int(self.degree_s),
            "length": float(self.length),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            q=[Poly(c) for c in d["q"]],
            kappa_tilde=np.asarray(d["kappa_tilde"], dtype=float),
            beta=float(d["beta"]),
            s1=Poly(d["s1"]),
            s2=Poly(d["s2"]),
            s3=Poly(d["s3"]),
            gamma=float(d["gamma"]),
            nu=float(d["nu"]),
            degree_q=int(d["degree_q"]),
            degree_s=int(d["degree_s"]),
            length=float(d["length"]),
        )


def dissipation_matrix(model: BeamModel, q_vals: np.ndarray, dq_vals: np.ndarray) -> np.ndarray:
    """``S = -Q' Dfull + Q B + B^T Q`` for stacked diagonal samples.

    ``q_vals`` and ``dq_vals`` have shape ``(npts, 12)``; returns
    ``(npts, 12, 12)``.
    """
    B = model.B
    d = model.signed_speeds
    QB = q_vals[:, :, None] * B[None, :, :]
    S = QB + np.transpose(QB, (0, 2, 1))
    idx = np.arange(12)
    S[:, idx, idx] -= dq_vals * d[None, :]
    return S


def assemble_roa_sdp(
    model: BeamModel,
    gamma: float,
    nu: float,
    degree_q: int = 4,
    degree_s: int = 4,
    eps1: Optional[float] = EPS1,
    kappa: Optional[np.ndarray] = None,
) -> ConicProgram:
    """Inner program at fixed eigenvalue bounds ``(gamma, nu)``: maximize beta.

    The spatial variable is rescaled to ``xi = x / length`` before
    assembly; :func:`extract_certificate` maps everything back.  With
    ``eps1=None`` the floor ``beta >= eps1`` is dropped, which keeps the
    program feasible for every ``0 < gamma <= nu`` (beta may then come out
    negative).

    Passing ``kappa`` fixes the boundary feedback instead of searching for
    it; the left-end condition ``Q_-(0) D - kappa^T Q_+(0) D kappa >= 0`` is
    then linear in ``q`` and enters as a 6x6 PSD block.
    """
    if not (np.isfinite(gamma) and np.isfinite(nu)):
        raise PreconditionError("gamma and nu must be finite")
    if gamma <= 0:
        raise PreconditionError(f"gamma must be positive, got {gamma}")
    if gamma > nu:
        raise PreconditionError(f"gamma={gamma} exceeds nu={nu}")
    if degree_q < 1 or degree_s < 0:
        raise PreconditionError("polynomial degrees must be positive")
    degree_s = _even_up(int(degree_s))
    degree_q = int(degree_q)
    ell = model.length
    n = 12
    B = model.B
    d = model.signed_speeds
    speeds = model.speeds
    target = _even_up(max(degree_q, degree_s + 2))
    indicator = Poly([0.0, -1.0, 1.0])  # xi (xi - 1)

    bld = ProgramBuilder()
    qblk = bld.add_block(FREE, n * (degree_q + 1), "q")
    bblk = bld.add_block(FREE, 1, "beta")
    beta_col = bblk.index(0)
    q = [AffinePoly.variable([qblk.index(i * (degree_q + 1) + k) for k in range(degree_q + 1)]) for i in range(n)]
    dq = [qi.derivative().scale(1.0 / ell) for qi in q]
    bld.set_objective(beta_col, -1.0)

    # multipliers s1, s2, s3 (SOS of degree degree_s)
    s_blocks = [bld.add_block(PSD, degree_s // 2 + 1, f"s{k}") for k in (1, 2, 3)]
    s_ind = [gram_poly(blk).times_poly(indicator) for blk in s_blocks]

    # dissipation inequality: S - beta I + s1 * indicator * I is SOS
    P = {}
    for i in range(n):
        for j in range(i, n):
            if i == j:
                entry = q[i].scale(2.0 * B[i, i]) - dq[i].scale(d[i]) + s_ind[0]
                entry = entry + AffinePoly([{beta_col: -1.0}])
            else:
                if B[i, j] == 0.0 and B[j, i] == 0.0:
                    continue
                entry = q[i].scale(B[i, j]) + q[j].scale(B[j, i])
            P[(i, j)] = entry
    gram_S = matrix_sos_gram(bld, P, n, target, "gram_S")

    # right end: q_{i+6}(l) >= q_i(l), i.e. q_{i+6}(1) - q_i(1) - t_i = 0 in xi
    end_blk = bld.add_block(NONNEG, 6, "end_slack")
    for i in range(6):
        coeffs = {}
        for k in range(degree_q + 1):
            coeffs[qblk.index((i + 6) * (degree_q + 1) + k)] = 1.0
            coeffs[qblk.index(i * (degree_q + 1) + k)] = coeffs.get(qblk.index(i * (degree_q + 1) + k), 0.0) - 1.0
        coeffs[end_blk.index(i)] = -1.0
        bld.add_equality(coeffs, 0.0, f"end[{i}]")

    if kappa is not None:
        kappa = np.asarray(kappa, dtype=float)
        if kappa.shape != (6, 6) or not np.all(np.isfinite(kappa)):
            raise PreconditionError("kappa must be a finite 6x6 matrix")
        bnd = bld.add_block(PSD, 6, "boundary")
        for i in range(6):
            for j in range(i, 6):
                coeffs = {bnd.index(i, j): 1.0}
                if i == j:
                    coeffs[qblk.index(i * (degree_q + 1))] = -speeds[i]
                for k in range(6):
                    w = kappa[k, i] * kappa[k, j] * speeds[k]
                    if w:
                        col = qblk.index((k + 6) * (degree_q + 1))
                        coeffs[col] = coeffs.get(col, 0.0) + w
                bld.add_equality(coeffs, 0.0, f"boundary_fixed[{i},{j}]")
    else:
        # left end: [[I, kt], [kt^T, Q_-(0) D]] >= 0 with kt free inside the block
        bnd = bld.add_block(PSD, 12, "boundary")
        for i in range(6):
            for j in range(i, 6):
                bld.add_equality({bnd.index(i, j): 1.0}, 1.0 if i == j else 0.0, f"boundary_I[{i},{j}]")
        for i in range(6):
            for j in range(i, 6):
                if i == j:
                    bld.add_equality(
                        {bnd.index(6 + i, 6 + i): 1.0, qblk.index(i * (degree_q + 1)): -speeds[i]},
                        0.0,
                        f"boundary_QD[{i}]",
                    )
                else:
                    bld.add_equality({bnd.index(6 + i, 6 + j): 1.0}, 0.0, f"boundary_QD[{i},{j}]")

    # eigenvalue bounds, one scalar SOS per diagonal entry
    lower_blocks, upper_blocks = [], []
    for i in range(n):
        lower = q[i] - gamma + s_ind[1]
        lower_blocks.append(scalar_sos_gram(bld, lower, target, f"lower[{i}]"))
    for i in range(n):
        upper = -q[i] + nu + s_ind[2]
        upper_blocks.append(scalar_sos_gram(bld, upper, target, f"upper[{i}]"))

    if eps1 is not None:
        floor = bld.add_block(NONNEG, 1, "beta_floor")
        bld.add_equality({beta_col: 1.0, floor.index(0): -1.0}, float(eps1), "beta_floor")

    bld.metadata = {
        "kind": "roa",
        "gamma": float(gamma),
        "nu": float(nu),
        "degree_q": degree_q,
        "degree_s": degree_s,
        "gram_degree": target,
        "length": float(ell),
        "speeds": [float(v) for v in speeds],
        "eps1": None if eps1 is None else float(eps1),
        "q_index": [[qblk.index(i * (degree_q + 1) + k) for k in range(degree_q + 1)] for i in range(n)],
        "beta_index": beta_col,
        "kappa_tilde_index": None if kappa is not None else [[bnd.index(i, 6 + j) for j in range(6)] for i in range(6)],
        "kappa": None if kappa is None else kappa.tolist(),
        "multiplier_blocks": [blk.name for blk in s_blocks],
        "gram_blocks": [gram_S.name] + [b.name for b in lower_blocks + upper_blocks],
    }
    return bld.build()


@dataclass(frozen=True)
class SosDecisionLayout:
    """Where the certificate unknowns sit in the decision vector."""

    q_coeff_index: np.ndarray  # (12, degree_q + 1)
    kappa_tilde_index: np.ndarray  # (6, 6); empty when the feedback is fixed
    beta_index: int
    gram_block_ids: tuple

    def slots(self) -> np.ndarray:
        return np.concatenate([self.q_coeff_index.ravel(), self.kappa_tilde_index.ravel(), [self.beta_index]])


def decision_layout(program: ConicProgram) -> SosDecisionLayout:
    meta = program.metadata
    if meta.get("kind") != "roa":
        raise ValueError("program was not produced by assemble_roa_sdp")
    return SosDecisionLayout(
        q_coeff_index=np.asarray(meta["q_index"], dtype=int),
        kappa_tilde_index=np.asarray(meta["kappa_tilde_index"] or np.zeros((0, 6)), dtype=int),
        beta_index=int(meta["beta_index"]),
        gram_block_ids=tuple(meta["gram_blocks"]) + tuple(meta["multiplier_blocks"]),
    )


def extract_certificate(program: ConicProgram, solution: np.ndarray, tol: float = RESIDUAL_TOL) -> Certificate:
    """Rebuild the certificate from a primal solution of :func:`assemble_roa_sdp`."""
    meta = program.metadata
    if meta.get("kind") != "roa":
        raise ValueError("program was not produced by assemble_roa_sdp")
    x = np.asarray(solution, dtype=float)
    if x.shape != (program.n_vars,):
        raise ValueError("solution length does not match the program")
    res = program.residual(x)
    scale = 1.0 + np.abs(program.b).max(initial=0.0)
    if np.abs(res).max(initial=0.0) > tol * scale:
        worst = int(np.argmax(np.abs(res)))
        raise CertificationError(
            f"Gram residual {abs(res[worst]):.3e} exceeds {tol:g} at {program.row_labels[worst]!r}"
        )
    ell = meta["length"]
    inv = 1.0 / ell

    def to_x(p: Poly, s: float = 1.0) -> Poly:
        return p.rescale(inv) * s

    q = [to_x(Poly(x[np.asarray(idx)])) for idx in meta["q_index"]]
    if meta["kappa_tilde_index"] is None:
        # fixed feedback: kappa_tilde = (Q_+(0) D)^(1/2) kappa
        q_plus0 = np.array([q[i + 6](0.0) for i in range(6)])
        kt = np.sqrt(np.maximum(q_plus0, 0.0) * np.asarray(meta["speeds"]))[:, None] * np.asarray(meta["kappa"])
    else:
        kt = x[np.asarray(meta["kappa_tilde_index"])]
    mults = []
    for name in meta["multiplier_blocks"]:
        blk = program.block(name)
        sp_xi = gram_poly(blk).evaluate(x)
        # s(x) x(x - l) = s_xi(xi) xi(xi - 1)  =>  s(x) = s_xi(x/l) / l^2
        mults.append(to_x(sp_xi, inv * inv))
    return Certificate(
        q=q,
        kappa_tilde=kt,
        beta=float(x[meta["beta_index"]]),
        s1=mults[0],
        s2=mults[1],
        s3=mults[2],
        gamma=meta["gamma"],
        nu=meta["nu"],
        degree_q=meta["degree_q"],
        degree_s=meta["degree_s"],
        length=ell,
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(program: ConicProgram) -> str:
    """Sparse SDPA text (``.dat-s``) of ``program``.

    The program maps onto the SDPA dual form ``max <F0, Y>`` s.t.
    ``<F_k, Y> = c_k``: ``Y`` collects the cone blocks, ``F0 = -C`` and
    ``F_k = A_k``.  Nonnegative entries, and free entries split as
    ``f = f+ - f-``, share one trailing diagonal (LP) block.
    """
    psd_blocks = [blk for blk in program.blocks if blk.kind == PSD]
    lp_entries = []  # (column, sign)
    for blk in program.blocks:
        if blk.kind == NONNEG:
            lp_entries += [(blk.offset + i, 1.0) for i in range(blk.size)]
        elif blk.kind == FREE:
            for i in range(blk.size):
                lp_entries += [(blk.offset + i, 1.0), (blk.offset + i, -1.0)]
    struct = [blk.size for blk in psd_blocks]
    if lp_entries:
        struct.append(-len(lp_entries))
    lines = [
        '"beamroa conic program: maximize <F0,Y> s.t. <Fk,Y> = ck"',
        str(program.n_eq),
        str(len(struct)),
        " ".join(str(s) for s in struct),
        " ".join(_fmt(v) for v in program.b),
    ]

    # column -> list of (block number, row, col, weight) in SDPA matrix terms
    col_map: dict = {}
    for bnum, blk in enumerate(psd_blocks, start=1):
        iu, ju = np.triu_indices(blk.size)
        for t, (i, j) in enumerate(zip(iu, ju)):
            col_map.setdefault(blk.offset + t, []).append((bnum, i + 1, j + 1, 1.0 if i == j else 0.5))
    lp_num = len(psd_blocks) + 1
    for pos, (col, sign) in enumerate(lp_entries, start=1):
        col_map.setdefault(col, []).append((lp_num, pos, pos, sign))

    def emit(k: int, vec_items):
        acc: dict = {}
        for col, val in vec_items:
            for bnum, i, j, w in col_map.get(col, ()):
                key = (bnum, i, j)
                acc[key] = acc.get(key, 0.0) + w * val
        for (bnum, i, j), val in sorted(acc.items()):
            if val != 0.0:
                lines.append(f"{k} {bnum} {i} {j} {_fmt(val)}")

    emit(0, [(col, -v) for col, v in enumerate(program.c) if v != 0.0])
    A = program.A.tocsr()
    for k in range(program.n_eq):
        start, end = A.indptr[k], A.indptr[k + 1]
        emit(k + 1, zip(A.indices[start:end].tolist(), A.data[start:end].tolist()))
    return "\n".join(lines) + "\n"
