"""Univariate polynomials and polynomial matrices with dense coefficients.

Coefficients are stored in ascending degree order, ``c[k]`` multiplying
``x**k``.  Everything is double precision; comparisons use an absolute
tolerance of ``COEFF_ATOL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

COEFF_ATOL = 1e-12


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float).ravel()
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1].copy()


class Poly:
    """Real univariate polynomial."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[float] = (0.0,)):
        if not isinstance(coeffs, np.ndarray):
            coeffs = list(coeffs)
        self.coeffs = _trim(coeffs)

    @classmethod
    def constant(cls, value: float) -> "Poly":
        return cls([value])

    @classmethod
    def x(cls) -> "Poly":
        return cls([0.0, 1.0])

    @classmethod
    def interval_indicator(cls, length: float) -> "Poly":
        """``x (x - length)``: nonpositive exactly on ``[0, length]``."""
        return cls([0.0, -float(length), 1.0])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self, atol: float = COEFF_ATOL) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= atol))

    def __call__(self, x):
        # Horner
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.coeffs[-1])
        for c in self.coeffs[-2::-1]:
            out = out * x + c
        return out if out.ndim else float(out)

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        return Poly([float(other)])

    def __add__(self, other):
        other = self._coerce(other)
        n = max(len(self.coeffs), len(other.coeffs))
        c = np.zeros(n)
        c[: len(self.coeffs)] += self.coeffs
        c[: len(other.coeffs)] += other.coeffs
        return Poly(c)

    __radd__ = __add__

    def __neg__(self):
        return Poly(-self.coeffs)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        return Poly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def derivative(self) -> "Poly":
        if self.degree == 0:
            return Poly([0.0])
        k = np.arange(1, len(self.coeffs))
        return Poly(self.coeffs[1:] * k)

    def shift(self, c: float) -> "Poly":
        """Return ``p(x + c)``."""
        out = Poly([0.0])
        xc = Poly([c, 1.0])
        for coef in self.coeffs[::-1]:
            out = out * xc + coef
        return out

    def rescale(self, s: float) -> "Poly":
        """Return ``p(s x)``."""
        return Poly(self.coeffs * float(s) ** np.arange(len(self.coeffs)))

    def allclose(self, other, atol: float = COEFF_ATOL) -> bool:
        other = self._coerce(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        return bool(np.all(np.abs(a - b) <= atol))

    def to_list(self) -> list:
        return [float(c) for c in self.coeffs]

    def __repr__(self):
        return f"Poly({self.to_list()})"


@dataclass
class PolyMatrix:
    """Rectangular matrix of :class:`Poly` entries."""

    entries: list

    def __post_init__(self):
        if not self.entries or any(len(row) != len(self.entries[0]) for row in self.entries):
            raise ValueError("PolyMatrix must be rectangular and non-empty")
        self.entries = [[e if isinstance(e, Poly) else Poly([float(e)]) for e in row] for row in self.entries]

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PolyMatrix":
        return cls([[Poly([0.0]) for _ in range(cols)] for _ in range(rows)])

    @classmethod
    def constant(cls, m) -> "PolyMatrix":
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return cls([[Poly([v]) for v in row] for row in m])

    @classmethod
    def diag(cls, polys: Sequence[Poly]) -> "PolyMatrix":
        n = len(polys)
        out = cls.zeros(n, n)
        for i, p in enumerate(polys):
            out.entries[i][i] = p
        return out

    @property
    def shape(self):
        return len(self.entries), len(self.entries[0])

    @property
    def degree(self) -> int:
        return max(e.degree for row in self.entries for e in row)

    def __call__(self, x: float) -> np.ndarray:
        return np.array([[e(x) for e in row] for row in self.entries], dtype=float)

    def derivative(self) -> "PolyMatrix":
        return PolyMatrix([[e.derivative() for e in row] for row in self.entries])

    def is_symmetric(self, atol: float = COEFF_ATOL) -> bool:
        r, c = self.shape
        if r != c:
            return False
        return all(self.entries[i][j].allclose(self.entries[j][i], atol) for i in range(r) for j in range(i + 1, r))

    def diagonal(self) -> list:
        return [self.entries[i][i] for i in range(min(self.shape))]


def polymatrix_eval(p: PolyMatrix, x: float) -> np.ndarray:
    """Entrywise Horner evaluation of ``p`` at ``x``."""
    return p(x)
