"""Multivariate polynomials in real coordinates, possibly complex-valued.

Small and vectorized: enough to evaluate custom eigenfunctions, linear
statistics and polynomial vector fields together with their exact
gradients, divergences and Laplacians.
"""

from __future__ import annotations

import numpy as np


class Poly:
    """sum_t coeffs[t] * prod_a x_a ** exponents[t, a]."""

    def __init__(self, exponents, coeffs, dim: int | None = None):
        exps = np.asarray(exponents, dtype=np.int64)
        if exps.ndim == 1:
            exps = exps.reshape(-1, dim if dim is not None else 1)
        if exps.size == 0:
            width = dim if dim is not None else (exps.shape[1] if exps.ndim == 2 else 1)
            exps = np.zeros((0, width), dtype=np.int64)
        if np.any(exps < 0):
            raise ValueError("exponents must be non-negative")
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (exps.shape[0],):
            raise ValueError("need one coefficient per term")
        if not np.iscomplexobj(coeffs):
            coeffs = coeffs.astype(float)
        self.exponents = exps
        self.coeffs = coeffs
        self.dim = exps.shape[1]

    @classmethod
    def constant(cls, c, dim: int) -> "Poly":
        return cls(np.zeros((1, dim), dtype=np.int64), [c])

    @classmethod
    def from_terms(cls, terms, dim: int) -> "Poly":
        """From ``[(exponent tuple, coeff), ...]``."""
        if not terms:
            return cls(np.zeros((0, dim), dtype=np.int64), np.zeros(0))
        exps = [t[0] for t in terms]
        coeffs = [t[1] for t in terms]
        return cls(exps, coeffs)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.coeffs)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exponents.shape[0] == 0:
            return np.zeros(x.shape[:-1], dtype=self.coeffs.dtype)
        mono = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        return mono @ self.coeffs

    def derivative(self, axis: int) -> "Poly":
        e = self.exponents[:, axis]
        keep = e > 0
        exps = self.exponents[keep].copy()
        exps[:, axis] -= 1
        return Poly(exps, self.coeffs[keep] * e[keep], dim=self.dim)

    def gradient(self) -> list["Poly"]:
        return [self.derivative(a) for a in range(self.dim)]

    def laplacian(self) -> "Poly":
        out = Poly(np.zeros((0, self.dim), dtype=np.int64), np.zeros(0, dtype=self.coeffs.dtype))
        for a in range(self.dim):
            out = out + self.derivative(a).derivative(a)
        return out

    def __add__(self, other: "Poly") -> "Poly":
        return Poly(
            np.concatenate([self.exponents, other.exponents]),
            np.concatenate([self.coeffs, other.coeffs]),
            dim=self.dim,
        ).simplify()

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.exponents, self.coeffs * other, dim=self.dim)
        if self.exponents.shape[0] == 0 or other.exponents.shape[0] == 0:
            return Poly(np.zeros((0, self.dim), dtype=np.int64), np.zeros(0))
        exps = (self.exponents[:, None, :] + other.exponents[None, :, :]).reshape(-1, self.dim)
        coeffs = (self.coeffs[:, None] * other.coeffs[None, :]).reshape(-1)
        return Poly(exps, coeffs, dim=self.dim).simplify()

    __rmul__ = __mul__

    def simplify(self) -> "Poly":
        if self.exponents.shape[0] == 0:
            return self
        uniq, inv = np.unique(self.exponents, axis=0, return_inverse=True)
        coeffs = np.zeros(uniq.shape[0], dtype=self.coeffs.dtype)
        np.add.at(coeffs, inv.reshape(-1), self.coeffs)
        keep = coeffs != 0
        return Poly(uniq[keep], coeffs[keep], dim=self.dim)

    def to_json(self) -> list:
        out = []
        for e, c in zip(self.exponents.tolist(), self.coeffs.tolist()):
            if isinstance(c, complex):
                c = [c.real, c.imag]
            out.append({"exponent": e, "coeff": c})
        return out

    @classmethod
    def from_json(cls, terms: list, dim: int) -> "Poly":
        parsed = []
        for t in terms:
            c = t["coeff"]
            if isinstance(c, (list, tuple)):
                c = complex(c[0], c[1])
            e = list(t["exponent"])
            if len(e) != dim:
                raise ValueError(f"exponent {e} does not match dimension {dim}")
            parsed.append((e, c))
        return cls.from_terms(parsed, dim)

    def __repr__(self) -> str:
        return f"Poly({self.to_json()})"
