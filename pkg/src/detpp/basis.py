"""Eigenfunction families, reference densities and mode samplers.

A basis evaluates all N eigenfunctions at once: ``values(x)`` maps points of
shape (..., d) to (..., N) complex values and ``gradients(x)`` to
(..., N, d). ``sample_mode(j, rng, size)`` draws i.i.d. points from the
probability density |phi_j|^2 rho with respect to Lebesgue measure.
"""

from __future__ import annotations

import numpy as np

from .domain import Ball, DomainDescriptor
from .polynomial import Poly
from .quadrature import domain_rule


class SamplingError(RuntimeError):
    """A rejection envelope could not be built or was violated."""


# -- reference densities ---------------------------------------------------


class UniformDensity:
    """rho = 1 (Lebesgue reference measure)."""

    kind = "uniform"

    def __call__(self, x):
        return np.ones(np.shape(x)[:-1])

    def gradient(self, x):
        return np.zeros(np.shape(x))

    def to_json(self):
        return {"kind": "uniform"}


class ExponentialDensity:
    """rho(x) = scale * exp(a . x)."""

    kind = "exponential"

    def __init__(self, a, scale: float = 1.0):
        self.a = np.asarray(a, dtype=float)
        if not scale > 0:
            raise ValueError("density scale must be positive")
        self.scale = float(scale)

    def __call__(self, x):
        return self.scale * np.exp(np.asarray(x, dtype=float) @ self.a)

    def gradient(self, x):
        return self(x)[..., None] * self.a

    def to_json(self):
        return {"kind": "exponential", "a": self.a.tolist(), "scale": self.scale}


class PolynomialDensity:
    """rho given by a real polynomial that must stay positive on the domain."""

    kind = "polynomial"

    def __init__(self, poly: Poly):
        if poly.is_complex:
            raise ValueError("density polynomial must be real")
        self.poly = poly
        self._grad = poly.gradient()

    def __call__(self, x):
        return self.poly(x)

    def gradient(self, x):
        return np.stack([g(x) for g in self._grad], axis=-1)

    def to_json(self):
        return {"kind": "polynomial", "terms": self.poly.to_json()}


def density_from_json(data: dict | None, dim: int):
    if not data or data.get("kind", "uniform") == "uniform":
        return UniformDensity()
    kind = data["kind"]
    if kind == "exponential":
        return ExponentialDensity(data["a"], data.get("scale", 1.0))
    if kind == "polynomial":
        return PolynomialDensity(Poly.from_json(data["terms"], dim))
    raise ValueError(f"unknown density kind {kind!r}")


# -- rejection sampling from a grid envelope -------------------------------


class GridEnvelopeSampler:
    """Exact rejection sampler for a bounded density on a domain.

    The bounding box is cut into cells; each cell's bound is ``safety`` times
    the largest density value seen on a sub-grid of the cell (plus a floor
    relative to the global maximum, so cells that look empty are still
    covered). A proposal whose density exceeds its cell bound means the
    envelope was wrong and raises SamplingError rather than biasing draws.
    """

    def __init__(self, density, domain: DomainDescriptor, cells: int | None = None,
                 sub: int = 5, safety: float = 1.5, floor: float = 1e-3):
        self.density = density
        self.domain = domain
        d = domain.dimension
        if cells is None:
            cells = {1: 256, 2: 48}.get(d, 8)
        lo, hi = domain.bounds
        self.lo, self.width = lo, (hi - lo) / cells
        self.cells = cells
        centers = np.stack(np.meshgrid(*[np.arange(cells)] * d, indexing="ij"), -1).reshape(-1, d)
        offs = np.stack(np.meshgrid(*[np.linspace(0.0, 1.0, sub)] * d, indexing="ij"), -1).reshape(-1, d)
        pts = lo + (centers[:, None, :] + offs[None, :, :]) * self.width
        vals = self._target(pts.reshape(-1, d)).reshape(len(centers), len(offs))
        if not np.all(np.isfinite(vals)):
            raise SamplingError("density is not finite on the envelope grid")
        if np.any(vals < 0):
            raise SamplingError("density is negative on the envelope grid")
        peak = vals.max()
        if not peak > 0:
            raise SamplingError("density vanishes on the whole envelope grid")
        bound = safety * vals.max(axis=1) + floor * peak
        # cells entirely outside a ball stay at zero
        corner_in = domain.contains(pts.reshape(-1, d)).reshape(len(centers), len(offs)).any(axis=1)
        if isinstance(domain.shape, Ball):
            cc = lo + (centers + 0.5) * self.width
            reach = np.linalg.norm(self.width) / 2
            near = domain.boundary_distance(cc) > -reach
            corner_in |= near
        bound = np.where(corner_in, bound, 0.0)
        self.cell_index = centers
        self.bound = bound
        mass = bound * np.prod(self.width)
        self.cell_prob = mass / mass.sum()
        self.envelope_mass = float(mass.sum())

    def _target(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.domain.contains(x, tol=0.0)
        out = np.zeros(x.shape[0])
        if np.any(inside):
            out[inside] = np.asarray(self.density(x[inside]), dtype=float)
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        d = self.domain.dimension
        out = np.empty((0, d))
        while out.shape[0] < size:
            m = max(16, 2 * (size - out.shape[0]))
            cell = rng.choice(len(self.cell_prob), size=m, p=self.cell_prob)
            x = self.lo + (self.cell_index[cell] + rng.random((m, d))) * self.width
            f = self._target(x)
            b = self.bound[cell]
            bad = f > b
            if np.any(bad):
                i = int(np.argmax(bad))
                raise SamplingError(
                    f"envelope violated at {x[i].tolist()}: density {f[i]:.6g} > bound {b[i]:.6g}"
                )
            keep = rng.random(m) * b < f
            out = np.concatenate([out, x[keep]])
        return out[:size]


# -- eigenfunction families ------------------------------------------------


class Basis:
    """Base class; subclasses set ``size`` and ``dim``."""

    size: int
    dim: int

    def values(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample_mode(self, j: int, rng: np.random.Generator, size: int) -> np.ndarray:
        return self._mode_sampler(j).sample(rng, size)

    def _mode_sampler(self, j: int) -> GridEnvelopeSampler:
        cache = self.__dict__.setdefault("_samplers", {})
        if j not in cache:
            dens = self.density

            def target(x, j=j):
                return np.abs(self.values(x)[..., j]) ** 2 * dens(x)

            cache[j] = GridEnvelopeSampler(target, self.domain)
        return cache[j]


class BergmanBasis(Basis):
    """phi_k(x) = (1/R) sqrt((k+1)/pi) (z/R)^k, z = x1 + i x2, k = 1..N."""

    def __init__(self, R: float, N: int):
        self.R = float(R)
        self.size = int(N)
        self.dim = 2
        self.powers = np.arange(1, N + 1)
        self.norms = np.sqrt((self.powers + 1) / np.pi) / self.R
        self.domain = DomainDescriptor.ball((0.0, 0.0), R)
        self.density = UniformDensity()

    def values(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., 0] + 1j * x[..., 1]) / self.R
        return self.norms * z[..., None] ** self.powers

    def gradients(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., 0] + 1j * x[..., 1]) / self.R
        dz = self.norms * self.powers * z[..., None] ** (self.powers - 1) / self.R
        # holomorphic: d/dx1 = f'(z), d/dx2 = i f'(z)
        return np.stack([dz, 1j * dz], axis=-1)

    def sample_mode(self, j, rng, size):
        k = self.powers[j]
        r = self.R * rng.random(size) ** (1.0 / (2 * k + 2))
        t = 2 * np.pi * rng.random(size)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


class FourierBasis(Basis):
    """phi_k(x) = exp(2 i pi k . (x - origin) / L) / sqrt(vol) on a box.

    Orthonormal for the Lebesgue reference measure.
    """

    def __init__(self, domain: DomainDescriptor, modes, origin=None):
        if isinstance(domain.shape, Ball):
            raise ValueError("Fourier bases live on boxes")
        self.domain = domain
        self.dim = domain.dimension
        self.modes = np.asarray(modes, dtype=float).reshape(-1, self.dim)
        self.size = self.modes.shape[0]
        lo, hi = domain.bounds
        self.origin = np.zeros(self.dim) if origin is None else np.asarray(origin, dtype=float)
        self.freqs = 2 * np.pi * self.modes / (hi - lo)
        self.scale = 1.0 / np.sqrt(domain.volume)
        self.density = UniformDensity()

    def values(self, x):
        x = np.asarray(x, dtype=float)
        phase = (x - self.origin) @ self.freqs.T
        return self.scale * np.exp(1j * phase)

    def gradients(self, x):
        return 1j * self.values(x)[..., None] * self.freqs

    def sample_mode(self, j, rng, size):
        return self.domain.uniform(rng, size)


class PolynomialBasis(Basis):
    """Eigenfunctions given as complex polynomials in the real coordinates.

    With ``orthonormalize=True`` the polynomials are replaced by their
    Gram-Schmidt orthonormalization in L^2(domain, rho dx), computed by
    quadrature (the order of the list is kept).
    """

    def __init__(self, domain: DomainDescriptor, polys, density=None,
                 orthonormalize: bool = False, order: int = 48):
        self.domain = domain
        self.dim = domain.dimension
        self.polys = list(polys)
        self.size = len(self.polys)
        self.density = density if density is not None else UniformDensity()
        self._grads = [p.gradient() for p in self.polys]
        self.coeffs = np.eye(self.size, dtype=complex)
        if orthonormalize and self.size:
            nodes, w = domain_rule(domain, order)
            w = w * self.density(nodes)
            V = self._raw_values(nodes)
            gram = (V.conj().T * w) @ V
            L = np.linalg.cholesky(gram)
            # new_j = sum_i C[j, i] raw_i; orthonormal iff conj(C) gram C^T = I
            self.coeffs = np.linalg.inv(L).conj()

    def _raw_values(self, x):
        x = np.asarray(x, dtype=float)
        if not self.polys:
            return np.zeros(x.shape[:-1] + (0,), dtype=complex)
        return np.stack([p(x) for p in self.polys], axis=-1).astype(complex)

    def values(self, x):
        return self._raw_values(x) @ self.coeffs.T

    def gradients(self, x):
        x = np.asarray(x, dtype=float)
        if not self.polys:
            return np.zeros(x.shape[:-1] + (0, self.dim), dtype=complex)
        raw = np.stack(
            [np.stack([g(x) for g in grads], axis=-1) for grads in self._grads], axis=-2
        ).astype(complex)
        return np.einsum("ji,...id->...jd", self.coeffs, raw)
