"""Compact domains of R^d: balls and boxes (optionally periodic per axis)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """A point lies outside the domain an operation requires."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("box bounds have different lengths")
        if not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box requires lower < upper componentwise")


@dataclass(frozen=True)
class DomainDescriptor:
    """Ball or box in R^d.

    ``periodic`` flags axes that wrap around (boxes only); the Dyson circle is
    the one-dimensional periodic box ``[-N/2, N/2]``.
    """

    shape: Ball | Box
    periodic: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        d = self.dimension
        if d < 1:
            raise ValueError("domain dimension must be positive")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * d)
        if len(self.periodic) != d:
            raise ValueError("periodic flags must have one entry per axis")
        if any(self.periodic) and isinstance(self.shape, Ball):
            raise ValueError("periodic axes are only supported on boxes")

    @classmethod
    def ball(cls, center, radius) -> "DomainDescriptor":
        return cls(Ball(tuple(float(c) for c in center), float(radius)))

    @classmethod
    def box(cls, lower, upper, periodic=None) -> "DomainDescriptor":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        if periodic is None:
            periodic = (False,) * len(lower)
        elif isinstance(periodic, bool):
            periodic = (periodic,) * len(lower)
        return cls(Box(lower, upper), tuple(bool(p) for p in periodic))

    @property
    def dimension(self) -> int:
        if isinstance(self.shape, Ball):
            return len(self.shape.center)
        return len(self.shape.lower)

    @property
    def is_periodic(self) -> bool:
        return any(self.periodic)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box."""
        if isinstance(self.shape, Ball):
            c = np.asarray(self.shape.center)
            return c - self.shape.radius, c + self.shape.radius
        return np.asarray(self.shape.lower), np.asarray(self.shape.upper)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounds
        if isinstance(self.shape, Ball):
            return 2.0 * self.shape.radius
        return float(np.linalg.norm(hi - lo))

    @property
    def volume(self) -> float:
        if isinstance(self.shape, Ball):
            from math import gamma, pi

            d = self.dimension
            return pi ** (d / 2) / gamma(d / 2 + 1) * self.shape.radius**d
        lo, hi = self.bounds
        return float(np.prod(hi - lo))

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        """Membership test, vectorized over leading axes of ``x`` (..., d)."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.shape, Ball):
            r = np.linalg.norm(x - np.asarray(self.shape.center), axis=-1)
            return r <= self.shape.radius * (1 + tol)
        lo, hi = self.bounds
        span = hi - lo
        return np.all((x >= lo - tol * span) & (x <= hi + tol * span), axis=-1)

    def check(self, points) -> None:
        """Raise DomainError naming the first point outside the domain."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        inside = self.contains(pts)
        if not np.all(inside):
            i = int(np.argmin(inside))
            raise DomainError(f"point {i} = {pts[i].tolist()} lies outside the domain", index=i)

    def wrap(self, x) -> np.ndarray:
        """Map periodic coordinates to representatives in [lower, upper)."""
        x = np.array(x, dtype=float, copy=True)
        if not self.is_periodic:
            return x
        lo, hi = self.bounds
        for a, per in enumerate(self.periodic):
            if per:
                x[..., a] = lo[a] + np.mod(x[..., a] - lo[a], hi[a] - lo[a])
        return x

    def displacement(self, x, y) -> np.ndarray:
        """x - y, using wrapped differences on periodic axes."""
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if not self.is_periodic:
            return diff
        lo, hi = self.bounds
        diff = np.array(diff, copy=True)
        for a, per in enumerate(self.periodic):
            if per:
                L = hi[a] - lo[a]
                diff[..., a] -= L * np.round(diff[..., a] / L)
        return diff

    def boundary_distance(self, x) -> np.ndarray:
        """Distance to the boundary (inf along periodic axes)."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.shape, Ball):
            r = np.linalg.norm(x - np.asarray(self.shape.center), axis=-1)
            return self.shape.radius - r
        lo, hi = self.bounds
        gaps = np.minimum(x - lo, hi - x)
        gaps = np.where(np.asarray(self.periodic), np.inf, gaps)
        return np.min(gaps, axis=-1)

    def uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points in the domain, shape (size, d)."""
        d = self.dimension
        if isinstance(self.shape, Ball):
            g = rng.standard_normal((size, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.shape.radius * rng.random(size) ** (1.0 / d)
            return np.asarray(self.shape.center) + g * r[:, None]
        lo, hi = self.bounds
        return lo + (hi - lo) * rng.random((size, d))

    def to_dict(self) -> dict:
        if isinstance(self.shape, Ball):
            return {"shape": "ball", "center": list(self.shape.center), "radius": self.shape.radius}
        return {
            "shape": "box",
            "lower": list(self.shape.lower),
            "upper": list(self.shape.upper),
            "periodic": list(self.periodic),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainDescriptor":
        shape = data.get("shape")
        if shape == "ball":
            return cls.ball(data["center"], data["radius"])
        if shape == "box":
            return cls.box(data["lower"], data["upper"], data.get("periodic"))
        raise ValueError(f"unknown domain shape {shape!r}")
