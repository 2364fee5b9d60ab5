"""Tensor-product quadrature on the supported domains.

Boxes use Gauss-Legendre per axis, except periodic axes which use the
trapezoid rule (spectrally accurate for smooth periodic integrands). Discs
use Gauss-Legendre in the radius times the trapezoid rule in the angle.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .domain import Ball, DomainDescriptor

DEFAULT_ORDER = 64


@lru_cache(maxsize=64)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def interval_rule(lo: float, hi: float, order: int, periodic: bool = False):
    """Nodes and weights on [lo, hi]."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    if periodic:
        h = (hi - lo) / order
        return lo + h * np.arange(order), np.full(order, h)
    t, w = _gauss_legendre(order)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def domain_rule(domain: DomainDescriptor, order: int = DEFAULT_ORDER, angular_order: int | None = None):
    """Quadrature nodes (M, d) and weights (M,) for ``domain``.

    For a disc, ``order`` is the radial Gauss-Legendre order and
    ``angular_order`` (default ``2 * order``) the number of trapezoid angles.
    Balls in d >= 3 are not supported.
    """
    d = domain.dimension
    if isinstance(domain.shape, Ball):
        c = np.asarray(domain.shape.center)
        R = domain.shape.radius
        if d == 1:
            x, w = interval_rule(c[0] - R, c[0] + R, order)
            return x[:, None], w
        if d != 2:
            raise NotImplementedError("ball quadrature is implemented for d <= 2")
        m = angular_order or 2 * order
        r, wr = interval_rule(0.0, R, order)
        th, wt = interval_rule(0.0, 2 * np.pi, m, periodic=True)
        rr, tt = np.meshgrid(r, th, indexing="ij")
        nodes = np.stack([c[0] + rr * np.cos(tt), c[1] + rr * np.sin(tt)], axis=-1).reshape(-1, 2)
        weights = (wr[:, None] * r[:, None] * wt[None, :]).reshape(-1)
        return nodes, weights
    lo, hi = domain.bounds
    axes = [interval_rule(lo[a], hi[a], order, domain.periodic[a]) for a in range(d)]
    grids = np.meshgrid(*[ax[0] for ax in axes], indexing="ij")
    wgrids = np.meshgrid(*[ax[1] for ax in axes], indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    weights = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def integrate(f, domain: DomainDescriptor, order: int = DEFAULT_ORDER, **kw) -> float:
    """Integrate a vectorized ``f: (M, d) -> (M,)`` over ``domain`` (Lebesgue)."""
    nodes, weights = domain_rule(domain, order, **kw)
    return float(np.sum(weights * np.asarray(f(nodes))))


def product_rule(nodes: np.ndarray, weights: np.ndarray, n: int):
    """n-fold tensor power of a rule: nodes (M**n, n, d), weights (M**n,)."""
    M, d = nodes.shape
    if n == 0:
        return np.zeros((1, 0, d)), np.ones(1)
    idx = np.array(list(itertools.product(range(M), repeat=n)), dtype=np.intp)
    return nodes[idx], np.prod(weights[idx], axis=-1)
