"""Seeded library of test functionals, vector fields and flows.

Everything is generated from a named random stream, so a fixture is fully
determined by (kernel spec, kind, seed, index) and failures reproduce
bit for bit.

For balls, statistics have the form (|x - c|^2 - R^2)^2 q(x) with q a
random quadratic: their gradients vanish on the boundary sphere, which is
what the Dirichlet-form identity needs (no boundary flux). Fields are
smooth bumps supported strictly inside the domain.
"""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .calculus import (
    FlowMap,
    FourierStatistic,
    GaussianOuter,
    PolynomialOuter,
    PolynomialStatistic,
    TanhOuter,
    TestFunctional,
    VectorField,
)
from .domain import Ball
from .kernels import SpectralKernel
from .polynomial import Poly


def _gen(k: SpectralKernel, kind: str, seed: int, index: int) -> np.random.Generator:
    return rngmod.stream(seed, f"fixture/{k.kernel_id}/{kind}", index)


def _quadratic(g, d, scale):
    terms = [([0] * d, g.normal(0, scale))]
    for a in range(d):
        e = [0] * d
        e[a] = 1
        terms.append((e, g.normal(0, scale)))
        e2 = [0] * d
        e2[a] = 2
        terms.append((e2, g.normal(0, scale)))
    return Poly.from_terms(terms, d)


def random_statistic(k: SpectralKernel, g: np.random.Generator):
    dom = k.domain
    d = dom.dimension
    if isinstance(dom.shape, Ball):
        c = np.asarray(dom.shape.center)
        R = dom.shape.radius
        # s(x) = |x - c|^2 - R^2, vanishing on the sphere
        terms = [([0] * d, float(np.sum(c**2) - R**2))]
        for a in range(d):
            e = [0] * d
            e[a] = 2
            terms.append((e, 1.0))
            e1 = [0] * d
            e1[a] = 1
            terms.append((e1, -2 * c[a]))
        s = Poly.from_terms(terms, d)
        q = _quadratic(g, d, 1.0)
        poly = (s * s * q).simplify()
        # normalize so the statistic is O(1) on the domain
        return PolynomialStatistic(poly * (1.0 / R**4))
    lo, hi = dom.bounds
    if dom.is_periodic:
        L = hi - lo
        modes = np.eye(d, dtype=int).tolist() + (2 * np.eye(d, dtype=int)).tolist()
        return FourierStatistic(L, modes, g.normal(0, 1, len(modes)), g.normal(0, 1, len(modes)))
    # non-periodic box: bump-like polynomial prod (x - lo)^2 (hi - x)^2, normalized
    poly = Poly.constant(1.0, d)
    for a in range(d):
        e1 = [0] * d
        e1[a] = 1
        e2 = [0] * d
        e2[a] = 2
        w = Poly.from_terms([([0] * d, -lo[a] * hi[a]), (e1, lo[a] + hi[a]), (e2, -1.0)], d)
        poly = poly * w * w * (16.0 / (hi[a] - lo[a]) ** 4)
    return PolynomialStatistic((poly * _quadratic(g, d, 1.0)).simplify())


def random_outer(g: np.random.Generator, M: int):
    kind = g.integers(3)
    if kind == 0:
        terms = [([0] * M, g.normal())]
        for m in range(M):
            e = [0] * M
            e[m] = 1
            terms.append((e, g.normal()))
            e2 = [0] * M
            e2[m] = 2
            terms.append((e2, 0.5 * g.normal()))
        return PolynomialOuter(Poly.from_terms(terms, M))
    if kind == 1:
        return TanhOuter(g.normal(0, 1, M), float(g.normal()), 1.0 + float(g.random()))
    return GaussianOuter(g.normal(0, 1, M), 1.0 + float(g.random()), 1.0 + float(g.random()))


def random_functional(k: SpectralKernel, g: np.random.Generator, M: int = 2) -> TestFunctional:
    stats = [random_statistic(k, g) for _ in range(M)]
    return TestFunctional(random_outer(g, M), stats, count_cutoff=max(k.size, 1) + 5)


def random_bump_field(k: SpectralKernel, g: np.random.Generator) -> VectorField:
    dom = k.domain
    d = dom.dimension
    if isinstance(dom.shape, Ball):
        R = dom.shape.radius
        radius = R * (0.4 + 0.3 * g.random())
        room = 0.9 * R - radius
        u = g.normal(size=d)
        center = np.asarray(dom.shape.center) + u / np.linalg.norm(u) * room * g.random()
    else:
        lo, hi = dom.bounds
        radius = 0.25 * float(np.min(hi - lo)) * (1 + g.random())
        center = lo + radius + (hi - lo - 2 * radius) * g.random(d)
        radius *= 0.95
    direction = g.normal(size=d)
    rotation = float(g.normal()) / radius if d == 2 else 0.0
    return VectorField.bump(center, radius, direction / radius, rotation)


def ibp_triples(k: SpectralKernel, count: int = 5, seed: int = 0):
    out = []
    for i in range(count):
        g = _gen(k, "ibp", seed, i)
        out.append((random_functional(k, g), random_functional(k, g), random_bump_field(k, g)))
    return out


def dirichlet_pairs(k: SpectralKernel, count: int = 3, seed: int = 0):
    out = []
    for i in range(count):
        g = _gen(k, "dirichlet", seed, i)
        out.append((random_functional(k, g), random_functional(k, g)))
    return out


def flows(k: SpectralKernel, count: int = 3, seed: int = 0, time: float = 0.1):
    out = []
    for i in range(count):
        g = _gen(k, "flow", seed, i)
        out.append(FlowMap(random_bump_field(k, g), time=time * (0.5 + g.random()), domain=k.domain))
    return out


def nonnegative_statistics(k: SpectralKernel, count: int = 2, seed: int = 0):
    """Smooth f >= 0 for the quasi-invariance identity: f = a |x - c|^2 (+ b)."""
    out = []
    d = k.dimension
    for i in range(count):
        g = _gen(k, "qi-f", seed, i)
        lo, hi = k.domain.bounds
        c = lo + (hi - lo) * g.random(d)
        scale = 4.0 / float(np.max(hi - lo)) ** 2 * (1 + g.random())
        terms = [([0] * d, scale * float(np.sum(c**2)) + 0.1 * g.random())]
        for a in range(d):
            e1 = [0] * d
            e1[a] = 1
            e2 = [0] * d
            e2[a] = 2
            terms += [(e1, -2 * scale * c[a]), (e2, scale)]
        out.append(PolynomialStatistic(Poly.from_terms(terms, d)))
    return out
