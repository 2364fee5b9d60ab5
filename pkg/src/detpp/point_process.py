"""Exact sampling of finite-rank DPPs and empirical statistics.

Sampling follows the spectral method: mode j is kept with probability
lam_j, then the projection DPP spanned by the kept modes is sampled point
by point. The next point has density ||Q^H phi(x)||^2 / r with respect to
rho dx, where the columns of Q span the part of the kept modes not yet
"used" by earlier points. Proposals come from the mixture
(1/m) sum_j |phi_j|^2 rho of kept modes and are accepted with probability
||Q^H phi(x)||^2 / ||phi(x)||^2 <= 1, which makes every draw exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import rng as rngmod
from .basis import GridEnvelopeSampler
from .domain import Ball, DomainDescriptor
from .kernels import (
    PointConfiguration,
    SpectralKernel,
    batch_log_janossy,
    weighted_matrix,
)
from .quadrature import domain_rule, interval_rule, product_rule
from .stats import McEstimate

MAX_PROPOSALS = 100_000


@dataclass
class SampleBatch:
    configurations: list
    seed: int
    kernel_id: str
    dimension: int = 1

    def __len__(self):
        return len(self.configurations)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.configurations], dtype=int)

    def grouped(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """{n: (sample indices, stacked points (B_n, n, d))}."""
        counts = self.counts
        out = {}
        for n in np.unique(counts):
            idx = np.flatnonzero(counts == n)
            pts = np.stack([self.configurations[i].points for i in idx]) if n else np.zeros((len(idx), 0, self.dimension))
            out[int(n)] = (idx, pts)
        return out

    def all_points(self) -> np.ndarray:
        if not self.configurations:
            return np.zeros((0, self.dimension))
        return np.concatenate([c.points for c in self.configurations], axis=0)


# -- DPP sampler ------------------------------------------------------------


def _orth_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis (r, r-1) of the complement of the unit vector u."""
    r = u.shape[0]
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(r, dtype=complex)]))
    return q[:, 1:r]


def _sample_projection(k: SpectralKernel, modes: np.ndarray, g: np.random.Generator) -> np.ndarray:
    m = len(modes)
    d = k.dimension
    Q = np.eye(m, dtype=complex)
    pts = np.empty((m, d))
    for step in range(m):
        for _ in range(MAX_PROPOSALS):
            j = modes[g.integers(m)]
            x = k.domain.wrap(k.basis.sample_mode(int(j), g, 1)[0])
            phi = k.phi(x)[modes]
            proj = Q.conj().T @ phi
            num = float(np.real(np.vdot(proj, proj)))
            den = float(np.real(np.vdot(phi, phi)))
            if den > 0 and g.random() * den < num:
                break
        else:
            raise RuntimeError("projection sampler exceeded the proposal budget")
        pts[step] = x
        if step < m - 1:
            Q = Q @ _orth_complement(proj / np.sqrt(num))
    return pts


def sample_dpp(k: SpectralKernel, n_samples: int, seed: int) -> SampleBatch:
    """n_samples independent exact draws; draw i uses its own random stream."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    family = rngmod.StreamFamily(seed, "dpp")
    lam = k.eigenvalues
    d = k.dimension
    configs = []
    for i in range(n_samples):
        g = family(i)
        keep = np.flatnonzero(g.random(lam.shape[0]) < lam)
        if keep.size == 0:
            configs.append(PointConfiguration.empty(d))
        else:
            configs.append(PointConfiguration(_sample_projection(k, keep, g), d))
    return SampleBatch(configs, seed, k.kernel_id, d)


def sample_dpp_conditioned(k: SpectralKernel, n_points: int, n_samples: int, seed: int) -> SampleBatch:
    """Draws of the DPP conditioned on having exactly ``n_points`` points.

    Mode subsets of size n_points are drawn with probability proportional to
    prod_{j in S} lam_j prod_{j not in S} (1 - lam_j), which is the
    conditional law of the Bernoulli mode selection given its size.
    """
    import itertools

    lam = k.eigenvalues
    N = lam.shape[0]
    subsets = [np.array(s) for s in itertools.combinations(range(N), n_points)]
    if not subsets:
        raise ValueError(f"kernel of size {N} cannot produce {n_points} points")
    w = np.array([np.prod(lam[s]) * np.prod(np.delete(1 - lam, s)) for s in subsets])
    if k.is_projection:
        w = np.array([1.0 if len(s) == N else 0.0 for s in subsets])
    if not w.sum() > 0:
        raise ValueError("the conditioning event has probability zero")
    w = w / w.sum()
    family = rngmod.StreamFamily(seed, f"dpp|n={n_points}")
    d = k.dimension
    configs = []
    for i in range(n_samples):
        g = family(i)
        s = subsets[g.choice(len(subsets), p=w)]
        pts = _sample_projection(k, s, g) if n_points else np.zeros((0, d))
        configs.append(PointConfiguration(pts, d))
    return SampleBatch(configs, seed, k.kernel_id, d)


# -- Poisson ---------------------------------------------------------------


def sample_poisson(intensity, domain: DomainDescriptor, n_samples: int, seed: int,
                   order: int = 64) -> SampleBatch:
    """Poisson process with density ``intensity`` w.r.t. Lebesgue measure on ``domain``."""
    nodes, w = domain_rule(domain, order)
    vals = np.asarray(intensity(nodes), dtype=float)
    if np.any(vals < 0):
        raise ValueError("intensity is negative somewhere on the domain")
    total = float(np.sum(w * vals))
    d = domain.dimension
    sampler = GridEnvelopeSampler(intensity, domain) if total > 0 else None
    family = rngmod.StreamFamily(seed, "poisson")
    configs = []
    for i in range(n_samples):
        g = family(i)
        n = int(g.poisson(total)) if total > 0 else 0
        pts = sampler.sample(g, n) if n else np.zeros((0, d))
        configs.append(PointConfiguration(pts, d))
    batch = SampleBatch(configs, seed, "poisson", d)
    batch.total_intensity = total
    return batch


def j_intensity(k: SpectralKernel):
    """x -> J(x, x) rho(x), the dominating Poisson intensity."""
    w = k.j_weights

    def intensity(x):
        x = np.asarray(x, dtype=float)
        return np.sum(w * np.abs(k.phi(x)) ** 2, axis=-1) * k.density(x)

    return intensity


def k_intensity(k: SpectralKernel):
    """x -> K(x, x) rho(x), the DPP's own first-order intensity (Lebesgue)."""
    lam = k.eigenvalues

    def intensity(x):
        x = np.asarray(x, dtype=float)
        return np.sum(lam * np.abs(k.phi(x)) ** 2, axis=-1) * k.density(x)

    return intensity


# -- bins and intensities ---------------------------------------------------


class GridBins:
    """Rectangular bins over [lower, upper] with ``shape`` cells per axis."""

    def __init__(self, lower, upper, shape):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.shape = tuple(np.atleast_1d(shape).astype(int))
        self.width = (self.upper - self.lower) / np.asarray(self.shape)

    @property
    def n_bins(self):
        return int(np.prod(self.shape))

    def assign(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, len(self.shape))
        cell = np.floor((pts - self.lower) / self.width).astype(int)
        cell = np.minimum(cell, np.asarray(self.shape) - 1)
        ok = np.all((cell >= 0) & (pts <= self.upper + 1e-12), axis=1)
        flat = np.ravel_multi_index(tuple(np.clip(cell, 0, None).T), self.shape) if len(pts) else np.zeros(0, int)
        return np.where(ok, flat, -1)

    def rule(self, domain: DomainDescriptor, order: int = 16):
        """Quadrature nodes, weights and bin labels for integrals over bin cap domain."""
        d = len(self.shape)
        ax = [interval_rule(0.0, 1.0, order) for _ in range(d)]
        t = np.stack(np.meshgrid(*[a[0] for a in ax], indexing="ij"), -1).reshape(-1, d)
        wt = np.prod(np.stack(np.meshgrid(*[a[1] for a in ax], indexing="ij"), -1).reshape(-1, d), axis=1)
        cells = np.stack(np.unravel_index(np.arange(self.n_bins), self.shape), -1)
        nodes = self.lower + (cells[:, None, :] + t[None]) * self.width
        weights = np.broadcast_to(wt * np.prod(self.width), nodes.shape[:2]).copy()
        weights = weights * domain.contains(nodes)
        labels = np.broadcast_to(np.arange(self.n_bins)[:, None], nodes.shape[:2])
        return nodes.reshape(-1, d), weights.reshape(-1), labels.reshape(-1)


class RadialBins:
    """Annuli center + [edges_i, edges_{i+1}) in the plane."""

    def __init__(self, center, edges):
        self.center = np.asarray(center, dtype=float)
        self.edges = np.asarray(edges, dtype=float)

    @property
    def n_bins(self):
        return len(self.edges) - 1

    def assign(self, pts) -> np.ndarray:
        r = np.linalg.norm(np.asarray(pts, dtype=float).reshape(-1, 2) - self.center, axis=1)
        i = np.searchsorted(self.edges, r, side="right") - 1
        i = np.where(r == self.edges[-1], self.n_bins - 1, i)
        return np.where((i >= 0) & (i < self.n_bins), i, -1)

    def rule(self, domain: DomainDescriptor, order: int = 16):
        th, wt = interval_rule(0.0, 2 * np.pi, 4 * order, periodic=True)
        nodes, weights, labels = [], [], []
        for b in range(self.n_bins):
            r, wr = interval_rule(self.edges[b], self.edges[b + 1], order)
            rr, tt = np.meshgrid(r, th, indexing="ij")
            nodes.append(np.stack([self.center[0] + rr * np.cos(tt), self.center[1] + rr * np.sin(tt)], -1).reshape(-1, 2))
            weights.append((wr[:, None] * r[:, None] * wt[None, :]).reshape(-1))
            labels.append(np.full(rr.size, b))
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights) * domain.contains(nodes)
        return nodes, weights, np.concatenate(labels)


def bin_volumes(bins, domain: DomainDescriptor, order: int = 16) -> np.ndarray:
    _, w, lab = bins.rule(domain, order)
    return np.bincount(lab, weights=w, minlength=bins.n_bins)


def expected_bin_counts(intensity, bins, domain: DomainDescriptor, order: int = 16) -> np.ndarray:
    """Integral of ``intensity`` (Lebesgue density) over each bin cap domain."""
    nodes, w, lab = bins.rule(domain, order)
    return np.bincount(lab, weights=w * intensity(nodes), minlength=bins.n_bins)


@dataclass
class BinnedField:
    values: np.ndarray
    std_errors: np.ndarray
    volumes: np.ndarray
    n_samples: int

    def z_scores(self, expected) -> np.ndarray:
        se = np.where(self.std_errors > 0, self.std_errors, np.inf)
        return (self.values - np.asarray(expected)) / se


def per_sample_bin_counts(configs, bins) -> np.ndarray:
    out = np.zeros((len(configs), bins.n_bins))
    for i, c in enumerate(configs):
        pts = c.points if isinstance(c, PointConfiguration) else np.asarray(c)
        if len(pts):
            lab = bins.assign(pts)
            lab = lab[lab >= 0]
            np.add.at(out[i], lab, 1.0)
    return out


def empirical_intensity(batch: SampleBatch, bins, domain: DomainDescriptor | None = None,
                        order: int = 16) -> BinnedField:
    """Histogram estimate of the first-order intensity (w.r.t. Lebesgue) per bin."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    counts = per_sample_bin_counts(batch.configurations, bins)
    if domain is None:
        vol = np.prod(getattr(bins, "width", [1.0])) * np.ones(bins.n_bins)
    else:
        vol = bin_volumes(bins, domain, order)
    n = counts.shape[0]
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(bins.n_bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        return BinnedField(np.where(vol > 0, mean / vol, 0.0), np.where(vol > 0, se / vol, 0.0), vol, n)


def pair_bin_counts(batch: SampleBatch, bins) -> np.ndarray:
    """Per-sample number of ordered pairs (i != j) with both points in each bin."""
    out = np.zeros((len(batch), bins.n_bins))
    for i, c in enumerate(batch.configurations):
        if len(c) >= 2:
            lab = bins.assign(c.points)
            lab = lab[lab >= 0]
            cnt = np.bincount(lab, minlength=bins.n_bins).astype(float)
            out[i] = cnt * (cnt - 1)
    return out


# -- Janossy quadrature of count probabilities --------------------------------


def count_probabilities(k: SpectralKernel, orders: dict | None = None, max_nodes: int = 2_500_000) -> np.ndarray:
    """P(count = n) = (1/n!) int_{D^n} j_D^n d mu^n, n = 0..N, by tensor quadrature.

    ``orders`` maps n to the per-axis quadrature order; by default the order
    is lowered with n so the n-fold product grid stays below ``max_nodes``.
    """
    N = k.size
    probs = np.zeros(N + 1)
    d = k.dimension
    for n in range(N + 1):
        if n == 0:
            probs[0] = float(np.exp(batch_log_janossy(k, np.zeros((1, 0, d)))[0]))
            continue
        order = (orders or {}).get(n)
        if order is None:
            order = 32
            while True:
                m = _rule_size(k.domain, order)
                if m**n <= max_nodes or order <= 4:
                    break
                order = max(4, order // 2 if order > 8 else order - 1)
        nodes, w = domain_rule(k.domain, order)
        w = w * k.density(nodes)
        total = 0.0
        for chunk_pts, chunk_w in _product_chunks(nodes, w, n):
            lj = batch_log_janossy(k, chunk_pts)
            total += float(np.sum(chunk_w * np.exp(lj)))
        probs[n] = total / factorial(n)
    return probs


def _rule_size(domain, order):
    if isinstance(domain.shape, Ball) and domain.dimension == 2:
        return order * 2 * order
    return order**domain.dimension


def _product_chunks(nodes, w, n, chunk: int = 200_000):
    M = nodes.shape[0]
    if n == 1:
        yield nodes[:, None, :], w
        return
    # iterate over the first coordinate's node, tensor the rest
    rest_pts, rest_w = product_rule(nodes, w, n - 1)
    step = max(1, chunk // max(1, rest_pts.shape[0]))
    for a in range(0, M, step):
        first = nodes[a:a + step]
        b = first.shape[0]
        pts = np.concatenate(
            [np.broadcast_to(first[:, None, None, :], (b, rest_pts.shape[0], 1, nodes.shape[1])),
             np.broadcast_to(rest_pts[None], (b,) + rest_pts.shape)], axis=2
        ).reshape(-1, n, nodes.shape[1])
        ww = (w[a:a + step, None] * rest_w[None, :]).reshape(-1)
        yield pts, ww


def count_chi_square(counts, probs, min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-square goodness of fit of observed point counts to ``probs``.

    Classes with expected count below ``min_expected`` are pooled into the
    neighbouring lower class. Returns (statistic, p-value).
    """
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    obs = np.bincount(counts, minlength=len(probs)).astype(float)[: len(probs)]
    if counts.max(initial=0) >= len(probs):
        raise ValueError("observed a count with zero model probability")
    exp = np.asarray(probs, dtype=float) * n
    exp = exp / exp.sum() * n
    o, e = list(obs), list(exp)
    i = len(e) - 1
    while i > 0:
        if e[i] < min_expected:
            e[i - 1] += e.pop(i)
            o[i - 1] += o.pop(i)
        i -= 1
    while len(e) > 1 and e[0] < min_expected:
        e[1] += e.pop(0)
        o[1] += o.pop(0)
    if len(e) < 2:
        return 0.0, 1.0
    stat, p = sps.chisquare(o, e)
    return float(stat), float(p)


# -- stochastic domination ----------------------------------------------------


@dataclass
class DominationResult:
    dpp: McEstimate
    poisson: McEstimate
    threshold: float = 3.0

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.dpp.std_error, self.poisson.std_error))

    @property
    def passed(self) -> bool:
        return self.dpp.mean <= self.poisson.mean + self.threshold * self.combined_se


def _monotone_functional(f):
    """Resolve a functional descriptor to a per-configuration callable."""
    if f == "count":
        return lambda pts: float(len(pts))
    if f == "zero":
        return lambda pts: 0.0
    if isinstance(f, tuple) and len(f) == 2 and f[0] == "linear":
        g = f[1]
        return lambda pts: float(np.sum(g(pts))) if len(pts) else 0.0
    raise ValueError(f"unknown or non-monotone functional {f!r}; use 'count', 'zero' or ('linear', g) with g >= 0")


def domination_test(k: SpectralKernel, f="count", n_samples: int = 10_000, seed: int = 0,
                    order: int = 64, threshold: float = 3.0) -> DominationResult:
    """Compare E[f(X)] under the DPP and the Poisson process of intensity J(x,x) mu(dx)."""
    if isinstance(f, tuple) and f[0] == "linear":
        nodes, _ = domain_rule(k.domain, order)
        if np.any(np.asarray(f[1](nodes)) < 0):
            raise ValueError("('linear', g) is increasing only for g >= 0")
    fun = _monotone_functional(f)
    dpp = sample_dpp(k, n_samples, seed)
    poi = sample_poisson(j_intensity(k), k.domain, n_samples, seed, order=order)
    a = McEstimate.from_samples([fun(c.points) for c in dpp.configurations])
    b = McEstimate.from_samples([fun(c.points) for c in poi.configurations])
    return DominationResult(a, b, threshold)


# -- CSV I/O -------------------------------------------------------------------


def write_batch(batch: SampleBatch, path, kernel_spec: dict | None = None) -> tuple[Path, Path]:
    """CSV (sample_id, point_id, x_1..x_d) plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    d = batch.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "point_id"] + [f"x_{a + 1}" for a in range(d)])
        for i, c in enumerate(batch.configurations):
            for p, x in enumerate(c.points):
                w.writerow([i, p] + [format(float(v), ".17g") for v in x])
    meta = {
        "seed": batch.seed,
        "kernel_id": batch.kernel_id,
        "n_samples": len(batch),
        "dimension": d,
    }
    if kernel_spec is not None:
        meta["kernel"] = kernel_spec
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side


def read_batch(path) -> SampleBatch:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    rows: dict[int, list] = {}
    d = None
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 2
        for row in r:
            rows.setdefault(int(row[0]), []).append([float(v) for v in row[2:]])
    n = meta["n_samples"] if meta else (max(rows) + 1 if rows else 0)
    configs = [PointConfiguration(np.array(rows.get(i, np.zeros((0, d)))).reshape(-1, d), d) for i in range(n)]
    return SampleBatch(configs, meta["seed"] if meta else 0, meta["kernel_id"] if meta else "", d)
