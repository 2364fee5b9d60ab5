"""Euler-Maruyama integration of the interacting Langevin diffusion

    dX_i = sqrt(2) dB_i + (beta(X_i) - grad_{X_i} U(X)) dt

whose invariant law is the DPP. Paths with the same number of points are
advanced together as one (P, n, d) array; each path still draws its noise
from its own stream, so results do not depend on how paths are grouped.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .calculus import batch_drift
from .domain import Ball, DomainDescriptor
from .kernels import PointConfiguration, SpectralKernel, as_points, batch_log_interaction_det

NOISE_BLOCK = 256  # fine steps per noise block
MAX_REDRAWS = 100
MAX_SHRINKS = 20


class TrajectoryError(RuntimeError):
    def __init__(self, message: str, last_state=None, path: int | None = None):
        super().__init__(message)
        self.last_state = last_state
        self.path = path


class NoDiffusionGuaranteeWarning(UserWarning):
    """Non-collision is only guaranteed for d >= 2."""


@dataclass(frozen=True)
class NoTaming:
    def to_json(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class Tamed:
    """Smooth taming: h b / (1 + h |b| / threshold), never longer than ``threshold``."""

    threshold: float

    def to_json(self):
        return {"kind": "tamed", "threshold": self.threshold}


@dataclass(frozen=True)
class CappedStep:
    """Hard cap of the per-point drift increment at ``fraction`` * diam(D)."""

    fraction: float = 0.1

    def to_json(self):
        return {"kind": "capped", "fraction": self.fraction}


BOUNDARIES = ("reflect", "reject", "periodic")


@dataclass(frozen=True)
class SdeConfig:
    step_size: float
    horizon: float
    taming: object = field(default_factory=CappedStep)
    boundary: str | None = None  # None: periodic on periodic domains, reflect otherwise
    seed: int = 0
    record_every: int = 1
    noise_refinement: int = 1  # normals summed per step; couples runs at h and h / m

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be non-negative")
        if self.boundary is not None and self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.record_every < 1 or self.noise_refinement < 1:
            raise ValueError("record_every and noise_refinement must be >= 1")

    def boundary_for(self, domain: DomainDescriptor) -> str:
        b = self.boundary or ("periodic" if domain.is_periodic else "reflect")
        if b == "periodic" and not domain.is_periodic:
            raise ValueError("periodic boundary requires a periodic domain")
        if domain.is_periodic and b != "periodic" and all(domain.periodic):
            raise ValueError("a fully periodic domain needs the periodic boundary")
        return b

    def steps(self) -> np.ndarray:
        """Step lengths; the last one is shortened to land on the horizon."""
        n = int(np.ceil(self.horizon / self.step_size - 1e-9))
        if n == 0:
            return np.zeros(0)
        h = np.full(n, self.step_size)
        h[-1] = self.horizon - (n - 1) * self.step_size
        return h

    def to_json(self):
        return {
            "step_size": self.step_size, "horizon": self.horizon, "taming": self.taming.to_json(),
            "boundary": self.boundary, "seed": self.seed, "record_every": self.record_every,
            "noise_refinement": self.noise_refinement,
        }


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: list
    min_pair_distance: np.ndarray
    min_boundary_distance: np.ndarray
    potential: np.ndarray
    running_min_pair: float = np.inf  # over every step, not only recorded ones
    redraws: int = 0
    shrinks: int = 0
    taming_activations: int = 0
    dimension: int = 1

    def summary(self) -> dict:
        return {
            "n_records": len(self.times),
            "min_pair_distance": _num(self.running_min_pair),
            "min_boundary_distance": _num(np.min(self.min_boundary_distance) if len(self.times) else np.inf),
            "redraws": self.redraws,
            "shrinks": self.shrinks,
            "taming_activations": self.taming_activations,
        }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


# -- geometry helpers ---------------------------------------------------------


def _fold(u, lo, hi):
    """Reflect coordinates into [lo, hi] (repeatedly)."""
    L = hi - lo
    t = np.mod(u - lo, 2 * L)
    return lo + np.where(t <= L, t, 2 * L - t)


def apply_boundary(domain: DomainDescriptor, x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "periodic":
        return domain.wrap(x)
    if mode == "reflect":
        if isinstance(domain.shape, Ball):
            c = np.asarray(domain.shape.center)
            R = domain.shape.radius
            r = x - c
            norm = np.linalg.norm(r, axis=-1, keepdims=True)
            new = _fold(norm, -R, R)  # reflection through the sphere, folded
            scale = np.where(norm > R, new / np.where(norm > 0, norm, 1.0), 1.0)
            return c + r * scale
        lo, hi = domain.bounds
        y = _fold(x, lo, hi)
        return domain.wrap(np.where(np.asarray(domain.periodic), x, y))
    return x  # "reject": handled by redrawing


def pair_distances_min(domain: DomainDescriptor, pts: np.ndarray) -> np.ndarray:
    """Minimum pairwise distance per configuration (inf for < 2 points)."""
    B, n, _ = pts.shape
    if n < 2:
        return np.full(B, np.inf)
    diff = domain.displacement(pts[:, :, None, :], pts[:, None, :, :])
    dist = np.linalg.norm(diff, axis=-1)
    iu = np.triu_indices(n, 1)
    return np.min(dist[:, iu[0], iu[1]], axis=1)


def _boundary_min(domain, pts):
    if pts.shape[1] == 0:
        return np.full(pts.shape[0], np.inf)
    return np.min(domain.boundary_distance(pts), axis=1)


# -- the integrator -------------------------------------------------------------


def _drift_increment(drift, h, taming, diam):
    inc = drift * h
    norm = np.linalg.norm(inc, axis=-1, keepdims=True)
    if isinstance(taming, CappedStep):
        cap = taming.fraction * diam
        active = norm > cap
        inc = np.where(active, inc * (cap / np.where(norm > 0, norm, 1.0)), inc)
        return inc, int(np.count_nonzero(active))
    if isinstance(taming, Tamed):
        active = norm > 0.5 * taming.threshold
        return inc / (1.0 + norm / taming.threshold), int(np.count_nonzero(active))
    return inc, 0


class _Noise:
    """Per-path Gaussian increments, blocked so runs at h and h/m can share them."""

    def __init__(self, seed, path_ids, n, d, m):
        self.family = rngmod.StreamFamily(seed, "sde")
        self.redraw_family = rngmod.StreamFamily(seed, "sde-redraw")
        self.path_ids = np.asarray(path_ids)
        self.shape = (n, d)
        self.m = m
        self.block = -1
        self.buf = None

    def step(self, s: int) -> np.ndarray:
        """Standard normals (P, n, d) for step s (sum of m fine normals / sqrt(m))."""
        fine = np.arange(s * self.m, (s + 1) * self.m)
        out = 0.0
        for f in fine:
            b, off = divmod(int(f), NOISE_BLOCK)
            if b != self.block:
                fam = self.family.child(f"block{b}")
                self.buf = np.stack([fam(int(p)).standard_normal((NOISE_BLOCK,) + self.shape)
                                     for p in self.path_ids]) if len(self.path_ids) else np.zeros((0, NOISE_BLOCK) + self.shape)
                self.block = b
            out = out + self.buf[:, off]
        return out / np.sqrt(self.m)

    def redraw(self, s: int, attempt: int, rows) -> np.ndarray:
        fam = self.redraw_family.child(f"step{s}/{attempt}")
        return np.stack([fam(int(p)).standard_normal(self.shape) for p in self.path_ids[rows]])


@dataclass
class EnsembleResult:
    """Outcome of evolving many paths: terminal states and per-path monitors."""

    terminal: list
    running_min_pair: np.ndarray
    records: list | None
    redraws: int
    shrinks: int
    taming_activations: int

    def summary(self) -> dict:
        return {
            "n_paths": len(self.terminal),
            "min_pair_distance": _num(np.min(self.running_min_pair) if len(self.terminal) else np.inf),
            "redraws": self.redraws,
            "shrinks": self.shrinks,
            "taming_activations": self.taming_activations,
        }


def _evolve_group(k: SpectralKernel, x: np.ndarray, path_ids, cfg: SdeConfig, keep_records: bool):
    domain = k.domain
    P, n, d = x.shape
    mode = cfg.boundary_for(domain)
    diam = domain.diameter
    steps = cfg.steps()
    noise = _Noise(cfg.seed, path_ids, n, d, cfg.noise_refinement)
    counters = {"redraws": 0, "shrinks": 0, "taming": 0}

    def monitors(pts):
        return (pair_distances_min(domain, pts), _boundary_min(domain, pts),
                -batch_log_interaction_det(k, pts) if n else np.zeros(len(pts)))

    run_min = pair_distances_min(domain, x)
    recs = None
    if keep_records:
        mp, mb, pot = monitors(x)
        recs = {"t": [0.0], "x": [x.copy()], "mp": [mp], "mb": [mb], "pot": [pot]}

    if n == 0 or len(steps) == 0:
        return x, run_min, recs, counters

    dr, ok = batch_drift(k, x)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise TrajectoryError("initial configuration has infinite potential", x[bad], int(path_ids[bad]))
    t = 0.0
    for s, h in enumerate(steps):
        xi = noise.step(s)
        new, new_dr, h_used = _advance(k, x, dr, xi, h, s, mode, diam, cfg, noise, counters, path_ids)
        x, dr = new, new_dr
        t += h
        run_min = np.minimum(run_min, pair_distances_min(domain, x))
        if keep_records and ((s + 1) % cfg.record_every == 0 or s == len(steps) - 1):
            mp, mb, pot = monitors(x)
            recs["t"].append(t)
            recs["x"].append(x.copy())
            recs["mp"].append(mp)
            recs["mb"].append(mb)
            recs["pot"].append(pot)
    return x, run_min, recs, counters


def _propose(k, x, dr, xi, h, mode, diam, taming):
    inc, act = _drift_increment(dr, h, taming, diam)
    y = apply_boundary(k.domain, x + inc + np.sqrt(2 * h) * xi, mode)
    return y, act


def _valid(k, y, mode):
    inside = np.all(k.domain.contains(y), axis=1) if mode == "reject" else np.ones(len(y), bool)
    return inside


def _advance(k, x, dr, xi, h, s, mode, diam, cfg, noise, counters, path_ids):
    y, act = _propose(k, x, dr, xi, h, mode, diam, cfg.taming)
    counters["taming"] += act
    good = _valid(k, y, mode)
    ydr = np.zeros_like(x)
    ydr_ok = np.zeros(len(x), bool)
    if np.any(good):
        d_, o_ = batch_drift(k, y[good])
        ydr[good], ydr_ok[good] = d_, o_
    bad = np.flatnonzero(~ydr_ok)
    attempt = 0
    h_loc = np.full(len(x), h)
    while bad.size:
        attempt += 1
        if attempt <= MAX_REDRAWS:
            counters["redraws"] += bad.size
            xi_b = noise.redraw(s, attempt, bad)
        else:
            shrink = attempt - MAX_REDRAWS
            if shrink > MAX_SHRINKS:
                p = int(bad[0])
                raise TrajectoryError(f"no admissible step after {MAX_REDRAWS} redraws and {MAX_SHRINKS} step halvings",
                                      x[p], int(path_ids[p]))
            counters["shrinks"] += bad.size
            h_loc[bad] = h * 0.5**shrink
            xi_b = noise.redraw(s, attempt, bad)
        yb, act = _propose(k, x[bad], dr[bad], xi_b, h_loc[bad][:, None, None], mode, diam, cfg.taming)
        counters["taming"] += act
        y[bad] = yb
        g = _valid(k, yb, mode)
        okb = np.zeros(bad.size, bool)
        if np.any(g):
            d_, o_ = batch_drift(k, yb[g])
            ydr[bad[g]] = d_
            okb[g] = o_
        ydr_ok[bad] = okb
        bad = bad[~okb]
    return y, ydr, h_loc


def evolve_paths(k: SpectralKernel, inits, cfg: SdeConfig, path_ids=None, keep_records: bool = False) -> EnsembleResult:
    """Evolve many independent paths; path i uses noise stream ``path_ids[i]``."""
    d = k.dimension
    inits = [np.asarray(c.points if isinstance(c, PointConfiguration) else c, dtype=float).reshape(-1, d) for c in inits]
    for c in inits:
        if len(c) > k.rank:
            raise ValueError(f"initial configuration has {len(c)} points, more than the rank {k.rank}")
    path_ids = np.arange(len(inits)) if path_ids is None else np.asarray(path_ids)
    counts = np.array([len(c) for c in inits], dtype=int)
    terminal = [None] * len(inits)
    run_min = np.full(len(inits), np.inf)
    records = [None] * len(inits) if keep_records else None
    tot = {"redraws": 0, "shrinks": 0, "taming": 0}
    for n in np.unique(counts):
        idx = np.flatnonzero(counts == n)
        x = np.stack([inits[i] for i in idx]) if n else np.zeros((len(idx), 0, d))
        for i, row in zip(idx, x):
            k.domain.check(row)
        xf, rm, recs, cnt = _evolve_group(k, x, path_ids[idx], cfg, keep_records)
        for key in tot:
            tot[key] += cnt[key]
        for j, i in enumerate(idx):
            terminal[i] = PointConfiguration(xf[j], d)
            run_min[i] = rm[j]
            if keep_records:
                records[i] = TrajectoryRecord(
                    times=np.array(recs["t"]),
                    states=[PointConfiguration(s[j], d) for s in recs["x"]],
                    min_pair_distance=np.array([m[j] for m in recs["mp"]]),
                    min_boundary_distance=np.array([m[j] for m in recs["mb"]]),
                    potential=np.array([m[j] for m in recs["pot"]]),
                    running_min_pair=float(rm[j]),
                    dimension=d,
                )
    if keep_records:
        # counters are per group; attribute them to the ensemble and the single-path case
        if len(inits) == 1:
            records[0].redraws, records[0].shrinks, records[0].taming_activations = tot["redraws"], tot["shrinks"], tot["taming"]
    return EnsembleResult(terminal, run_min, records, tot["redraws"], tot["shrinks"], tot["taming"])


def evolve(k: SpectralKernel, init, cfg: SdeConfig, path_id: int = 0) -> TrajectoryRecord:
    """Single trajectory with monitors recorded every ``cfg.record_every`` steps."""
    pts = as_points(k, init)
    res = evolve_paths(k, [pts], cfg, path_ids=[path_id], keep_records=True)
    return res.records[0]


# -- diagnostics ---------------------------------------------------------------


@dataclass
class CollisionSummary:
    fraction_below: float
    minimum: float
    no_guarantee: bool


def collision_stats(record: TrajectoryRecord, threshold: float) -> CollisionSummary:
    """Fraction of recorded times with min pair distance strictly below ``threshold``."""
    if record.dimension < 2:
        warnings.warn("d = 1: the non-collision property is not guaranteed", NoDiffusionGuaranteeWarning, stacklevel=2)
    mp = np.asarray(record.min_pair_distance)
    frac = float(np.mean(mp < threshold)) if mp.size else 0.0
    return CollisionSummary(frac, float(record.running_min_pair), record.dimension < 2)


def ensemble_collision_fraction(res: EnsembleResult, threshold: float, dimension: int) -> CollisionSummary:
    """Fraction of paths whose pair distance ever dropped below ``threshold`` (checked every step)."""
    if dimension < 2:
        warnings.warn("d = 1: the non-collision property is not guaranteed", NoDiffusionGuaranteeWarning, stacklevel=2)
    rm = np.asarray(res.running_min_pair)
    return CollisionSummary(float(np.mean(rm < threshold)) if rm.size else 0.0,
                            float(np.min(rm)) if rm.size else np.inf, dimension < 2)


@dataclass
class StationarityReport:
    bin_means: np.ndarray
    bin_expected: np.ndarray
    bin_se: np.ndarray
    z: np.ndarray
    count_chi2: float
    count_p: float
    n_paths: int
    bias_budget: np.ndarray | float = 0.0
    threshold: float = 3.0
    ensemble: EnsembleResult | None = None

    @property
    def passed(self) -> bool:
        resid = np.abs(self.bin_means - self.bin_expected)
        return bool(np.all(resid <= self.threshold * self.bin_se + self.bias_budget)) and self.count_p > 0.01


def default_bins(domain: DomainDescriptor, n_bins: int = 6):
    from .point_process import GridBins, RadialBins

    if isinstance(domain.shape, Ball) and domain.dimension == 2:
        return RadialBins(domain.shape.center, np.linspace(0, domain.shape.radius, n_bins + 1))
    lo, hi = domain.bounds
    per_axis = n_bins if domain.dimension == 1 else max(2, int(round(n_bins ** (1 / domain.dimension))))
    return GridBins(lo, hi, [per_axis] * domain.dimension)


def stationarity_test(k: SpectralKernel, cfg: SdeConfig, n_paths: int, seed: int, bins=None,
                      bias_budget=0.0, initial=None) -> StationarityReport:
    """Start from exact DPP draws, evolve to the horizon, compare with the DPP law."""
    from .point_process import (count_chi_square, count_probabilities, expected_bin_counts,
                                k_intensity, per_sample_bin_counts, sample_dpp)

    bins = bins or default_bins(k.domain)
    if initial is None:
        initial = sample_dpp(k, n_paths, seed).configurations
    res = evolve_paths(k, initial, cfg)
    counts = per_sample_bin_counts(res.terminal, bins)
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / np.sqrt(len(counts))
    expected = expected_bin_counts(k_intensity(k), bins, k.domain)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (mean - expected) / se, 0.0)
    n_pts = np.array([len(c) for c in res.terminal])
    if k.is_projection:
        chi2, p = 0.0, float(np.all(n_pts == k.size))
    else:
        chi2, p = count_chi_square(n_pts, count_probabilities(k))
    return StationarityReport(mean, expected, se, z, chi2, p, len(initial), bias_budget, ensemble=res)


# -- output ----------------------------------------------------------------------


def write_trajectories(records, path, summary: dict | None = None) -> tuple[Path, Path]:
    """CSV (path_id, time, point_id, x_1..x_d) plus ``<path>.summary.json``."""
    path = Path(path)
    records = list(records)
    d = records[0].dimension if records else 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "time", "point_id"] + [f"x_{a + 1}" for a in range(d)])
        for p, rec in enumerate(records):
            for t, st in zip(rec.times, rec.states):
                for i, x in enumerate(st.points):
                    w.writerow([p, format(float(t), ".17g"), i] + [format(float(v), ".17g") for v in x])
    out = {"paths": [r.summary() for r in records]}
    if summary:
        out.update(summary)
    side = path.with_suffix(path.suffix + ".summary.json")
    side.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return path, side
