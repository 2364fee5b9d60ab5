"""Monte Carlo and closed-form checks of the identities of the theory.

Two-sided identities E[L] = E[R] are estimated on the same draws and judged
by the z-score of the paired difference mean(L - R) / se(L - R).
Configurations where the potential is infinite are dropped from both sides
and counted; more than 0.1% dropped draws fails the identity.

Deterministic closed-form checks reuse the report format with
lhs.mean = worst relative error, rhs.mean = tolerance and z = their ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixtures
from . import rng as rngmod
from .calculus import (
    FlowMap,
    batch_carre_du_champ,
    batch_directional_grad,
    batch_divergence_op,
    batch_generator,
    batch_log_quasi_invariance_weight,
    flow_points,
    potential_U,
)
from .kernels import (
    SpectralKernel,
    batch_log_interaction_det,
    correlation_fn,
    gram_slogdet,
    make_bergman_kernel,
    make_dyson_kernel,
)
from .point_process import sample_dpp
from .specs import SpecError, functional_from_json, field_from_json, load_kernel, statistic_from_json
from .stats import McEstimate
from .symmetric import bergman_detj_closed_form, dyson_det_closed_form

MAX_DROP_FRACTION = 1e-3


class ConfigError(ValueError):
    """Unusable verification configuration (exit code 2)."""


@dataclass
class IdentityReport:
    suite: str
    name: str
    lhs: McEstimate
    rhs: McEstimate
    z: float
    threshold: float = 3.0
    dropped_samples: int = 0
    n_draws: int = 0
    diff_se: float = 0.0
    note: str = ""

    @property
    def drop_ok(self) -> bool:
        return self.n_draws == 0 or self.dropped_samples <= MAX_DROP_FRACTION * self.n_draws

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.z) and abs(self.z) <= self.threshold and self.drop_ok)

    def to_json(self) -> dict:
        out = {
            "suite": self.suite,
            "identity": self.name,
            "lhs": self.lhs.to_json(),
            "rhs": self.rhs.to_json(),
            "z": self.z if np.isfinite(self.z) else str(self.z),
            "pass": self.passed,
            "dropped": self.dropped_samples,
            "threshold": self.threshold,
        }
        if self.n_draws:
            out["diff_se"] = self.diff_se
        if self.note:
            out["note"] = self.note
        if not self.drop_ok:
            out["diagnostic"] = f"{self.dropped_samples} of {self.n_draws} draws had infinite potential"
        return out


def _paired_report(suite, name, lhs, rhs, ok, threshold, note="") -> IdentityReport:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    ok = np.asarray(ok, bool) & np.isfinite(lhs) & np.isfinite(rhs)
    n = lhs.size
    L, R = lhs[ok], rhs[ok]
    a = McEstimate.from_samples(L)
    b = McEstimate.from_samples(R)
    diff = McEstimate.from_samples(L - R)
    if diff.std_error > 0:
        z = diff.mean / diff.std_error
    else:
        z = 0.0 if abs(diff.mean) <= 1e-14 * (1 + abs(a.mean)) else float(np.sign(diff.mean) * np.inf)
    return IdentityReport(suite, name, a, b, float(z), threshold, int(n - ok.sum()), n, diff.std_error, note)


def _draws(k: SpectralKernel, n_samples: int, seed: int, label: str):
    """DPP draws grouped by point count: list of (indices, points)."""
    batch = sample_dpp(k, n_samples, rngmod.base_key(seed, label))
    return batch.grouped(), n_samples


def _assemble(groups, n_total, fn):
    """Evaluate ``fn(points) -> tuple of arrays`` per group and scatter back."""
    outs = None
    for _, (idx, pts) in sorted(groups.items()):
        res = fn(pts)
        if outs is None:
            outs = [np.empty(n_total, dtype=np.asarray(r).dtype if np.asarray(r).dtype == bool else float) for r in res]
        for o, r in zip(outs, res):
            o[idx] = r
    return outs


# -- suites ---------------------------------------------------------------------


def run_ibp_suite(k: SpectralKernel, triples, n_samples: int, seed: int, threshold: float = 3.0):
    """E[G grad_v F] = E[F grad*_v G] per (F, G, v), paired on the same draws."""
    reports = []
    for i, (F, G, v) in enumerate(triples):
        groups, n = _draws(k, n_samples, seed, f"ibp/{i}")

        def fn(pts):
            lhs = G.batch_value(pts) * batch_directional_grad(F, v, pts)
            dual, ok = batch_divergence_op(k, v, G, pts)
            return lhs, F.batch_value(pts) * dual, ok

        lhs, rhs, ok = _assemble(groups, n, fn)
        reports.append(_paired_report("ibp", f"ibp[{i}]", lhs, rhs, ok.astype(bool), threshold))
    return reports


def _exp_minus_sum(f, pts):
    if pts.shape[1] == 0:
        return np.ones(pts.shape[0])
    return np.exp(-np.sum(f.value(pts), axis=1))


def run_quasi_invariance_suite(k: SpectralKernel, flows, f_list, n_samples: int, seed: int,
                               threshold: float = 3.0):
    """E[exp(-sum f(phi x_i))] = E[exp(-sum f(x_i)) w_phi(x)] per (flow, f)."""
    reports = []
    for i, flow in enumerate(flows):
        groups, n = _draws(k, n_samples, seed, f"qi/{i}")
        for j, f in enumerate(f_list):

            def fn(pts):
                B, m, d = pts.shape
                if m == 0:
                    one = np.ones(B)
                    return one, one, np.ones(B, bool)
                fwd, _ = flow_points(flow, pts.reshape(-1, d))
                lhs = _exp_minus_sum(f, fwd.reshape(B, m, d))
                logw = batch_log_quasi_invariance_weight(k, flow, pts)
                ok = np.isfinite(batch_log_interaction_det(k, pts)) & np.isfinite(logw)
                rhs = _exp_minus_sum(f, pts) * np.exp(np.where(ok, logw, 0.0))
                return lhs, rhs, ok

            lhs, rhs, ok = _assemble(groups, n, fn)
            reports.append(_paired_report("quasi_invariance", f"qi[flow={i},f={j}]", lhs, rhs, ok.astype(bool), threshold))
    return reports


def run_dirichlet_suite(k: SpectralKernel, pairs, n_samples: int, seed: int, threshold: float = 3.0):
    """E[sum_i grad_i F . grad_i G] = E[G HF] and E[G HF] = E[F HG]."""
    reports = []
    for i, (F, G) in enumerate(pairs):
        groups, n = _draws(k, n_samples, seed, f"dirichlet/{i}")

        def fn(pts):
            hf, ok1 = batch_generator(k, F, pts)
            hg, ok2 = batch_generator(k, G, pts)
            return batch_carre_du_champ(F, G, pts), G.batch_value(pts) * hf, F.batch_value(pts) * hg, ok1 & ok2

        form, ghf, fhg, ok = _assemble(groups, n, fn)
        ok = ok.astype(bool)
        reports.append(_paired_report("dirichlet", f"form[{i}]", form, ghf, ok, threshold))
        reports.append(_paired_report("dirichlet", f"symmetry[{i}]", ghf, fhg, ok, threshold))
    return reports


def _closed_report(name, errors, tol, n):
    worst = float(np.max(errors)) if len(errors) else 0.0
    return IdentityReport("closedform", name, McEstimate(worst, 0.0, n), McEstimate(tol, 0.0, n),
                          worst / tol, threshold=1.0)


def _rel(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.maximum(np.abs(b), 1e-300)
    return np.abs(a - b) / scale


def run_closedform_suite(tolerances: dict | None = None, seed: int = 0, n_configs: int = 100):
    """Matrix determinants against their closed forms on random configurations."""
    tol = {"dyson": 1e-10, "bergman": 1e-8, "potential": 1e-10}
    tol.update(tolerances or {})
    g = rngmod.stream(seed, "closedform")
    reports = []

    errs = []
    for N in range(1, 9):
        k = make_dyson_kernel(N)
        # configurations drawn from the process itself: uniform draws put
        # near-coincident points in the sample whose matrix determinant is
        # ill-conditioned far beyond 1e-10 in double precision
        theta = sample_dpp(k, n_configs, rngmod.base_key(seed, f"closedform/dyson{N}")).grouped()[N][1][..., 0]
        mat, _ = gram_slogdet(k, theta[..., None], k.eigenvalues)
        errs.append(_rel(mat, dyson_det_closed_form(N, theta)))
    reports.append(_closed_report("dyson_det", np.concatenate(errs), tol["dyson"], 8 * n_configs))

    errs = []
    for N in range(1, 5):
        k = make_bergman_kernel(0.5, N)
        R = 0.5
        for m in range(1, N + 1):
            r = R * np.sqrt(g.random((n_configs, m)))
            t = 2 * np.pi * g.random((n_configs, m))
            pts = np.stack([r * np.cos(t), r * np.sin(t)], -1)
            mat, _ = gram_slogdet(k, pts, k.j_weights)
            errs.append(_rel(mat, bergman_detj_closed_form(R, N, pts)))
    reports.append(_closed_report("bergman_detj", np.concatenate(errs), tol["bergman"], len(np.concatenate(errs))))

    k = make_bergman_kernel(0.5, 2)
    R = 0.5
    r = R * np.sqrt(g.random(n_configs))
    t = 2 * np.pi * g.random(n_configs)
    pts = np.stack([r * np.cos(t), r * np.sin(t)], -1)
    C1 = 2 / (np.pi * (1 - R**4))
    C2 = 3 / (np.pi * (1 - R**6))
    U = np.array([potential_U(k, p[None]) for p in pts])
    ref = -np.log(C1 * r**2 + C2 * r**4)
    reports.append(_closed_report("bergman_singleton_U", np.abs(U - ref) / np.maximum(1, np.abs(ref)),
                                  tol["potential"], n_configs))

    # repeated points give vanishing correlation functions
    vals = []
    for kk in (make_bergman_kernel(0.5, 3), make_dyson_kernel(4)):
        for _ in range(20):
            x = kk.domain.uniform(g, 2)
            cfg = np.concatenate([x, x[:1]], axis=0)
            vals.append(abs(correlation_fn(kk, cfg)))
    reports.append(IdentityReport("closedform", "repeated_point_zero", McEstimate(max(vals), 0.0, len(vals)),
                                  McEstimate(1e-12, 0.0, len(vals)), max(vals) / 1e-12, threshold=1.0))
    return reports


# -- configuration and aggregate runs --------------------------------------------


SUITES = ("ibp", "quasi_invariance", "dirichlet", "closedform")


def default_config() -> dict:
    bergman = {"type": "bergman", "R": 0.5, "N": 2}
    dyson = {"type": "dyson", "N": 3}
    return {
        "threshold": 3.0,
        "bonferroni": False,
        "suites": [
            {"suite": "closedform"},
            {"suite": "ibp", "kernel": bergman, "n_samples": 100_000, "seed": 1, "fixtures": {"count": 5}},
            {"suite": "quasi_invariance", "kernel": bergman, "n_samples": 100_000, "seed": 2,
             "fixtures": {"flows": 3, "functions": 1}},
            {"suite": "dirichlet", "kernel": bergman, "n_samples": 100_000, "seed": 3, "fixtures": {"count": 3}},
            {"suite": "ibp", "kernel": dyson, "n_samples": 20_000, "seed": 4, "fixtures": {"count": 2}},
            {"suite": "dirichlet", "kernel": dyson, "n_samples": 20_000, "seed": 5, "fixtures": {"count": 2}},
        ],
    }


def load_config(source) -> dict:
    if source is None:
        return default_config()
    if isinstance(source, dict):
        return source
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from exc


def _fixtures_for(entry: dict, k: SpectralKernel, kind: str):
    fx = entry.get("fixtures", {})
    d = k.dimension
    fseed = int(fx.get("seed", 0))
    if kind == "ibp":
        if "triples" in fx:
            return [(functional_from_json(t["F"], d), functional_from_json(t["G"], d), field_from_json(t["v"], d))
                    for t in fx["triples"]]
        return fixtures.ibp_triples(k, int(fx.get("count", 5)), fseed)
    if kind == "dirichlet":
        if "pairs" in fx:
            return [(functional_from_json(t["F"], d), functional_from_json(t["G"], d)) for t in fx["pairs"]]
        return fixtures.dirichlet_pairs(k, int(fx.get("count", 3)), fseed)
    if kind == "quasi_invariance":
        if "flows" in fx and isinstance(fx["flows"], list):
            fl = [FlowMap(field_from_json(f["field"], d), float(f["time"]), domain=k.domain) for f in fx["flows"]]
        else:
            fl = fixtures.flows(k, int(fx.get("flows", 3)), fseed)
        if "functions" in fx and isinstance(fx["functions"], list):
            fs = [statistic_from_json(f, d) for f in fx["functions"]]
        else:
            fs = fixtures.nonnegative_statistics(k, int(fx.get("functions", 1)), fseed)
        return fl, fs
    raise ConfigError(f"unknown suite {kind!r}")


def validate_config(cfg: dict) -> list:
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    suites = cfg.get("suites", [])
    if not isinstance(suites, list):
        raise ConfigError("'suites' must be a list")
    for i, e in enumerate(suites):
        if not isinstance(e, dict) or e.get("suite") not in SUITES:
            raise ConfigError(f"suites[{i}]: unknown suite {e.get('suite') if isinstance(e, dict) else e!r}; "
                              f"expected one of {SUITES}")
        if e["suite"] != "closedform":
            if "kernel" not in e:
                raise ConfigError(f"suites[{i}]: missing 'kernel'")
            n = e.get("n_samples", 10_000)
            if not isinstance(n, int) or n < 2:
                raise ConfigError(f"suites[{i}]: n_samples must be an integer >= 2")
    return suites


def run_all(config=None, suites: list | None = None) -> tuple[dict, int]:
    """Run the configured suites; returns (JSON report, exit code 0/1/2)."""
    try:
        cfg = load_config(config)
        entries = validate_config(cfg)
        if suites is not None:
            unknown = [s for s in suites if s not in SUITES]
            if unknown:
                raise ConfigError(f"unknown suite(s) {unknown}; expected {SUITES}")
            entries = [e for e in entries if e["suite"] in suites]
        threshold = float(cfg.get("threshold", 3.0))
        prepared = []
        for i, e in enumerate(entries):
            if e["suite"] == "closedform":
                prepared.append((e, None, None))
                continue
            try:
                k = load_kernel(e["kernel"])
                fx = _fixtures_for(e, k, e["suite"])
            except (SpecError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"suites[{i}]: {exc}") from exc
            prepared.append((e, k, fx))
    except ConfigError as exc:
        return {"error": str(exc), "reports": [], "pass": False}, 2

    n_ident = 0
    for e, _, fx in prepared:
        s = e["suite"]
        n_ident += 4 if s == "closedform" else (
            len(fx) * (2 if s == "dirichlet" else 1) if s != "quasi_invariance" else len(fx[0]) * len(fx[1]))
    if cfg.get("bonferroni", False) and n_ident > 1:
        from scipy.stats import norm

        threshold = float(norm.isf(2 * norm.sf(threshold) / n_ident / 2))

    reports = []
    for e, k, fx in prepared:
        s = e["suite"]
        n = int(e.get("n_samples", 10_000))
        seed = int(e.get("seed", 0))
        if s == "closedform":
            reports += run_closedform_suite(e.get("tolerances"), seed=seed)
        elif s == "ibp":
            reports += _tag(run_ibp_suite(k, fx, n, seed, threshold), k)
        elif s == "dirichlet":
            reports += _tag(run_dirichlet_suite(k, fx, n, seed, threshold), k)
        else:
            reports += _tag(run_quasi_invariance_suite(k, fx[0], fx[1], n, seed, threshold), k)
    ok = all(r.passed for r in reports)
    out = {"pass": ok, "threshold": threshold, "reports": [r.to_json() for r in reports]}
    return out, 0 if ok else 1


def _tag(reports, k):
    kind = (k.spec or {}).get("type", "custom")
    for r in reports:
        r.name = f"{kind}:{r.name}"
    return reports
