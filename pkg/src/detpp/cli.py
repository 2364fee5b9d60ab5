"""Command line interface: ``detpp {sample,evolve,eval,verify}``.

Exit codes: 0 success (verify: every identity passed), 1 statistical
failure (verify only), 2 invalid input (bad flags, unreadable or
malformed files, points outside the domain).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .calculus import InfinitePotentialError, drift, potential_U
from .domain import DomainError
from .dynamics import CappedStep, NoTaming, SdeConfig, Tamed, TrajectoryError, evolve_paths, write_trajectories
from .kernels import (
    PointConfiguration,
    UnsupportedOperatorError,
    correlation_fn,
    janossy_density,
    log_janossy_density,
)
from .point_process import sample_dpp, write_batch
from .rng import base_key
from .specs import SpecError, load_kernel
from .verification import SUITES, run_all


class UsageError(Exception):
    pass


def _kernel(args):
    if not args.kernel:
        raise UsageError("--kernel is required")
    path = Path(args.kernel)
    if not path.exists():
        raise UsageError(f"{path}: no such kernel file")
    return load_kernel(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_num(x):
    x = float(x)
    if np.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def cmd_sample(args) -> int:
    k = _kernel(args)
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    batch = sample_dpp(k, args.n, base_key(args.seed, "sample"))
    csv_path, side = write_batch(batch, _out_dir(args) / "samples.csv", kernel_spec=k.spec)
    print(json.dumps({"samples": str(csv_path), "metadata": str(side), "n_samples": args.n,
                      "mean_count": float(batch.counts.mean()) if args.n else 0.0}))
    return 0


def _read_points_file(path: Path, d: int) -> list[np.ndarray]:
    """JSON {"points": [...]} / {"configurations": [[...], ...]} or a samples CSV."""
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    if path.suffix == ".csv":
        rows: dict[int, list] = {}
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                rows.setdefault(int(row[0]), []).append([float(v) for v in row[2:]])
        meta = path.with_suffix(path.suffix + ".json")
        n = json.loads(meta.read_text())["n_samples"] if meta.exists() else (max(rows) + 1 if rows else 0)
        return [np.array(rows.get(i, np.zeros((0, d))), dtype=float).reshape(-1, d) for i in range(n)]
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(data, dict) and "configurations" in data:
        cfgs = data["configurations"]
    elif isinstance(data, dict) and "points" in data:
        cfgs = [data["points"]]
    elif isinstance(data, list):
        cfgs = [data]
    else:
        raise UsageError(f"{path}: expected 'points' or 'configurations'")
    return [np.array(c, dtype=float).reshape(-1, d) for c in cfgs]


def cmd_evolve(args) -> int:
    k = _kernel(args)
    if not args.h > 0:
        raise UsageError("--h must be positive")
    if not args.T >= 0:
        raise UsageError("--T must be non-negative")
    if args.paths < 1:
        raise UsageError("--paths must be >= 1")
    taming = {"capped": CappedStep(), "none": NoTaming()}.get(args.taming)
    if args.taming == "tamed":
        taming = Tamed(args.tame_threshold if args.tame_threshold else 0.1 * k.domain.diameter)
    try:
        cfg = SdeConfig(args.h, args.T, taming, args.boundary, base_key(args.seed, "evolve"), args.record_every)
        cfg.boundary_for(k.domain)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.init:
        inits = _read_points_file(Path(args.init), k.dimension)
        if len(inits) == 1 and args.paths > 1:
            inits = inits * args.paths
    else:
        # nonempty exact draws make the most informative default start
        batch = sample_dpp(k, 50 * args.paths + 100, base_key(args.seed, "evolve-init"))
        nonempty = [c.points for c in batch.configurations if len(c)]
        pool = nonempty if nonempty else [c.points for c in batch.configurations]
        inits = (pool * (args.paths // max(len(pool), 1) + 1))[: args.paths]
    res = evolve_paths(k, inits, cfg, keep_records=True)
    summary = {"config": cfg.to_json(), "kernel": k.spec, "boundary": cfg.boundary_for(k.domain),
               "ensemble": res.summary()}
    if k.dimension < 2:
        summary["warning"] = "d = 1: the non-collision property is not guaranteed"
    csv_path, side = write_trajectories(res.records, _out_dir(args) / "trajectories.csv", summary)
    print(json.dumps({"trajectories": str(csv_path), "summary": str(side), **res.summary()}))
    return 0


def _eval_one(k, pts, quantities):
    out = {"n_points": int(len(pts))}
    k.domain.check(pts)
    if "janossy" in quantities:
        out["janossy"] = _json_num(janossy_density(k, pts))
        out["log_janossy"] = _json_num(log_janossy_density(k, pts))
    if "correlation" in quantities:
        out["correlation"] = _json_num(correlation_fn(k, pts))
    if "potential" in quantities:
        out["potential"] = _json_num(potential_U(k, pts))
    if "drift" in quantities:
        try:
            out["drift"] = drift(k, pts).tolist()
        except InfinitePotentialError as exc:
            out["drift"] = None
            out["drift_error"] = str(exc)
    return out


def cmd_eval(args) -> int:
    k = _kernel(args)
    if not args.points:
        raise UsageError("--points is required")
    quantities = [q.strip() for q in args.quantities.split(",") if q.strip()]
    bad = [q for q in quantities if q not in ("janossy", "correlation", "potential", "drift")]
    if bad:
        raise UsageError(f"unknown quantities {bad}")
    cfgs = _read_points_file(Path(args.points), k.dimension)
    results = []
    for i, pts in enumerate(cfgs):
        try:
            results.append(_eval_one(k, pts, quantities))
        except DomainError as exc:
            raise UsageError(f"configuration {i}: {exc}") from exc
    text = json.dumps({"kernel": k.spec, "results": results}, indent=2)
    (_out_dir(args) / "eval.json").write_text(text + "\n")
    if len(results) <= 20:
        print(text)
    else:
        finite = sum(1 for r in results if r.get("log_janossy") not in ("-inf", None))
        print(json.dumps({"n_configurations": len(results), "finite_janossy": finite}))
    return 0


def cmd_verify(args) -> int:
    suites = None
    if args.suites:
        suites = [s.strip() for s in args.suites.split(",") if s.strip()]
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            raise UsageError(f"unknown suite(s) {unknown}; expected a subset of {list(SUITES)}")
    if args.config and not Path(args.config).exists():
        raise UsageError(f"{args.config}: no such file")
    report, code = run_all(args.config, suites)
    report["seed_note"] = "suite seeds come from the configuration"
    (_out_dir(args) / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if code == 2:
        print(report["error"], file=sys.stderr)
    else:
        for r in report["reports"]:
            print(f"{'PASS' if r['pass'] else 'FAIL'} {r['suite']} {r['identity']} z={r['z']}")
    return code


def build_parser() -> argparse.ArgumentParser:
    def flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags; their defaults must not clobber
        # values given before the subcommand name
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--kernel", default=dflt(None), help="kernel specification (JSON)")
        g.add_argument("--seed", type=int, default=dflt(0))
        g.add_argument("--out", default=dflt("."), help="output directory")
        g.add_argument("--threads", type=int, default=dflt(1), help="worker bound (work is vectorized in-process)")
        return g

    common = flags(suppress=True)
    p = argparse.ArgumentParser(prog="detpp", description="Determinantal point processes on compact domains",
                                parents=[flags(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw exact DPP samples")
    s.add_argument("--n", type=int, default=1000)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evolve", parents=[common], help="integrate the Langevin diffusion")
    e.add_argument("--h", type=float, default=1e-3)
    e.add_argument("--T", type=float, default=1.0)
    e.add_argument("--paths", type=int, default=1)
    e.add_argument("--init", help="initial configuration(s), JSON or samples CSV")
    e.add_argument("--taming", choices=("capped", "tamed", "none"), default="capped")
    e.add_argument("--tame-threshold", type=float)
    e.add_argument("--boundary", choices=("reflect", "reject", "periodic"))
    e.add_argument("--record-every", type=int, default=1)
    e.set_defaults(func=cmd_evolve)

    v = sub.add_parser("eval", parents=[common], help="evaluate Janossy density, potential, drift")
    v.add_argument("--points", help="JSON with 'points' or 'configurations', or a samples CSV")
    v.add_argument("--quantities", default="janossy,correlation,potential,drift")
    v.set_defaults(func=cmd_eval)

    r = sub.add_parser("verify", parents=[common], help="run identity checks")
    r.add_argument("--config", help="suite configuration (JSON); default Bergman + Dyson suites")
    r.add_argument("--suites", help=f"comma-separated subset of {','.join(SUITES)}")
    r.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, SpecError, DomainError, UnsupportedOperatorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrajectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
