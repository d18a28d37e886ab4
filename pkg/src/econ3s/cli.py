"""Experiment runner: configure a problem and method, run, emit trace files.

Problems: synthetic | example-2-2 | fair-roc | fair-dp | neyman-pearson.
Methods: 3s-econ-d | 3s-econ-s | ssg | ssg-s.

Each run writes ``trace.csv`` (fixed header, 17 significant digits) and
``summary.json`` (every effective parameter plus the final record) into the
output directory.  ``sweep`` repeats a run over a beta and/or nu grid with
one subdirectory per grid point and a combined summary table.

Parameter precedence: command-line flags, then the ``--config`` key-value
file, then built-in defaults (beta 10, nu 1e-5, method step sizes).  The
default output directory comes from the ECON3S_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .core import ProblemInstance
from .data_ingest import (
    augment_first_coordinate,
    parse_csv,
    parse_idx,
    parse_libsvm,
    split_and_partition,
)
from .metrics import emit_trace
from .penalty import PenaltyConfig, theorem_schedule
from .problems import (
    DpScadSpec,
    NeymanPearsonSpec,
    RocFairnessSpec,
    build_dp_scad,
    build_example_1d,
    build_neyman_pearson,
    build_roc_fairness,
    build_synthetic_quadratic,
)
from .solver import SolverConfig, run_3s_econ
from .ssg import SsgConfig, run_ssg

PROBLEMS = ("synthetic", "example-2-2", "fair-roc", "fair-dp", "neyman-pearson")
METHODS = ("3s-econ-d", "3s-econ-s", "ssg", "ssg-s")

BETA_GRID_DEFAULT = "1,10,100,1000"
NU_GRID_DEFAULT = "1e-5,1e-4,1e-3,1e-2"

# flags that may also come from the --config file, with their casts
_CASTS = {
    "problem": str, "method": str, "dataset": str, "schema": str,
    "images": str, "labels": str, "group_feature": int,
    "beta": float, "nu": float, "alpha": float,
    "s1": int, "s2": int, "q": int,
    "sigma": float, "sigma1": float, "sigma2": float,
    "max_dp_g": float, "max_iters": int,
    "svio_stop": float, "svio_every": int, "record_every": int,
    "feas_tol": float, "seed": int, "split_seed": int,
    "epsilon": float, "out": str,
}


def _add_run_flags(sp):
    sp.add_argument("--problem", choices=PROBLEMS)
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--dataset", help="libsvm (.libsvm/.txt) or csv dataset path")
    sp.add_argument("--schema", help="column-role schema file for csv datasets")
    sp.add_argument("--images", help="idx image file (neyman-pearson)")
    sp.add_argument("--labels", help="idx label file (neyman-pearson)")
    sp.add_argument("--group-feature", type=int, dest="group_feature",
                    help="1-based feature index marking the protected group (libsvm)")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--nu", type=float)
    sp.add_argument("--alpha", type=float, help="step size (constant) or its numerator (decaying)")
    sp.add_argument("--s1", type=int)
    sp.add_argument("--s2", type=int)
    sp.add_argument("--q", type=int)
    sp.add_argument("--sigma", type=float, help="synthetic constraint-value noise")
    sp.add_argument("--sigma1", type=float, help="synthetic objective-subgradient noise")
    sp.add_argument("--sigma2", type=float, help="synthetic constraint-subgradient noise")
    sp.add_argument("--max-dp-g", type=float, dest="max_dp_g")
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--svio-stop", type=float, dest="svio_stop")
    sp.add_argument("--svio-every", type=int, dest="svio_every")
    sp.add_argument("--record-every", type=int, dest="record_every")
    sp.add_argument("--feas-tol", type=float, dest="feas_tol", help="ssg feasibility tolerance")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--split-seed", type=int, dest="split_seed")
    sp.add_argument("--theoretical", action="store_true",
                    help="derive the schedule from the guarantee calculator")
    sp.add_argument("--epsilon", type=float, help="target tolerance for --theoretical")
    sp.add_argument("--fixed-clock", action="store_true",
                    help="record wall_ms as 0 for byte-reproducible traces")
    sp.add_argument("--config", help="flat key = value parameter file")
    sp.add_argument("--out", help="output directory (default $ECON3S_OUT or ./runs)")


def _read_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{ln}: expected key = value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _merge_config(args):
    if getattr(args, "config", None):
        file_vals = _read_config_file(args.config)
        for key, raw in file_vals.items():
            if key not in _CASTS:
                raise ValueError(f"unknown config key {key!r}")
            if getattr(args, key, None) is None:
                setattr(args, key, _CASTS[key](raw))
    defaults = {"seed": 1, "split_seed": 0, "beta": 10.0, "nu": 1e-5,
                "sigma": 0.0, "sigma1": 0.0, "sigma2": 0.0,
                "record_every": 1}
    for key, val in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    return args


def _load_fair_dataset(args):
    if not args.dataset:
        raise ValueError(f"problem {args.problem} needs --dataset")
    path = Path(args.dataset)
    if not path.exists():
        raise FileNotFoundError(f"missing dataset: {path}")
    if path.suffix == ".csv":
        if not args.schema:
            raise ValueError("csv datasets need --schema")
        ds = parse_csv(path, args.schema)
    else:
        ds = parse_libsvm(path)
        if args.group_feature is None:
            raise ValueError("libsvm datasets need --group-feature")
        groups = (ds.features[:, args.group_feature - 1] != 0).astype(np.int8)
        ds = type(ds)(ds.features, ds.labels, groups)
    ds = augment_first_coordinate(ds, sign_by_group=True)
    return split_and_partition(ds, args.split_seed)


def build_problem(args) -> ProblemInstance:
    if args.problem == "synthetic":
        return build_synthetic_quadratic(sigma=args.sigma, sigma1=args.sigma1,
                                         sigma2=args.sigma2)
    if args.problem == "example-2-2":
        return build_example_1d()
    if args.problem in ("fair-roc", "fair-dp"):
        main, part_p, part_u = _load_fair_dataset(args)
        if args.problem == "fair-roc":
            return build_roc_fairness(RocFairnessSpec(main, part_p, part_u,
                                                      pretrain_seed=args.split_seed))
        return build_dp_scad(DpScadSpec(main, part_p, part_u))
    if args.problem == "neyman-pearson":
        if not (args.images and args.labels):
            raise ValueError("neyman-pearson needs --images and --labels")
        ds = parse_idx(args.images, args.labels)
        ds = augment_first_coordinate(ds, sign_by_group=False)
        # class blocks ordered digit 1..9 then 0
        classes = [ds.subset(np.flatnonzero(ds.labels == (i % 10))) for i in range(1, 11)]
        return build_neyman_pearson(NeymanPearsonSpec(classes))
    raise ValueError(f"unknown problem {args.problem!r}")


def _default_stream_schedule(p):
    # stream defaults when S1 = N is unavailable
    return 64, 8, 8


def make_run(p: ProblemInstance, args):
    """Build the configured method and return (callable, echo_extras)."""
    penalty = PenaltyConfig(beta=args.beta, nu=args.nu)
    clock = (lambda: 0.0) if args.fixed_clock else None
    common = dict(budget_dp_g=args.max_dp_g, max_iters=args.max_iters,
                  svio_stop=args.svio_stop, svio_every=args.svio_every,
                  record_every=args.record_every, seed=args.seed, clock=clock)
    extras = {"method": args.method, "dataset": args.dataset,
              "split_seed": args.split_seed, "fixed_clock": bool(args.fixed_clock)}

    if args.theoretical:
        if args.epsilon is None:
            raise ValueError("--theoretical needs --epsilon")
        if p.cq is None:
            raise ValueError("no constraint-qualification constants on this problem")
        sched = theorem_schedule(p, p.cq, args.epsilon,
                                 beta=args.beta if args.beta != 10.0 else None,
                                 nu=args.nu if args.nu != 1e-5 else None)
        penalty = PenaltyConfig(beta=sched.beta, nu=sched.nu)
        args.s1, args.s2, args.q = sched.S1, sched.S2, sched.q
        args.alpha = sched.alpha
        if args.max_iters is None and args.max_dp_g is None:
            common["max_iters"] = sched.K * sched.q
        extras["theoretical"] = {
            "epsilon": sched.epsilon, "epsilon_bar": sched.epsilon_bar,
            "K": sched.K, "alpha": sched.alpha,
        }

    if args.method in ("3s-econ-d", "3s-econ-s"):
        if args.method == "3s-econ-d":
            cfg = SolverConfig.deterministic(
                p, penalty=penalty, alpha=args.alpha or 1e-2, **common)
        else:
            if p.finite_sum:
                cfg = SolverConfig.stochastic(
                    p, penalty=penalty, alpha=args.alpha or 1e-2, **common)
            else:
                s1, s2, q = _default_stream_schedule(p)
                cfg = SolverConfig(penalty=penalty, s1=args.s1 or s1,
                                   s2=args.s2 or s2, q=args.q or q,
                                   step_rule="decaying", alpha=args.alpha or 1e-2,
                                   batch_f=1, batch_g=1, **common)
        if args.s1:
            cfg.s1 = args.s1
        if args.s2:
            cfg.s2 = args.s2
        if args.q:
            cfg.q = args.q
        return (lambda: run_3s_econ(p, cfg)), extras

    stochastic = args.method == "ssg-s"
    n = p.constraint_population
    check = None if not stochastic else (math.ceil(math.sqrt(n)) if n else 8)
    cfg = SsgConfig(
        feas_tol=args.feas_tol or 1e-3,
        alpha=args.alpha or 1e-3,
        check_batch=check,
        batch_f=1 if stochastic else None,
        batch_g=1 if stochastic else None,
        **common,
    )
    return (lambda: run_ssg(p, cfg)), extras


def _out_dir(args) -> Path:
    base = args.out or os.environ.get("ECON3S_OUT") or "runs"
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _execute(args) -> int:
    if not args.problem or not args.method:
        raise ValueError("--problem and --method are required")
    p = build_problem(args)
    if args.max_dp_g is None and args.max_iters is None:
        args.max_iters = 10_000
    runner, extras = make_run(p, args)
    trace = runner()
    trace.config_echo.update(extras)
    out = _out_dir(args)
    emit_trace(trace, out / "trace.csv", "csv")
    emit_trace(trace, out / "summary.json", "json")
    final = trace.final
    print(f"{args.problem}/{args.method}: stop={trace.stop_reason} k={final.k} "
          f"fv={final.fv:.6g} cvio={final.cvio:.6g} "
          f"svio={'n/a' if final.svio is None else format(final.svio, '.6g')} "
          f"dp_g={float(final.dp_g):.6g} -> {out}")
    return 0


def cmd_run(args) -> int:
    return _execute(_merge_config(args))


def cmd_sweep(args) -> int:
    args = _merge_config(args)
    betas = [float(v) for v in args.beta_grid.split(",") if v.strip()] if args.beta_grid else [args.beta]
    nus = [float(v) for v in args.nu_grid.split(",") if v.strip()] if args.nu_grid else [args.nu]
    if not betas or not nus:
        raise ValueError("empty sweep grid")
    base = _out_dir(args)
    rows = []
    for beta in sorted(betas):
        for nu in sorted(nus):
            sub = argparse.Namespace(**vars(args))
            sub.beta, sub.nu = beta, nu
            sub.out = str(base / f"beta={beta:g}_nu={nu:g}")
            code = _execute(sub)
            if code != 0:
                return code
            with open(Path(sub.out) / "summary.json") as fh:
                summary = json.load(fh)
            fin = summary.get("final", {})
            rows.append((beta, nu, summary.get("stop_reason", ""),
                         fin.get("k", ""), fin.get("fv", ""), fin.get("cvio", ""),
                         fin.get("svio", ""), fin.get("dp_g", "")))
    with open(base / "sweep_summary.csv", "w") as fh:
        fh.write("beta,nu,stop_reason,k,fv,cvio,svio,dp_g\n")
        for row in rows:
            fh.write(",".join("" if v is None else str(v) for v in row) + "\n")
    print(f"sweep: {len(rows)} runs -> {base / 'sweep_summary.csv'}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="econ3s", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="single experiment run")
    _add_run_flags(run_p)
    run_p.set_defaults(fn=cmd_run)
    sweep_p = sub.add_parser("sweep", help="grid of runs over beta and/or nu")
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--beta-grid", dest="beta_grid", default=BETA_GRID_DEFAULT,
                         help="comma-separated beta values")
    sweep_p.add_argument("--nu-grid", dest="nu_grid", default="",
                         help="comma-separated nu values (empty: fixed nu)")
    sweep_p.set_defaults(fn=cmd_sweep)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
