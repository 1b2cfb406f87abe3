"""Command-line harness.

Subcommands: gen-data, train, solve, estimate, verify-theorems, report.
Exit codes: 0 success, 1 failed assertions in verify-theorems, 2 usage or
config errors. All artifacts land under the output directory in
checkpoints/, traces/, and reports/.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .datasets import DatasetError, save_dataset_csv, synth_dataset
from .experiments import (
    ConfigError,
    ExperimentConfig,
    VerifyConfig,
    aggregate_report,
    config_from_text,
    config_to_text,
    load_config_dataset,
    profile_config,
    run_experiment,
    verify_theorems,
    _ensure_prior,
)
from .models import (
    ExactProjector,
    KSparse,
    PerturbedProjector,
    hard_threshold,
    random_lines,
)
from .operators import DenseOperator, OperatorError
from .signals import SignalError
from .solver import default_step_size
from . import theory

_SIGMA_NOTE = (
    "Note: sigma always denotes the noise standard deviation "
    "(e ~ N(0, sigma^2 I)); conventions that label the same parameter a "
    "'variance' are read as standard deviations here."
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpgd",
        description="Projected gradient descent for inverse problems with "
        "learned projective priors.",
        epilog=_SIGMA_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p_gen.add_argument("--name", required=True,
                       choices=["bars", "gaussians", "sparse-combos"])
    p_gen.add_argument("--n", type=int, default=64)
    p_gen.add_argument("--count", type=int, default=140)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_data)

    p_train = sub.add_parser("train", help="train projective priors per lambda")
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_solve = sub.add_parser(
        "solve", help="run the inverse-problem sweep from a config"
    )
    _add_config_flags(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_est = sub.add_parser(
        "estimate", help="estimate theory constants on canonical instances"
    )
    p_est.add_argument("--out", default="runs/estimates")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--samples", type=int, default=20_000)
    p_est.set_defaults(func=_cmd_estimate)

    p_verify = sub.add_parser(
        "verify-theorems", help="empirically check the convergence theory"
    )
    p_verify.add_argument("--out", default="runs/verify")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--seeds", type=int, default=20,
                          help="number of random instances per suite")
    p_verify.add_argument("--samples", type=int, default=10_000)
    p_verify.set_defaults(func=_cmd_verify)

    p_report = sub.add_parser("report", help="aggregate result CSVs")
    p_report.add_argument("results_dir")
    p_report.set_defaults(func=_cmd_report)
    return parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--profile", choices=["desk", "mnist"], default="desk")
    p.add_argument("--seed", type=int, help="override: run with this single seed")
    p.add_argument("--lambda", dest="lambdas", type=float, action="append",
                   help="override: regularization weight (repeatable)")
    p.add_argument("--out", help="override: output directory")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = config_from_text(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = profile_config(args.profile)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.lambdas:
        cfg = replace(cfg, lambdas=tuple(args.lambdas))
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _cmd_gen_data(args) -> int:
    ds = synth_dataset(args.name, args.n, args.count, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(ds, out)
    print(f"wrote {len(ds)} items of length {ds.n} to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    ds = load_config_dataset(cfg)
    if len(ds) <= cfg.test_count:
        raise ConfigError(
            f"dataset has {len(ds)} items, need more than test_count={cfg.test_count}"
        )
    train_items = ds.items[cfg.test_count :]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    for lam in cfg.lambdas:
        _ensure_prior(cfg, lam, train_items, out)
        print(f"trained/loaded prior for lambda={lam:g}")
    return 0


def _cmd_solve(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    result = run_experiment(cfg)
    print(f"config hash {result.cfg_hash}; {len(result.rows)} runs")
    for rec in result.summary:
        conv = rec["median_conv"]
        conv_str = "never" if conv != conv or conv == float("inf") else f"{conv:.1f}"
        print(
            f"lambda={rec['lambda']:g}: mean PSNR {rec['mean_psnr']:.3f} dB "
            f"(std {rec['std_psnr']:.3f}), median convergence {conv_str}, "
            f"never {rec['never_count']}/{rec['cells']}"
        )
    return 0


def _cmd_estimate(args) -> int:
    out = Path(args.out) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    lines = []

    rng = np.random.default_rng(args.seed)
    A = DenseOperator(rng.standard_normal((16, 32)))
    gamma = default_step_size(A)
    exact = theory.ric_exact_ksparse(A, gamma, 2)
    sampled = theory.ric_sampled(A, gamma, KSparse(2, 32), args.samples, args.seed)
    lines.append(f"ric_exact,16x32 gaussian k=2,{repr(exact.value)}")
    lines.append(f"ric_sampled,16x32 gaussian k=2,{repr(sampled.value)}")

    for k in (1, 2, 3):
        est = theory.restricted_lipschitz_sampled(
            lambda z, k=k: hard_threshold(z, k),
            KSparse(k, 16),
            args.samples,
            args.seed,
        )
        lines.append(f"beta_hat,hard-threshold n=16 k={k},{repr(est.value)}")

    lines_model = random_lines(5, 8, args.seed)
    est = theory.restricted_lipschitz_sampled(
        ExactProjector(lines_model), lines_model, args.samples, args.seed
    )
    lines.append(f"beta_hat,union-of-lines exact,{repr(est.value)}")
    for t in (0.05, 0.1, 0.2):
        proj = PerturbedProjector(lines_model, t=t, u=0.0, seed=args.seed)
        rep = theory.orthogonality_report(lines_model, proj, args.samples, args.seed)
        lines.append(
            f"orthogonality,perturbed t={t:g},"
            f"max_psi={repr(rep.max_psi)};max_phi={repr(rep.max_phi)};"
            f"lprime_hat={repr(rep.lprime_hat)}"
        )

    path = out / "estimates.csv"
    path.write_text("quantity,instance,value\n" + "\n".join(lines) + "\n",
                    encoding="ascii")
    print("\n".join(lines))
    print(f"wrote {path}")
    return 0


def _cmd_verify(args) -> int:
    vcfg = VerifyConfig(nseeds=args.seeds, nsamples=args.samples, seed=args.seed)
    report = verify_theorems(vcfg, out_dir=str(Path(args.out) / "reports"))
    for entry in report.entries:
        status = "PASS" if entry.passed else "FAIL"
        print(f"[{status}] {entry.name}: {entry.details}")
    return 0 if report.all_passed else 1


def _cmd_report(args) -> int:
    text, _ = aggregate_report(args.results_dir)
    print(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, OperatorError, SignalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
