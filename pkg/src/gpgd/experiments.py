"""Experiment harness: configs, training orchestration, inverse-problem
sweeps, theorem-verification suites, and CSV reporting.

Everything is seeded and deterministic: running the same config twice
produces byte-identical result CSVs. Wall-clock timings are written to a
separate timing file so they never break that contract.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .datasets import Dataset, load_dataset_csv, load_idx, synth_dataset
from .models import (
    ExactProjector,
    KSparse,
    PerturbedProjector,
    project,
    random_lines,
    sample_member,
)
from .nets import (
    NetProjector,
    TrainConfig,
    autoencoder_dims,
    history_to_csv,
    load_checkpoint,
    make_net,
    save_checkpoint,
    train,
)
from .operators import (
    DenseOperator,
    gaussian_blur_kernel,
    make_deblur_operator,
    make_inpainting_operator,
    make_superres_operator,
)
from .signals import NoiseSpec, add_noise
from .solver import (
    GpgdConfig,
    best_iterate,
    convergence_iteration,
    default_step_size,
    gpgd_run,
    trace_to_csv,
)
from . import theory

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_to_text",
    "config_from_text",
    "config_hash",
    "profile_config",
    "load_config_dataset",
    "RunRow",
    "ExperimentResult",
    "run_experiment",
    "VerifyConfig",
    "VerificationEntry",
    "VerificationReport",
    "verify_theorems",
    "aggregate_report",
]

_GOLDEN_BETA = math.sqrt((3.0 + math.sqrt(5.0)) / 2.0)  # sparse projection bound


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; serializes to key = value text with
    JSON values for lists and the nested solver block."""

    problem: str = "inpainting"  # inpainting | superres | deblur | sparse
    ratio: float = 0.6
    factor: int = 2
    kernel_size: int = 3
    sigma_k: float = 1.0
    sparse_k: int = 2
    sparse_m: int = 16
    sigma: float = 0.02
    lambdas: tuple[float, ...] = (0.0, 0.4)
    seeds: tuple[int, ...] = (0,)
    dataset_name: str = "bars"
    dataset_n: int = 64
    dataset_count: int = 140
    dataset_seed: int = 7
    test_count: int = 20
    net_dims: tuple[int, ...] = ()
    train_epochs: int = 150
    train_batch: int = 64
    train_tau: float = 2e-3
    train_mode: str = "AE"
    train_xi: float = 0.1
    train_seed: int = 0
    conv_threshold: float = 0.01
    gpgd_gamma: float | None = None
    gpgd_max_iters: int = 150
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.problem not in ("inpainting", "superres", "deblur", "sparse"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if not 0.0 <= self.ratio < 1.0:
            raise ConfigError(f"ratio must be in [0, 1), got {self.ratio}")
        if self.factor < 1:
            raise ConfigError(f"factor must be >= 1, got {self.factor}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")


_JSON_FIELDS = {"lambdas", "seeds", "net_dims"}
_TUPLE_FIELDS = {"lambdas": float, "seeds": int, "net_dims": int}


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical flat key = value rendering (declaration order)."""
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if f.name == "gpgd_gamma":
            rendered = json.dumps(val)
        elif f.name in _JSON_FIELDS:
            rendered = json.dumps(list(val))
        elif isinstance(val, float):
            rendered = repr(val)
        else:
            rendered = str(val)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "gpgd":
            values.update(_parse_gpgd_block(raw, lineno))
            continue
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _parse_gpgd_block(raw: str, lineno: int) -> dict:
    """Alternative nested spelling: gpgd = {"gamma": null, "max_iters": 150}."""
    try:
        block = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {lineno}: bad gpgd JSON block: {exc.msg}") from None
    if not isinstance(block, dict):
        raise ConfigError(f"line {lineno}: gpgd block must be a JSON object")
    out = {}
    for key, val in block.items():
        if key == "gamma":
            out["gpgd_gamma"] = None if val is None else float(val)
        elif key == "max_iters":
            out["gpgd_max_iters"] = int(val)
        else:
            raise ConfigError(f"line {lineno}: unknown gpgd key {key!r}")
    return out


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key == "gpgd_gamma":
            val = json.loads(raw)
            return None if val is None else float(val)
        if key in _TUPLE_FIELDS:
            items = json.loads(raw)
            return tuple(_TUPLE_FIELDS[key](v) for v in items)
        proto = getattr(ExperimentConfig, key)
        if isinstance(proto, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        return raw
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the experimental content; the output location is excluded so
    reruns into different directories produce identical result rows."""
    text = "\n".join(
        line
        for line in config_to_text(cfg).splitlines()
        if not line.startswith("out_dir ")
    )
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def profile_config(profile: str) -> ExperimentConfig:
    """Built-in presets. desk: 8x8 synthetic images, minutes end to end.
    mnist: 28x28 IDX images (dataset path must be supplied)."""
    if profile == "desk":
        return ExperimentConfig()
    if profile == "mnist":
        return ExperimentConfig(
            dataset_name="idx:mnist-images.idx",
            dataset_n=784,
            dataset_count=2000,
            net_dims=(784, 392, 200, 392, 784),
            train_epochs=60,
            lambdas=(0.0, 0.4),
        )
    raise ConfigError(f"unknown profile {profile!r} (expected desk or mnist)")


def load_config_dataset(cfg: ExperimentConfig) -> Dataset:
    name = cfg.dataset_name
    if name.startswith("idx:"):
        return load_idx(name[4:])
    if name.startswith("csv:"):
        return load_dataset_csv(name[4:])
    params = {}
    if name == "sparse-combos":
        params["k"] = cfg.sparse_k
    return synth_dataset(name, cfg.dataset_n, cfg.dataset_count, cfg.dataset_seed,
                         **params)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _build_operator(cfg: ExperimentConfig, ds: Dataset, seed: int):
    n = ds.n
    if cfg.problem == "inpainting":
        return make_inpainting_operator(n, cfg.ratio, _derive_seed(seed, 1))
    if cfg.problem == "superres":
        if ds.shape2d is None:
            raise ConfigError("superres needs an image-shaped dataset")
        kernel = gaussian_blur_kernel(cfg.kernel_size, cfg.sigma_k)
        return make_superres_operator(ds.shape2d, cfg.factor, kernel)
    if cfg.problem == "deblur":
        if ds.shape2d is None:
            raise ConfigError("deblur needs an image-shaped dataset")
        kernel = gaussian_blur_kernel(cfg.kernel_size, cfg.sigma_k)
        return make_deblur_operator(ds.shape2d, kernel)
    if cfg.problem == "sparse":
        rng = np.random.default_rng(_derive_seed(seed, 1))
        return DenseOperator(rng.standard_normal((cfg.sparse_m, n)))
    raise ConfigError(f"unknown problem {cfg.problem!r}")


def _ensure_prior(cfg: ExperimentConfig, lam: float, train_items, out: Path):
    """Load the checkpoint for this regularization weight, training it
    inline when absent."""
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    path = ckpt_dir / f"prior_lam{lam:g}.ckpt"
    if path.exists():
        return load_checkpoint(path)
    if cfg.train_epochs < 1:
        raise ConfigError(f"missing checkpoint {path} and train_epochs < 1")
    dims = cfg.net_dims if cfg.net_dims else autoencoder_dims(train_items.shape[1])
    net = make_net(dims, seed=cfg.train_seed)
    tcfg = TrainConfig(
        lam=lam,
        tau=cfg.train_tau,
        batch_size=cfg.train_batch,
        epochs=cfg.train_epochs,
        mode=cfg.train_mode,
        xi=cfg.train_xi,
        seed=cfg.train_seed,
    )
    net, history = train(net, train_items, tcfg)
    save_checkpoint(net, path)
    history_to_csv(history, ckpt_dir / f"history_lam{lam:g}.csv")
    return net


@dataclass
class RunRow:
    lam: float
    seed: int
    item: int
    psnr_best: float
    best_index: int
    conv_iter: int | None
    cfg_hash: str

    @staticmethod
    def csv_header() -> str:
        return "lambda,seed,item,psnr_best,best_index,conv_iter,config_hash"

    def to_csv(self) -> str:
        conv = "never" if self.conv_iter is None else str(self.conv_iter)
        return (
            f"{repr(self.lam)},{self.seed},{self.item},{repr(self.psnr_best)},"
            f"{self.best_index},{conv},{self.cfg_hash}"
        )


@dataclass
class ExperimentResult:
    rows: list[RunRow]
    summary: list[dict]
    cfg_hash: str


def run_experiment(cfg: ExperimentConfig, write_traces: bool = True) -> ExperimentResult:
    """Full sweep: for each (lambda, seed, test item), build the operator,
    form noisy measurements, run the solver with that lambda's prior, and
    record best-iterate PSNR plus the convergence iteration.

    For problem "sparse" the prior is the exact hard-thresholding
    projection for every lambda (learned priors do not apply there).
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_config_dataset(cfg)
    if len(ds) <= cfg.test_count:
        raise ConfigError(
            f"dataset has {len(ds)} items, need more than test_count={cfg.test_count}"
        )
    test_items = ds.items[: cfg.test_count]
    train_items = ds.items[cfg.test_count :]
    chash = config_hash(cfg)

    projectors = {}
    for lam in cfg.lambdas:
        if cfg.problem == "sparse":
            projectors[lam] = ExactProjector(KSparse(cfg.sparse_k, ds.n))
        else:
            projectors[lam] = NetProjector(_ensure_prior(cfg, lam, train_items, out))

    rows: list[RunRow] = []
    timings = {}
    traces_dir = out / "traces"
    if write_traces:
        traces_dir.mkdir(exist_ok=True)
    for seed in cfg.seeds:
        A = _build_operator(cfg, ds, seed)
        gamma = cfg.gpgd_gamma if cfg.gpgd_gamma is not None else default_step_size(A)
        for item_idx in range(cfg.test_count):
            x_true = test_items[item_idx]
            y_clean = A.apply(x_true)
            y = add_noise(y_clean, NoiseSpec(cfg.sigma, _derive_seed(seed, 2, item_idx)))
            for lam in cfg.lambdas:
                started = time.perf_counter()
                run_cfg = GpgdConfig(
                    gamma=gamma,
                    max_iters=cfg.gpgd_max_iters,
                    record_full_iterates=True,
                )
                _, trace = gpgd_run(A, y, projectors[lam], run_cfg, ground_truth=x_true)
                idx, x_star = best_iterate(trace)
                conv = convergence_iteration(trace, x_star, cfg.conv_threshold)
                rows.append(
                    RunRow(
                        lam=lam,
                        seed=seed,
                        item=item_idx,
                        psnr_best=float(trace.psnr_db[idx]),
                        best_index=idx,
                        conv_iter=conv,
                        cfg_hash=chash,
                    )
                )
                timings[f"lam{lam:g}_seed{seed}_item{item_idx}"] = (
                    time.perf_counter() - started
                )
                if write_traces:
                    trace_to_csv(
                        trace,
                        traces_dir / f"trace_lam{lam:g}_seed{seed}_item{item_idx}.csv",
                    )

    summary = _summarize(rows, cfg)
    _write_rows(rows, out / "results.csv")
    _write_summary(summary, out / "summary.csv")
    with open(out / "timing.json", "w", encoding="ascii") as fh:
        json.dump(timings, fh, indent=1, sort_keys=True)
    return ExperimentResult(rows=rows, summary=summary, cfg_hash=chash)


def _summarize(rows: list[RunRow], cfg: ExperimentConfig) -> list[dict]:
    summary = []
    for lam in cfg.lambdas:
        cells = [r for r in rows if r.lam == lam]
        psnrs = np.asarray([r.psnr_best for r in cells])
        convs = np.asarray(
            [math.inf if r.conv_iter is None else r.conv_iter for r in cells],
            dtype=np.float64,
        )
        median_conv = float(np.median(convs)) if convs.size else math.nan
        summary.append(
            {
                "lambda": lam,
                "cells": len(cells),
                "mean_psnr": float(psnrs.mean()) if psnrs.size else math.nan,
                "std_psnr": float(psnrs.std(ddof=0)) if psnrs.size else math.nan,
                "median_conv": median_conv,
                "never_count": int(np.sum(np.isinf(convs))),
            }
        )
    return summary


def _write_rows(rows: list[RunRow], path: Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(RunRow.csv_header() + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


_SUMMARY_COLS = ("lambda", "cells", "mean_psnr", "std_psnr", "median_conv",
                 "never_count")


def _write_summary(summary: list[dict], path: Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(_SUMMARY_COLS) + "\n")
        for rec in summary:
            cells = []
            for col in _SUMMARY_COLS:
                val = rec[col]
                cells.append(repr(val) if isinstance(val, float) else str(val))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Theorem verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyConfig:
    nseeds: int = 20
    nsamples: int = 10_000
    seed: int = 0
    n: int = 32
    m: int = 16
    k: int = 2
    sigma: float = 0.02
    iters: int = 150
    lines: int = 5
    lines_dim: int = 8
    t_grid: tuple[float, ...] = (0.05, 0.1, 0.2)


@dataclass
class VerificationEntry:
    name: str
    passed: bool
    details: str


@dataclass
class VerificationReport:
    entries: list[VerificationEntry]

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("name,passed,details\n")
            for e in self.entries:
                detail = e.details.replace(",", ";")
                fh.write(f"{e.name},{int(e.passed)},{detail}\n")


def _gaussian_instance(vcfg: VerifyConfig, seed: int):
    rng = np.random.default_rng(_derive_seed(vcfg.seed, 10, seed))
    A = DenseOperator(rng.standard_normal((vcfg.m, vcfg.n)))
    return A, rng


def _conditioned_instance(vcfg: VerifyConfig, seed: int):
    """Square instance with spectrum in [0.85, 1.15]: its restricted
    isometry constant is small enough that delta * beta < 1 holds, which a
    flat Gaussian rectangle at these sizes never achieves."""
    rng = np.random.default_rng(_derive_seed(vcfg.seed, 11, seed))
    q, _ = np.linalg.qr(rng.standard_normal((vcfg.n, vcfg.n)))
    spectrum = rng.uniform(0.85, 1.15, vcfg.n)
    A = DenseOperator(q @ np.diag(spectrum) @ q.T)
    return A, rng


def _domination_entry(name: str, vcfg: VerifyConfig, make_instance,
                      sigma: float) -> VerificationEntry:
    """Check the linear-recovery bound sequence against measured errors."""
    qualifying = 0
    excluded = 0
    violations = []
    worst_margin = math.inf
    for seed in range(vcfg.nseeds):
        A, rng = make_instance(vcfg, seed)
        gamma = default_step_size(A)
        delta = theory.ric_exact_ksparse(A, gamma, vcfg.k).value
        beta = _GOLDEN_BETA
        if delta * beta >= 1.0:
            excluded += 1
            continue
        qualifying += 1
        x_true = np.zeros(vcfg.n)
        support = rng.choice(vcfg.n, size=vcfg.k, replace=False)
        x_true[support] = rng.standard_normal(vcfg.k)
        y = A.apply(x_true)
        if sigma > 0:
            e = sigma * rng.standard_normal(y.size)
            y = y + e
            atn = float(np.linalg.norm(A.adjoint(e)))
        else:
            atn = 0.0
        run_cfg = GpgdConfig(gamma=gamma, max_iters=vcfg.iters)
        proj = ExactProjector(KSparse(vcfg.k, vcfg.n))
        _, trace = gpgd_run(A, y, proj, run_cfg, ground_truth=x_true)
        init_err = float(trace.err[0])
        bound = theory.theorem1_bound(delta, beta, gamma, init_err, atn, vcfg.iters)
        margin = float(np.min(bound.bounds + 1e-9 - trace.err))
        worst_margin = min(worst_margin, margin)
        if np.any(trace.err > bound.bounds + 1e-9):
            bad = int(np.argmax(trace.err - bound.bounds))
            violations.append(f"seed {seed} iter {bad}")
    passed = not violations
    details = (
        f"qualifying={qualifying} excluded={excluded} "
        f"worst_margin={worst_margin if qualifying else 'n/a'}"
    )
    if violations:
        details += " violations=" + ";".join(violations)
    return VerificationEntry(name, passed, details)


def _stability_entry(name: str, vcfg: VerifyConfig, make_instance) -> VerificationEntry:
    """Final noisy error against the geometric-plus-noise-limit bound."""
    qualifying = 0
    excluded = 0
    violations = []
    for seed in range(vcfg.nseeds):
        A, rng = make_instance(vcfg, seed)
        gamma = default_step_size(A)
        delta = theory.ric_exact_ksparse(A, gamma, vcfg.k).value
        beta = _GOLDEN_BETA
        rate = delta * beta
        if rate >= 1.0:
            excluded += 1
            continue
        qualifying += 1
        x_true = np.zeros(vcfg.n)
        support = rng.choice(vcfg.n, size=vcfg.k, replace=False)
        x_true[support] = rng.standard_normal(vcfg.k)
        e = vcfg.sigma * rng.standard_normal(A.m)
        y = A.apply(x_true) + e
        atn = float(np.linalg.norm(A.adjoint(e)))
        run_cfg = GpgdConfig(gamma=gamma, max_iters=vcfg.iters)
        proj = ExactProjector(KSparse(vcfg.k, vcfg.n))
        _, trace = gpgd_run(A, y, proj, run_cfg, ground_truth=x_true)
        cap = rate**vcfg.iters * trace.err[0] + gamma / (1.0 - rate) * atn + 1e-9
        if trace.err[-1] > cap:
            violations.append(f"seed {seed}: {trace.err[-1]} > {cap}")
    passed = not violations
    details = f"qualifying={qualifying} excluded={excluded}"
    if violations:
        details += " violations=" + ";".join(violations)
    return VerificationEntry(name, passed, details)


def _triangle_entry(vcfg: VerifyConfig) -> VerificationEntry:
    """Per-sample instrumentation of the additive-deviation argument:
    ||P(z) - x|| <= ||P(z) - Pperp(z)|| + ||Pperp(z) - x|| exactly."""
    lines = random_lines(vcfg.lines, vcfg.lines_dim, _derive_seed(vcfg.seed, 12))
    proj = PerturbedProjector(lines, t=0.1, u=0.0, seed=_derive_seed(vcfg.seed, 13))
    rng = np.random.default_rng(_derive_seed(vcfg.seed, 14))
    sampler = theory.radial_sampler()
    worst = -math.inf
    for _ in range(vcfg.nsamples):
        z = sampler(rng, vcfg.lines_dim)
        x = sample_member(lines, rng)
        p = proj(z)
        pperp = project(lines, z)
        lhs = np.linalg.norm(p - x)
        rhs = np.linalg.norm(p - pperp) + np.linalg.norm(pperp - x)
        worst = max(worst, float(lhs - rhs))
        if lhs > rhs + 1e-12 * (1.0 + rhs):
            return VerificationEntry(
                "theorem2-triangle-chain",
                False,
                f"violated: lhs={lhs} rhs={rhs} z={z.tolist()}",
            )
    return VerificationEntry(
        "theorem2-triangle-chain", True, f"samples={vcfg.nsamples} worst_gap={worst}"
    )


def _lprime_entries(vcfg: VerifyConfig) -> list[VerificationEntry]:
    """Sampled deviation ratio against the orthogonality-based bound with
    10%-inflated sampled sups, for each tangential magnitude."""
    lines = random_lines(vcfg.lines, vcfg.lines_dim, _derive_seed(vcfg.seed, 12))
    entries = []
    for t in vcfg.t_grid:
        proj = PerturbedProjector(lines, t=t, u=0.0, seed=_derive_seed(vcfg.seed, 15))
        report = theory.orthogonality_report(
            lines, proj, vcfg.nsamples, _derive_seed(vcfg.seed, 16)
        )
        bound = theory.theorem3_bound(
            min(1.1 * report.max_psi, 0.999999), 1.1 * report.max_phi
        )
        name = f"theorem3-lprime-bound-t{t:g}"
        if bound is None:
            entries.append(
                VerificationEntry(name, False, "inflated sups violate hypothesis")
            )
        else:
            ok = report.lprime_hat <= bound
            entries.append(
                VerificationEntry(
                    name,
                    ok,
                    f"lprime_hat={report.lprime_hat} bound={bound} "
                    f"max_psi={report.max_psi} max_phi={report.max_phi}",
                )
            )
    return entries


def _exact_projector_entry(vcfg: VerifyConfig) -> VerificationEntry:
    lines = random_lines(vcfg.lines, vcfg.lines_dim, _derive_seed(vcfg.seed, 12))
    report = theory.orthogonality_report(
        lines, ExactProjector(lines), vcfg.nsamples, _derive_seed(vcfg.seed, 17)
    )
    ok = (
        report.mean_psi <= 1e-9
        and report.max_phi <= 1e-9
        and report.lprime_hat <= 1e-9
    )
    return VerificationEntry(
        "orthogonality-exact-projector",
        ok,
        f"mean_psi={report.mean_psi} max_phi={report.max_phi} "
        f"lprime_hat={report.lprime_hat}",
    )


def verify_theorems(vcfg: VerifyConfig | None = None,
                    out_dir: str | None = None) -> VerificationReport:
    """Run the theorem-verification suites; failures are report entries,
    never exceptions."""
    vcfg = vcfg or VerifyConfig()
    entries = [
        _domination_entry(
            "theorem1-domination-gaussian", vcfg, _gaussian_instance, sigma=0.0
        ),
        _domination_entry(
            "theorem1-domination-conditioned", vcfg, _conditioned_instance, sigma=0.0
        ),
        _stability_entry(
            "theorem1-noisy-stability-conditioned", vcfg, _conditioned_instance
        ),
        _triangle_entry(vcfg),
        *_lprime_entries(vcfg),
        _exact_projector_entry(vcfg),
    ]
    report = VerificationReport(entries)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "theorem_report.csv")
    return report


# ---------------------------------------------------------------------------
# Result aggregation
# ---------------------------------------------------------------------------


def aggregate_report(results_dir) -> tuple[str, list[dict]]:
    """Merge results.csv files under a directory into a per-lambda summary.

    Raises ConfigError when input files disagree on their schema.
    """
    paths = sorted(Path(results_dir).rglob("results.csv"))
    if not paths:
        raise ConfigError(f"no results.csv files under {results_dir}")
    header = None
    rows = []
    for path in paths:
        lines = path.read_text(encoding="ascii").splitlines()
        if not lines:
            raise ConfigError(f"{path}: empty results file")
        if header is None:
            header = lines[0]
        elif lines[0] != header:
            raise ConfigError(
                f"schema mismatch: {paths[0]} has columns [{header}], "
                f"{path} has columns [{lines[0]}]"
            )
        for line in lines[1:]:
            if line.strip():
                rows.append(line.split(","))
    cols = header.split(",")
    i_lam = cols.index("lambda")
    i_psnr = cols.index("psnr_best")
    i_conv = cols.index("conv_iter")
    by_lam: dict[float, list] = {}
    for row in rows:
        by_lam.setdefault(float(row[i_lam]), []).append(row)
    summary = []
    for lam in sorted(by_lam):
        group = by_lam[lam]
        psnrs = np.asarray([float(r[i_psnr]) for r in group])
        convs = np.asarray(
            [math.inf if r[i_conv] == "never" else float(r[i_conv]) for r in group]
        )
        summary.append(
            {
                "lambda": lam,
                "cells": len(group),
                "mean_psnr": float(psnrs.mean()),
                "std_psnr": float(psnrs.std(ddof=0)),
                "median_conv": float(np.median(convs)),
                "never_count": int(np.sum(np.isinf(convs))),
            }
        )
    lines = ["lambda   cells  mean_psnr  std_psnr  median_conv  never"]
    for rec in summary:
        conv_str = (
            "never" if math.isinf(rec["median_conv"]) else f"{rec['median_conv']:.1f}"
        )
        lines.append(
            f"{rec['lambda']:<8g} {rec['cells']:<6d} {rec['mean_psnr']:<10.3f} "
            f"{rec['std_psnr']:<9.3f} {conv_str:<12} {rec['never_count']}"
        )
    return "\n".join(lines), summary
