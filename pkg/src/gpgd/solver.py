"""Generalized projected gradient descent with per-iteration tracing.

The update is x_{k+1} = P(x_k) - gamma * A^T (A P(x_k) - y). Runs execute
the full iteration budget by default (no early stopping) and record the
initial point as iterate 0, matching the convention that a convergence
iteration of 0 means the initial guess was already good enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import LinearOperator
from .signals import as_vector, psnr

__all__ = [
    "GpgdConfig",
    "GpgdTrace",
    "SolverDivergence",
    "gpgd_run",
    "convergence_iteration",
    "best_iterate",
    "default_step_size",
    "trace_to_csv",
]


class SolverDivergence(RuntimeError):
    """Iterate became non-finite."""

    def __init__(self, iteration: int, norm: float):
        super().__init__(
            f"non-finite iterate at iteration {iteration} (norm {norm!r})"
        )
        self.iteration = iteration
        self.norm = norm


@dataclass
class GpgdConfig:
    """Solver settings. gamma=None selects 1/||A||_2^2 at run time; x0=None
    starts from A^T y. Early stopping (relative residual stagnation) is off
    by default: the standard protocol runs all iterations and picks the
    best iterate afterwards."""

    gamma: float | None = None
    max_iters: int = 150
    x0: np.ndarray | None = None
    record_full_iterates: bool = False
    early_stop_rel_change: float | None = None

    def __post_init__(self):
        if self.gamma is not None and self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class GpgdTrace:
    """Per-iterate records; index 0 is the initial point.

    err/rel_err/psnr_db are populated only when ground truth is supplied.
    proj_err[i] = ||P(x_i) - ground_truth|| for the projection used to form
    x_{i+1} (length = iterations executed). iterates is populated only when
    requested in the config.
    """

    gamma: float
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    err: np.ndarray | None = None
    rel_err: np.ndarray | None = None
    psnr_db: np.ndarray | None = None
    proj_err: np.ndarray | None = None
    iterates: list[np.ndarray] | None = None
    best_index: int | None = None

    def __len__(self) -> int:
        return self.residual.size


def default_step_size(A: LinearOperator, tol: float = 1e-8,
                      max_iters: int = 10_000) -> float:
    """1 / ||A||_2^2 via power iteration on A^T A (fixed internal seed)."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.n)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    lam = 0.0
    for _ in range(max_iters):
        w = A.adjoint(A.apply(v))
        lam = float(np.dot(v, w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ValueError("default_step_size: zero operator")
        v = w / norm
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            break
        lam_prev = lam
    if lam <= 0.0:
        raise ValueError("default_step_size: could not estimate spectral norm")
    return 1.0 / lam


def gpgd_run(A: LinearOperator, y, P, cfg: GpgdConfig,
             ground_truth=None) -> tuple[np.ndarray, GpgdTrace]:
    """Run the projected gradient iteration and record its trace.

    P is any callable R^n -> R^n (exact projection, perturbed projection,
    or a trained network). Deterministic whenever P is.
    """
    yv = as_vector(y)
    gamma = cfg.gamma if cfg.gamma is not None else default_step_size(A)
    x = as_vector(cfg.x0).copy() if cfg.x0 is not None else A.adjoint(yv)
    truth = None if ground_truth is None else as_vector(ground_truth)

    residuals = [float(np.linalg.norm(A.apply(x) - yv))]
    errs: list[float] = []
    psnrs: list[float] = []
    proj_errs: list[float] = []
    iterates: list[np.ndarray] | None = [x.copy()] if cfg.record_full_iterates else None
    if truth is not None:
        errs.append(float(np.linalg.norm(x - truth)))
        psnrs.append(psnr(x, truth))

    for i in range(1, cfg.max_iters + 1):
        p = as_vector(P(x))
        if truth is not None:
            proj_errs.append(float(np.linalg.norm(p - truth)))
        x = p - gamma * A.adjoint(A.apply(p) - yv)
        if not np.all(np.isfinite(x)):
            raise SolverDivergence(i, float(np.linalg.norm(x[np.isfinite(x)])))
        res = float(np.linalg.norm(A.apply(x) - yv))
        residuals.append(res)
        if truth is not None:
            errs.append(float(np.linalg.norm(x - truth)))
            psnrs.append(psnr(x, truth))
        if iterates is not None:
            iterates.append(x.copy())
        if cfg.early_stop_rel_change is not None and i >= 2:
            prev = residuals[-2]
            if abs(res - prev) <= cfg.early_stop_rel_change * max(prev, 1e-300):
                break

    truth_norm = None if truth is None else float(np.linalg.norm(truth))
    trace = GpgdTrace(
        gamma=gamma,
        residual=np.asarray(residuals),
        err=np.asarray(errs) if truth is not None else None,
        rel_err=(
            np.asarray(errs) / truth_norm
            if truth is not None and truth_norm > 0
            else None
        ),
        psnr_db=np.asarray(psnrs) if truth is not None else None,
        proj_err=np.asarray(proj_errs) if truth is not None else None,
        iterates=iterates,
        best_index=int(np.argmax(psnrs)) if psnrs else None,
    )
    return x, trace


def convergence_iteration(trace: GpgdTrace, x_star, threshold: float) -> int | None:
    """First iterate i with ||x_i - x_star|| / ||x_star|| <= threshold.

    Returns None when no iterate qualifies. Requires full iterates in the
    trace (the reference point is usually the best iterate of the same
    run, unknown until the run finishes).
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    ref = as_vector(x_star)
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm == 0.0:
        raise ValueError("convergence_iteration: ||x_star|| = 0")
    if trace.iterates is None:
        raise ValueError("trace has no full iterates; enable record_full_iterates")
    for i, xi in enumerate(trace.iterates):
        if np.linalg.norm(xi - ref) / ref_norm <= threshold:
            return i
    return None


def best_iterate(trace: GpgdTrace, ground_truth=None) -> tuple[int, np.ndarray]:
    """Iterate with the best PSNR against ground truth (lowest index wins)."""
    if trace.iterates is None or not trace.iterates:
        raise ValueError("best_iterate requires recorded full iterates")
    if trace.psnr_db is not None:
        idx = int(np.argmax(trace.psnr_db))
    else:
        if ground_truth is None:
            raise ValueError("best_iterate requires ground truth")
        truth = as_vector(ground_truth)
        idx = int(np.argmax([psnr(xi, truth) for xi in trace.iterates]))
    return idx, trace.iterates[idx]


def trace_to_csv(trace: GpgdTrace, path) -> None:
    """Columns iter, rel_err, psnr_db, residual (empty cells when absent)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iter,rel_err,psnr_db,residual\n")
        for i in range(len(trace)):
            rel = "" if trace.rel_err is None else repr(float(trace.rel_err[i]))
            ps = "" if trace.psnr_db is None else repr(float(trace.psnr_db[i]))
            fh.write(f"{i},{rel},{ps},{repr(float(trace.residual[i]))}\n")
