"""Estimation of the constants driving linear convergence of projected
gradient descent: restricted isometry constants, restricted Lipschitz
constants, and the orthogonality quantities of approximate projections.

Sampled suprema are lower bounds with witnesses, never certified values:
the underlying suprema range over all of R^n and are not computable in
general. Exact values are available only for the sparse model, by support
enumeration.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .models import project, sample_member
from .operators import materialize
from .signals import as_vector

__all__ = [
    "PSI_GUARD",
    "cosine_alpha",
    "psi",
    "phi",
    "RicEstimate",
    "ric_exact_ksparse",
    "ric_sampled",
    "LipschitzEstimate",
    "restricted_lipschitz_sampled",
    "OrthogonalityReport",
    "orthogonality_report",
    "Theorem1Bound",
    "theorem1_bound",
    "theorem2_combine",
    "theorem3_bound",
    "radial_sampler",
]

# Degenerate-quotient guard for psi and membership skipping.
PSI_GUARD = 1e-9


def cosine_alpha(x, y) -> float:
    """Cosine of the angle between x and y, clamped to [-1, 1]."""
    xv = as_vector(x)
    yv = as_vector(y)
    nx = np.linalg.norm(xv)
    ny = np.linalg.norm(yv)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine_alpha: zero-norm input")
    return float(np.clip(np.dot(xv, yv) / (nx * ny), -1.0, 1.0))


def psi(P, z) -> float | None:
    """Orthogonality defect |<P(z), z - P(z)>| / (||P(z)|| ||z - P(z)||).

    Zero for exact orthogonal projections onto subspace unions. Returns
    None (undefined) when either norm falls below the guard; aggregators
    treat that as a zero contribution.
    """
    zv = as_vector(z)
    p = as_vector(P(zv))
    r = zv - p
    np_ = np.linalg.norm(p)
    nr = np.linalg.norm(r)
    if np_ <= PSI_GUARD or nr <= PSI_GUARD:
        return None
    return float(min(abs(np.dot(p, r)) / (np_ * nr), 1.0))


def _sin2(u: np.ndarray, v: np.ndarray) -> float:
    """Squared sine of the angle between u and v (= 1 - cos^2), computed
    from the normalized residual so colinear inputs give ~1e-32 instead
    of the ~1e-16 noise of the naive formula."""
    uh = u / np.linalg.norm(u)
    vh = v / np.linalg.norm(v)
    r = vh - np.dot(uh, vh) * uh
    return float(np.dot(r, r))


# sin^2 below this is treated as exact colinearity (angle < 1e-12 rad);
# the quarter-root in phi would otherwise blow pure rounding noise up to
# observable magnitudes.
_COLINEAR_GUARD = 1e-24


def phi(model, P, z) -> float | None:
    """Angular deviation between P and the exact projection at z.

    sqrt(2 sqrt(1 - a(Pperp(z), P(z))^2) / (1 - a(z, Pperp(z))^2)); None
    when z lies in the model set (vanishing denominator) or a cosine is
    undefined because a projection is zero.
    """
    zv = as_vector(z)
    pperp = project(model, zv)
    dist = np.linalg.norm(zv - pperp)
    if dist <= PSI_GUARD * (1.0 + np.linalg.norm(zv)):
        return None
    p = as_vector(P(zv))
    if np.linalg.norm(pperp) <= PSI_GUARD or np.linalg.norm(p) <= PSI_GUARD:
        return None
    sin2_pp = _sin2(pperp, p)
    if sin2_pp <= _COLINEAR_GUARD:
        sin2_pp = 0.0
    denom = _sin2(zv, pperp)
    if denom <= 1e-12:
        return None
    return float(math.sqrt(2.0 * math.sqrt(sin2_pp) / denom))


def radial_sampler(radius: float = 2.0):
    """Default probe distribution: uniform direction, radius uniform on
    (0, R). Covers directions uniformly and radii broadly."""

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        while norm == 0.0:
            g = rng.standard_normal(n)
            norm = np.linalg.norm(g)
        r = rng.uniform(0.0, radius)
        while r == 0.0:
            r = rng.uniform(0.0, radius)
        return (r / norm) * g

    return sample


@dataclass
class RicEstimate:
    """Restricted isometry constant of I - gamma A^T A on a secant set."""

    value: float
    method: str  # "ExactSparseBruteForce" | "SampledLowerBound"
    samples: int
    seed: int | None = None
    series: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "method": self.method,
                "samples": self.samples,
                "seed": self.seed,
            }
        )

    @staticmethod
    def csv_header() -> str:
        return "value,method,samples,seed"

    def to_csv_row(self) -> str:
        return f"{self.value!r},{self.method},{self.samples},{self.seed}"


def ric_exact_ksparse(A, gamma: float, k: int, max_supports: int = 10**6,
                      chunk: int = 4096) -> RicEstimate:
    """Exact RIC of gamma A^T A over the k-sparse secant set.

    Differences of k-sparse vectors are 2k-sparse, so the constant is the
    max over supports S (|S| = min(2k, n)) of the spectral norm of the full
    column submatrix M[:, S] of M = I - gamma A^T A. The full Euclidean
    norm of M w matters, not just its restriction to S, so the Gram matrix
    (M^2)[S, S] is the object whose top eigenvalue is enumerated.
    """
    mat = materialize(A)
    n = mat.shape[1]
    s = min(2 * k, n)
    count = math.comb(n, s)
    if count > max_supports:
        raise ValueError(
            f"support enumeration too large: C({n},{s})={count} > {max_supports}"
        )
    m_op = np.eye(n) - gamma * (mat.T @ mat)
    gram = m_op @ m_op  # symmetric, so M^T M = M^2
    best = 0.0
    supports = itertools.combinations(range(n), s)
    while True:
        block = list(itertools.islice(supports, chunk))
        if not block:
            break
        idx = np.asarray(block)
        subs = gram[idx[:, :, None], idx[:, None, :]]
        eigs = np.linalg.eigvalsh(subs)
        best = max(best, float(eigs[:, -1].max()))
    return RicEstimate(
        value=math.sqrt(max(best, 0.0)),
        method="ExactSparseBruteForce",
        samples=count,
    )


def ric_sampled(A, gamma: float, model, nsamples: int, seed: int) -> RicEstimate:
    """Monte-Carlo lower bound on the RIC over random secant pairs."""
    mat = materialize(A)
    n = mat.shape[1]
    m_op = np.eye(n) - gamma * (mat.T @ mat)
    rng = np.random.default_rng(seed)
    series = np.zeros(nsamples)
    best = 0.0
    for i in range(nsamples):
        x1 = sample_member(model, rng)
        x2 = sample_member(model, rng)
        diff = x1 - x2
        norm = np.linalg.norm(diff)
        if norm > 1e-12:
            ratio = np.linalg.norm(m_op @ diff) / norm
            best = max(best, float(ratio))
        series[i] = best
    return RicEstimate(
        value=best,
        method="SampledLowerBound",
        samples=nsamples,
        seed=seed,
        series=series,
    )


@dataclass
class LipschitzEstimate:
    """Sampled lower bound on a restricted Lipschitz constant."""

    value: float
    samples: int
    seed: int
    witness: tuple[np.ndarray, np.ndarray] | None
    series: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> str:
        z, x = (None, None) if self.witness is None else self.witness
        return json.dumps(
            {
                "value": self.value,
                "samples": self.samples,
                "seed": self.seed,
                "witness_z": None if z is None else z.tolist(),
                "witness_x": None if x is None else x.tolist(),
            }
        )

    @staticmethod
    def csv_header() -> str:
        return "value,samples,seed"

    def to_csv_row(self) -> str:
        return f"{self.value!r},{self.samples},{self.seed}"


def restricted_lipschitz_sampled(P, model, nsamples: int, seed: int,
                                 z_sampler=None) -> LipschitzEstimate:
    """Max over samples of ||P(z) - x|| / ||z - x|| with x in the model set."""
    rng = np.random.default_rng(seed)
    sampler = z_sampler if z_sampler is not None else radial_sampler()
    n = model.n
    best = 0.0
    witness = None
    series = np.zeros(nsamples)
    for i in range(nsamples):
        z = sampler(rng, n)
        x = sample_member(model, rng)
        dz = np.linalg.norm(z - x)
        if dz > 1e-12:
            ratio = float(np.linalg.norm(as_vector(P(z)) - x) / dz)
            if ratio > best:
                best = ratio
                witness = (z.copy(), x.copy())
        series[i] = best
    return LipschitzEstimate(
        value=best, samples=nsamples, seed=seed, witness=witness, series=series
    )


@dataclass
class OrthogonalityReport:
    """Sampled orthogonality quantities of a projector against a model set.

    lprime_hat is the sampled sup of ||Pperp(z) - P(z)|| / ||Pperp(z) - z||,
    the quantity whose theoretical bound is psi/sqrt(1-psi^2-phi^2)+phi.
    """

    mean_psi: float
    max_psi: float
    max_phi: float
    lprime_hat: float
    samples: int
    seed: int
    degenerate: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean_psi": self.mean_psi,
                "max_psi": self.max_psi,
                "max_phi": self.max_phi,
                "lprime_hat": self.lprime_hat,
                "samples": self.samples,
                "seed": self.seed,
                "degenerate": self.degenerate,
            }
        )

    @staticmethod
    def csv_header() -> str:
        return "mean_psi,max_psi,max_phi,lprime_hat,samples,seed,degenerate"

    def to_csv_row(self) -> str:
        return ",".join(
            [
                repr(self.mean_psi),
                repr(self.max_psi),
                repr(self.max_phi),
                repr(self.lprime_hat),
                str(self.samples),
                str(self.seed),
                str(self.degenerate),
            ]
        )


def orthogonality_report(model, P, nsamples: int, seed: int,
                         z_sampler=None) -> OrthogonalityReport:
    """Aggregate psi, phi and the projection-deviation ratio over samples.

    Samples landing within the guard distance of the model set are skipped
    and counted as degenerate; undefined psi values contribute zero.
    """
    rng = np.random.default_rng(seed)
    sampler = z_sampler if z_sampler is not None else radial_sampler()
    n = model.n
    psi_sum = 0.0
    max_psi = 0.0
    max_phi = 0.0
    lprime = 0.0
    used = 0
    degenerate = 0
    for _ in range(nsamples):
        z = sampler(rng, n)
        pperp = project(model, z)
        dist = np.linalg.norm(z - pperp)
        if dist <= PSI_GUARD * (1.0 + np.linalg.norm(z)):
            degenerate += 1
            continue
        used += 1
        p = as_vector(P(z))
        psi_val = _psi_of(p, z)
        if psi_val is not None:
            psi_sum += psi_val
            max_psi = max(max_psi, psi_val)
        phi_val = _phi_of(pperp, p, z)
        if phi_val is not None:
            max_phi = max(max_phi, phi_val)
        lprime = max(lprime, float(np.linalg.norm(pperp - p) / dist))
    mean_psi = psi_sum / used if used else 0.0
    return OrthogonalityReport(
        mean_psi=mean_psi,
        max_psi=max_psi,
        max_phi=max_phi,
        lprime_hat=lprime,
        samples=nsamples,
        seed=seed,
        degenerate=degenerate,
    )


def _psi_of(p: np.ndarray, z: np.ndarray) -> float | None:
    r = z - p
    np_ = np.linalg.norm(p)
    nr = np.linalg.norm(r)
    if np_ <= PSI_GUARD or nr <= PSI_GUARD:
        return None
    return float(min(abs(np.dot(p, r)) / (np_ * nr), 1.0))


def _phi_of(pperp: np.ndarray, p: np.ndarray, z: np.ndarray) -> float | None:
    if np.linalg.norm(pperp) <= PSI_GUARD or np.linalg.norm(p) <= PSI_GUARD:
        return None
    sin2_pp = _sin2(pperp, p)
    if sin2_pp <= _COLINEAR_GUARD:
        sin2_pp = 0.0
    denom = _sin2(z, pperp)
    if denom <= 1e-12:
        return None
    return float(math.sqrt(2.0 * math.sqrt(sin2_pp) / denom))


@dataclass
class Theorem1Bound:
    """Linear-recovery error bound sequence, or "no guarantee" if rate >= 1.

    bounds[i] = rate^i * init_err + gamma * (sum_{j<i} rate^j) * atn_norm,
    limit = gamma / (1 - rate) * atn_norm. The rate is delta * beta with
    delta already including the step size (RIC of gamma A^T A), so only the
    noise term carries an explicit gamma factor.
    """

    rate: float
    guaranteed: bool
    bounds: np.ndarray | None
    limit: float | None


def theorem1_bound(delta: float, beta: float, gamma: float, init_err: float,
                   atn_norm: float, iters: int) -> Theorem1Bound:
    """Evaluate the stable linear recovery bound for iterations 0..iters."""
    for name, v in (("delta", delta), ("beta", beta), ("gamma", gamma),
                    ("init_err", init_err), ("atn_norm", atn_norm)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    rate = delta * beta
    if rate >= 1.0:
        return Theorem1Bound(rate=rate, guaranteed=False, bounds=None, limit=None)
    powers = rate ** np.arange(iters + 1)
    partial_sums = np.concatenate([[0.0], np.cumsum(powers[:-1])])
    bounds = powers * init_err + gamma * partial_sums * atn_norm
    limit = gamma / (1.0 - rate) * atn_norm
    return Theorem1Bound(rate=rate, guaranteed=True, bounds=bounds, limit=limit)


def theorem2_combine(beta_perp: float, L: float) -> float:
    """Lipschitz constant of a projection deviating from the orthogonal one
    by at most L times the projection distance: beta_perp + L."""
    if beta_perp < 0 or L < 0:
        raise ValueError("beta_perp and L must be >= 0")
    return beta_perp + L


def theorem3_bound(big_psi: float, big_phi: float) -> float | None:
    """Bound on the projection-deviation ratio from the orthogonality sups:
    Psi / sqrt(1 - Psi^2 - Phi^2) + Phi, or None if Psi^2 + Phi^2 >= 1."""
    if big_psi < 0 or big_phi < 0:
        raise ValueError("sups must be >= 0")
    hyp = big_psi**2 + big_phi**2
    if hyp >= 1.0:
        return None
    return big_psi / math.sqrt(1.0 - hyp) + big_phi
