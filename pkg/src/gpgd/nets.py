"""Dense projective-prior networks with hand-written forward/backward.

Networks map R^n to R^n (input and output widths agree) and are trained as
autoencoders or denoisers by Adam on an MSE data term, optionally
regularized by the stochastic orthogonality penalty: the mean over fresh
uniform samples z of |<P(z), z - P(z)>| / (||P(z)|| ||z - P(z)||). The
penalty gradient is differentiated fully through the quotient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .signals import as_vector

__all__ = [
    "Activation",
    "DenseLayer",
    "DenseNet",
    "NetProjector",
    "TrainConfig",
    "AdamState",
    "EpochRecord",
    "SorResult",
    "NonFiniteLoss",
    "TrainingDiverged",
    "CheckpointError",
    "make_net",
    "autoencoder_dims",
    "forward",
    "forward_batch",
    "loss_and_grad",
    "sor_value",
    "adam_state_for",
    "adam_step",
    "train",
    "history_to_csv",
    "stochastic_gradient_unbiasedness_check",
    "UnbiasednessReport",
    "save_checkpoint",
    "load_checkpoint",
]

PROBE_POINTS = 512


class NonFiniteLoss(RuntimeError):
    """Loss evaluation produced a non-finite value."""

    def __init__(self, term: str, data: float, sor: float):
        super().__init__(f"non-finite loss ({term} term): data={data!r} sor={sor!r}")
        self.term = term


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, cause: NonFiniteLoss):
        super().__init__(f"training diverged at epoch {epoch}, step {step}: {cause}")
        self.epoch = epoch
        self.step = step


class CheckpointError(ValueError):
    """Malformed checkpoint file; offset is the byte position of the issue."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Activation:
    kind: str  # "leaky_relu" | "identity"
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("leaky_relu", "identity"):
            raise ValueError(f"unknown activation kind {self.kind!r}")

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return z
        return np.where(z >= 0, z, self.slope * z)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.ones_like(z)
        return np.where(z >= 0, 1.0, self.slope)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("layer shapes inconsistent")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")


class DenseNet:
    """Chain of dense layers with equal input and output width."""

    def __init__(self, layers, latent_index: int | None = None):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("layer dimensions do not chain")
        if layers[-1].weight.shape[0] != layers[0].weight.shape[1]:
            raise ValueError("projector nets need output width == input width")
        if latent_index is not None and not 0 <= latent_index < len(layers):
            raise ValueError(f"latent_index {latent_index} out of range")
        self.layers = layers
        self.latent_index = latent_index

    @property
    def n(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weight.shape[1]] + [
            l.weight.shape[0] for l in self.layers
        ]

    def n_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def copy(self) -> "DenseNet":
        return DenseNet(
            [
                DenseLayer(l.weight.copy(), l.bias.copy(), l.activation)
                for l in self.layers
            ],
            self.latent_index,
        )

    def params_vector(self) -> np.ndarray:
        return np.concatenate(
            [arr.reshape(-1) for l in self.layers for arr in (l.weight, l.bias)]
        )

    def set_params_vector(self, vec: np.ndarray) -> None:
        pos = 0
        for l in self.layers:
            for arr in (l.weight, l.bias):
                arr[...] = vec[pos : pos + arr.size].reshape(arr.shape)
                pos += arr.size
        if pos != vec.size:
            raise ValueError(f"parameter vector length {vec.size}, expected {pos}")


class NetProjector:
    """Use a trained network as the projection inside the solver."""

    def __init__(self, net: DenseNet):
        self.net = net

    def __call__(self, z) -> np.ndarray:
        return forward(self.net, z)


def autoencoder_dims(n: int) -> tuple[int, ...]:
    """Default bottleneck shape n -> n/2 -> n/4 -> n/2 -> n."""
    return (n, max(n // 2, 2), max(n // 4, 1), max(n // 2, 2), n)


def make_net(dims, seed: int, slope: float = 0.01,
             latent_index: int | None = None) -> DenseNet:
    """He-initialized dense net; leaky-ReLU hidden layers, identity output.

    latent_index defaults to the layer producing the narrowest width.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least one layer")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        weight = rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in)
        act = (
            Activation("identity")
            if i == len(dims) - 2
            else Activation("leaky_relu", slope)
        )
        layers.append(DenseLayer(weight, np.zeros(fan_out), act))
    if latent_index is None:
        latent_index = int(np.argmin(dims[1:]))
    return DenseNet(layers, latent_index)


def forward(net: DenseNet, x) -> np.ndarray:
    vec = as_vector(x)
    if vec.size != net.n:
        raise ValueError(f"input length {vec.size}, net expects {net.n}")
    out = forward_batch(net, vec.reshape(1, -1))[0]
    return out[0]


def forward_batch(net: DenseNet, X: np.ndarray):
    """Evaluate a (batch, n) input; returns (output, caches) for backward."""
    a = np.asarray(X, dtype=np.float64)
    pres = []
    acts = [a]
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        a = layer.activation.apply(z)
        pres.append(z)
        acts.append(a)
    return a, (pres, acts)


def _backward_batch(net: DenseNet, caches, d_out: np.ndarray):
    """Reverse-mode pass; gradients are summed over the batch."""
    pres, acts = caches
    grads = [None] * len(net.layers)
    d = d_out
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        dz = d * layer.activation.derivative(pres[l])
        grads[l] = (dz.T @ acts[l], dz.sum(axis=0))
        if l > 0:
            d = dz @ layer.weight
    return grads


def _zeros_grads(net: DenseNet):
    return [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]


def _add_grads(a, b):
    return [(ga + gb, ba + bb) for (ga, ba), (gb, bb) in zip(a, b)]


@dataclass
class TrainConfig:
    """Training recipe: lam is the orthogonality-penalty weight, tau the
    Adam learning rate, xi the input-noise deviation for denoiser (PnP)
    training."""

    lam: float = 0.0
    tau: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    mode: str = "AE"  # "AE" | "PnP"
    xi: float = 0.1
    adam: tuple[float, float, float] = (0.9, 0.999, 1e-8)
    seed: int = 0
    psi_guard: float = 1e-9

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in ("AE", "PnP"):
            raise ValueError(f"mode must be AE or PnP, got {self.mode!r}")
        if self.mode == "PnP" and self.xi <= 0:
            raise ValueError("PnP mode requires xi > 0")


class SorResult(NamedTuple):
    value: float
    degenerate: int


def _psi_batch_and_grad(P: np.ndarray, Z: np.ndarray, guard: float):
    """Per-sample orthogonality defect and its gradient w.r.t. the output.

    psi = |u| / (a b) with u = <p, z-p>, a = ||p||, b = ||z-p||; rows with
    a or b at/below the guard contribute zero value and zero gradient.
    """
    R = Z - P
    u = np.sum(P * R, axis=1)
    a = np.linalg.norm(P, axis=1)
    b = np.linalg.norm(R, axis=1)
    valid = (a > guard) & (b > guard)
    psi_vals = np.zeros(P.shape[0])
    dpsi = np.zeros_like(P)
    if np.any(valid):
        av = a[valid]
        bv = b[valid]
        uv = u[valid]
        pv = P[valid]
        rv = R[valid]
        zv = Z[valid]
        psi_vals[valid] = np.abs(uv) / (av * bv)
        sg = np.sign(uv)
        dpsi[valid] = (
            (sg / (av * bv))[:, None] * (zv - 2.0 * pv)
            + np.abs(uv)[:, None]
            * (-pv / (av**3 * bv)[:, None] + rv / (av * bv**3)[:, None])
        )
    return psi_vals, dpsi, int(np.count_nonzero(~valid))


def sor_value(net: DenseNet, z_batch, guard: float = 1e-9) -> SorResult:
    """Empirical orthogonality penalty (1/s) sum psi(z_i); degenerate
    samples contribute zero and are counted."""
    Z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    out, _ = forward_batch(net, Z)
    psi_vals, _, degenerate = _psi_batch_and_grad(out, Z, guard)
    return SorResult(float(psi_vals.sum() / Z.shape[0]), degenerate)


def loss_and_grad(net: DenseNet, batch, z_batch, cfg: TrainConfig,
                  noise_seed: int = 0):
    """Regularized loss and its full parameter gradient.

    loss = mean((net(input) - x)^2) + lam * (1/s) sum psi(z_i), where the
    input is x itself (AE) or x + N(0, xi^2 I) noise drawn from noise_seed
    (PnP). The mean runs over both batch and vector elements. The penalty
    weight lam multiplies the gradient as well, keeping the stochastic
    gradient an unbiased estimate of the regularized loss gradient.
    """
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if X.shape[0] != Z.shape[0]:
        raise ValueError(
            f"data batch ({X.shape[0]}) and z batch ({Z.shape[0]}) sizes differ"
        )
    s = X.shape[0]
    if cfg.mode == "PnP":
        eps = np.random.default_rng(noise_seed).normal(0.0, cfg.xi, X.shape)
        inputs = X + eps
    else:
        inputs = X
    out, caches = forward_batch(net, inputs)
    resid = out - X
    data = float(np.mean(resid**2))
    grads = _backward_batch(net, caches, 2.0 * resid / resid.size)
    sor = 0.0
    if cfg.lam != 0.0:
        outz, caches_z = forward_batch(net, Z)
        psi_vals, dpsi, _ = _psi_batch_and_grad(outz, Z, cfg.psi_guard)
        sor = float(psi_vals.sum() / s)
        grads = _add_grads(
            grads, _backward_batch(net, caches_z, (cfg.lam / s) * dpsi)
        )
    loss = data + cfg.lam * sor
    if not np.isfinite(loss):
        term = "data" if not np.isfinite(data) else "sor"
        raise NonFiniteLoss(term, data, sor)
    return loss, grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0


def adam_state_for(net: DenseNet) -> AdamState:
    return AdamState(m=_zeros_grads(net), v=_zeros_grads(net))


def adam_step(net: DenseNet, grads, state: AdamState, tau: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for layer, (g_w, g_b), (m_w, m_b), (v_w, v_b) in zip(
        net.layers, grads, state.m, state.v
    ):
        for param, g, m, v in ((layer.weight, g_w, m_w, v_w),
                               (layer.bias, g_b, m_b, v_b)):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            param -= tau * (m / c1) / (np.sqrt(v / c2) + eps)
    return net, state


@dataclass
class EpochRecord:
    epoch: int
    data_loss: float
    probe_mean_psi: float


def train(net: DenseNet, dataset, cfg: TrainConfig):
    """Mini-batch Adam training with a fresh uniform z-batch per step.

    Seed-stream layout (reproducibility contract): SeedSequence(cfg.seed)
    spawns, in order, the probe stream (512 fixed uniform points evaluated
    per epoch), the shuffle stream (one permutation per epoch), the z
    stream (one uniform batch per step), and the PnP noise stream (one
    seed per step). history holds one record per epoch: full-dataset
    reconstruction MSE and the probe-set mean orthogonality defect.
    """
    items = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if items.shape[0] < 1:
        raise ValueError("dataset must be non-empty")
    if items.min() < 0.0 or items.max() > 1.0:
        raise ValueError("dataset entries must lie in [0, 1]")
    n = net.n
    if items.shape[1] != n:
        raise ValueError(f"dataset width {items.shape[1]}, net expects {n}")
    probe_ss, shuffle_ss, z_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    probe = np.random.default_rng(probe_ss).uniform(size=(PROBE_POINTS, n))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    z_rng = np.random.default_rng(z_ss)
    noise_rng = np.random.default_rng(noise_ss)
    state = adam_state_for(net)
    history: list[EpochRecord] = []
    count = items.shape[0]
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(count)
        for step, start in enumerate(range(0, count, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            xb = items[idx]
            zb = z_rng.uniform(size=(idx.size, n))
            noise_seed = (
                int(noise_rng.integers(2**63)) if cfg.mode == "PnP" else 0
            )
            try:
                _, grads = loss_and_grad(net, xb, zb, cfg, noise_seed)
            except NonFiniteLoss as exc:
                raise TrainingDiverged(epoch, step, exc) from exc
            adam_step(net, grads, state, cfg.tau, *cfg.adam)
        out, _ = forward_batch(net, items)
        data_loss = float(np.mean((out - items) ** 2))
        probe_psi = sor_value(net, probe, cfg.psi_guard).value
        history.append(EpochRecord(epoch, data_loss, probe_psi))
    return net, history


def history_to_csv(history, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,data_loss,probe_mean_psi\n")
        for rec in history:
            fh.write(f"{rec.epoch},{repr(rec.data_loss)},{repr(rec.probe_mean_psi)}\n")


@dataclass
class UnbiasednessReport:
    trials: int
    n_params: int
    frac_within_4se: float
    max_abs_z: float
    zscores: np.ndarray = field(repr=False)


def stochastic_gradient_unbiasedness_check(net: DenseNet, dataset,
                                           cfg: TrainConfig, trials: int,
                                           mc_points: int = 100_000,
                                           seed: int = 0) -> UnbiasednessReport:
    """Check E[stochastic gradient] against a high-precision reference.

    Reference = full-batch data gradient + lam * Monte-Carlo penalty
    gradient over mc_points uniform draws. Each trial draws batch_size
    dataset items without replacement plus batch_size fresh z points.
    z-scores use the combined standard error of the trial mean and the
    Monte-Carlo reference (both are noisy estimates of the same vector).
    Supports AE mode only: the denoiser data term carries its own noise
    expectation, which this check does not model.
    """
    if cfg.mode != "AE":
        raise ValueError("unbiasedness check supports AE mode only")
    items = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    count = items.shape[0]
    if cfg.batch_size > count:
        raise ValueError("batch_size exceeds dataset size")
    n = net.n
    n_params = net.n_params()
    rng = np.random.default_rng(seed)

    # Full-batch data gradient (exact part of the reference).
    out, caches = forward_batch(net, items)
    resid = out - items
    data_grads = _backward_batch(net, caches, 2.0 * resid / resid.size)
    data_flat = _flatten_grads(data_grads)

    # Monte-Carlo penalty gradient, chunked to estimate its own error.
    chunk_means = []
    if cfg.lam != 0.0:
        n_chunks = 200
        per_chunk = max(mc_points // n_chunks, 1)
        for _ in range(n_chunks):
            zc = rng.uniform(size=(per_chunk, n))
            outz, caches_z = forward_batch(net, zc)
            _, dpsi, _ = _psi_batch_and_grad(outz, zc, cfg.psi_guard)
            g = _backward_batch(net, caches_z, dpsi / per_chunk)
            chunk_means.append(_flatten_grads(g))
        chunk_arr = np.asarray(chunk_means)
        sor_ref = cfg.lam * chunk_arr.mean(axis=0)
        se_ref_sq = cfg.lam**2 * chunk_arr.var(axis=0, ddof=1) / len(chunk_means)
    else:
        sor_ref = np.zeros(n_params)
        se_ref_sq = np.zeros(n_params)
    reference = data_flat + sor_ref

    full_batch = cfg.batch_size == count
    # Welford accumulation: exact zero variance when every trial matches
    # (the shortcut sum-of-squares formula leaves cancellation residue)
    mean_g = np.zeros(n_params)
    m2 = np.zeros(n_params)
    for trial in range(trials):
        if full_batch:
            idx = np.arange(count)  # no sampling: trials match the reference
        else:
            idx = rng.choice(count, size=cfg.batch_size, replace=False)
        zb = rng.uniform(size=(cfg.batch_size, n))
        _, grads = loss_and_grad(net, items[idx], zb, cfg, 0)
        flat = _flatten_grads(grads)
        delta = flat - mean_g
        mean_g += delta / (trial + 1)
        m2 += delta * (flat - mean_g)
    var_g = m2 / max(trials - 1, 1)
    se_sq = var_g / trials + se_ref_sq
    diff = mean_g - reference
    z = np.zeros(n_params)
    nonzero = se_sq > 0
    z[nonzero] = diff[nonzero] / np.sqrt(se_sq[nonzero])
    z[~nonzero] = np.where(diff[~nonzero] == 0.0, 0.0, np.inf)
    frac = float(np.mean(np.abs(z) <= 4.0)) if trials > 1 else 1.0
    return UnbiasednessReport(
        trials=trials,
        n_params=n_params,
        frac_within_4se=frac,
        max_abs_z=float(np.max(np.abs(z))),
        zscores=z,
    )


def _flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([g.reshape(-1), b]) for g, b in grads])


_CHECKPOINT_VERSION = 1


def save_checkpoint(net: DenseNet, path) -> None:
    """JSON header line, then all parameters as little-endian float64 in
    declaration order (per layer: weight row-major, then bias)."""
    header = {
        "format_version": _CHECKPOINT_VERSION,
        "dims": net.dims,
        "activations": [
            {"kind": l.activation.kind, "slope": l.activation.slope}
            for l in net.layers
        ],
        "latent_index": net.latent_index,
    }
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for l in net.layers
        for arr in (l.weight, l.bias)
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("ascii"))
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(path) -> DenseNet:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError("missing header terminator", offset=len(raw))
    try:
        header = json.loads(raw[:newline])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"bad header JSON: {exc.msg}", offset=exc.pos) from None
    if header.get("format_version") != _CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported format_version {header.get('format_version')!r}", offset=0
        )
    try:
        dims = [int(d) for d in header["dims"]]
        act_specs = header["activations"]
        latent_index = header["latent_index"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad header fields: {exc}", offset=0) from None
    if len(dims) < 2 or len(act_specs) != len(dims) - 1:
        raise CheckpointError("header dims/activations inconsistent", offset=0)
    expected = sum(
        dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1)
    )
    blob = raw[newline + 1 :]
    if len(blob) != 8 * expected:
        raise CheckpointError(
            f"parameter blob mismatch for dims {dims}: expected {8 * expected} "
            f"bytes, got {len(blob)}",
            offset=newline + 1 + min(len(blob), 8 * expected),
        )
    params = np.frombuffer(blob, dtype="<f8")
    layers = []
    pos = 0
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = params[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in).copy()
        pos += fan_out * fan_in
        b = params[pos : pos + fan_out].copy()
        pos += fan_out
        spec = act_specs[i]
        layers.append(
            DenseLayer(w, b, Activation(spec["kind"], float(spec.get("slope", 0.0))))
        )
    return DenseNet(layers, latent_index)
