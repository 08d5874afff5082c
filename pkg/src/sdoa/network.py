"""Spectrum-vector DOA network (SDOAnet) with hand-derived gradients.

Architecture: a fully connected input layer fans the stacked re/im
snapshot out to a small multi-channel sequence, a stack of identical
blocks (same-padded 1-D convolution, per-channel batch normalization,
ReLU) refines it, and a fully connected output layer produces a real
vector of twice the array size.  Read as a complex vector, that output
induces a spatial spectrum |a^H(angle) z|^2 whose peaks estimate the
DOAs; training regresses this induced spectrum onto a Gaussian-bump
target, so one trained network serves any number of sources.

Everything runs in float64 numpy with explicit forward caches and a
hand-written backward pass, which keeps the gradients checkable against
finite differences.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .arrays import ArrayConfig, CurriculumStage, ImperfectionCaps, Snapshot, SourceSet, curriculum_stage_for
from .datasets import DoaSamplingPolicy, generate_dataset
from .spectrum import (
    DEFAULT_MIN_SEPARATION_DEG,
    DEFAULT_SIGMA_BAR,
    EVAL_GRID_SIZE,
    TRAIN_GRID_SIZE,
    AngleGrid,
    DoaEstimate,
    Spectrum,
    eval_spectrum,
    find_peaks,
    reference_values,
    steering_matrix,
)
from .validation import as_generator, check_received_vector, check_snapshot_matrix

__all__ = [
    "NetConfig",
    "ConvBlockParams",
    "NetworkParams",
    "AdamState",
    "EpochStats",
    "TrainingDivergedError",
    "init_params",
    "stack_received",
    "to_complex",
    "forward",
    "loss_and_grad",
    "adam_step",
    "train",
    "estimate",
    "save_model",
    "load_model",
    "SdoaNet",
]


@dataclass(frozen=True)
class NetConfig:
    """Network and optimizer hyperparameters."""

    n_antennas: int = 16
    n_filters: int = 2
    inner_dim: int = 32
    n_conv_layers: int = 6
    kernel_size: int = 3
    batch_size: int = 64
    learning_rate: float = 5e-4
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        for name in ("n_antennas", "n_filters", "inner_dim", "n_conv_layers", "kernel_size", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd for symmetric same-padding")
        if self.learning_rate < 0 or self.bn_epsilon <= 0:
            raise ValueError("learning_rate must be >= 0 and bn_epsilon > 0")
        if not 0.0 < self.bn_momentum < 1.0:
            raise ValueError("bn_momentum must lie in (0, 1)")

    @property
    def input_dim(self) -> int:
        return 2 * self.n_antennas

    @property
    def hidden_dim(self) -> int:
        return self.n_filters * self.inner_dim


@dataclass
class ConvBlockParams:
    kernel: np.ndarray  # (n_filters, n_filters, kernel_size)
    bias: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class NetworkParams:
    """All weights and batch-norm state, in serialization order."""

    fc_in_w: np.ndarray
    fc_in_b: np.ndarray
    blocks: list[ConvBlockParams]
    fc_out_w: np.ndarray
    fc_out_b: np.ndarray

    def arrays(self):
        """Yield (name, array) for every stored array, declaration order."""
        yield "fc_in_w", self.fc_in_w
        yield "fc_in_b", self.fc_in_b
        for i, blk in enumerate(self.blocks):
            yield f"block{i}_kernel", blk.kernel
            yield f"block{i}_bias", blk.bias
            yield f"block{i}_gamma", blk.gamma
            yield f"block{i}_beta", blk.beta
            yield f"block{i}_running_mean", blk.running_mean
            yield f"block{i}_running_var", blk.running_var
        yield "fc_out_w", self.fc_out_w
        yield "fc_out_b", self.fc_out_b

    def trainable(self):
        """Yield (name, array) for gradient-carrying parameters only."""
        for name, arr in self.arrays():
            if "running" not in name:
                yield name, arr

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.fc_in_w.copy(),
            self.fc_in_b.copy(),
            [
                ConvBlockParams(
                    b.kernel.copy(), b.bias.copy(), b.gamma.copy(), b.beta.copy(),
                    b.running_mean.copy(), b.running_var.copy(),
                )
                for b in self.blocks
            ],
            self.fc_out_w.copy(),
            self.fc_out_b.copy(),
        )


def init_params(cfg: NetConfig, rng_seed) -> NetworkParams:
    """Glorot-uniform weights, zero biases, identity batch-norm state."""
    rng = as_generator(rng_seed)

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, shape)

    f, inner, k = cfg.n_filters, cfg.inner_dim, cfg.kernel_size
    fc_in_w = glorot((cfg.input_dim, cfg.hidden_dim), cfg.input_dim, cfg.hidden_dim)
    blocks = []
    for _ in range(cfg.n_conv_layers):
        blocks.append(
            ConvBlockParams(
                kernel=glorot((f, f, k), f * k, f * k),
                bias=np.zeros(f),
                gamma=np.ones(f),
                beta=np.zeros(f),
                running_mean=np.zeros(f),
                running_var=np.ones(f),
            )
        )
    fc_out_w = glorot((cfg.hidden_dim, cfg.input_dim), cfg.hidden_dim, cfg.input_dim)
    return NetworkParams(fc_in_w, np.zeros(cfg.hidden_dim), blocks, fc_out_w, np.zeros(cfg.input_dim))


def stack_received(r) -> np.ndarray:
    """Stack complex snapshots as [Re r; Im r] rows for the network input."""
    r = np.atleast_2d(np.asarray(r, dtype=np.complex128))
    return np.concatenate([r.real, r.imag], axis=1)


def to_complex(g) -> np.ndarray:
    """Read the real output vector back as a complex one (first half + j second)."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] % 2:
        raise ValueError("output length must be even")
    n = g.shape[-1] // 2
    return g[..., :n] + 1j * g[..., n:]


# --------------------------------------------------------------------------
# layers


def _conv1d_same(x, kernel, bias):
    b, c, length = x.shape
    ksize = kernel.shape[2]
    pad = (ksize - 1) // 2
    xp = np.zeros((b, c, length + 2 * pad))
    xp[:, :, pad : pad + length] = x
    out = np.broadcast_to(bias[None, :, None], (b, kernel.shape[0], length)).copy()
    for t in range(ksize):
        out += np.einsum("oc,bcl->bol", kernel[:, :, t], xp[:, :, t : t + length])
    return out


def _conv1d_same_backward(dout, x_in, kernel):
    b, c, length = x_in.shape
    ksize = kernel.shape[2]
    pad = (ksize - 1) // 2
    xp = np.zeros((b, c, length + 2 * pad))
    xp[:, :, pad : pad + length] = x_in
    dbias = dout.sum(axis=(0, 2))
    dkernel = np.empty_like(kernel)
    dxp = np.zeros_like(xp)
    for t in range(ksize):
        dkernel[:, :, t] = np.einsum("bol,bcl->oc", dout, xp[:, :, t : t + length])
        dxp[:, :, t : t + length] += np.einsum("oc,bol->bcl", kernel[:, :, t], dout)
    return dxp[:, :, pad : pad + length], dkernel, dbias


def _bn_train(z, gamma, beta, eps):
    mean = z.mean(axis=(0, 2))
    var = z.var(axis=(0, 2))  # biased, as used for normalization
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (z - mean[None, :, None]) * inv_std[None, :, None]
    return gamma[None, :, None] * xhat + beta[None, :, None], xhat, inv_std, mean, var


def _bn_eval(z, gamma, beta, running_mean, running_var, eps):
    if np.any(running_var <= 0) or not np.all(np.isfinite(running_var)):
        raise ValueError("running variances must be positive and finite for eval mode")
    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (z - running_mean[None, :, None]) * inv_std[None, :, None]
    return gamma[None, :, None] * xhat + beta[None, :, None]


def _bn_backward(dout, gamma, xhat, inv_std):
    dgamma = np.sum(dout * xhat, axis=(0, 2))
    dbeta = np.sum(dout, axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    b, _, length = dout.shape
    n = b * length
    sum_dxhat = dxhat.sum(axis=(0, 2))
    sum_dxhat_xhat = np.sum(dxhat * xhat, axis=(0, 2))
    dz = (inv_std[None, :, None] / n) * (
        n * dxhat - sum_dxhat[None, :, None] - xhat * sum_dxhat_xhat[None, :, None]
    )
    return dz, dgamma, dbeta


@dataclass
class _BlockCache:
    x_in: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    mask: np.ndarray


@dataclass
class ForwardCache:
    """Per-batch intermediates kept for the backward pass (train mode only)."""

    y: np.ndarray
    x0_shape: tuple
    blocks: list[_BlockCache]
    flat: np.ndarray


def forward(params: NetworkParams, y, cfg: NetConfig, train: bool = False):
    """Run the network; returns (output, cache).

    Train mode normalizes with batch statistics, updates the running
    statistics in place (momentum per config) and returns a ForwardCache;
    eval mode uses the stored running statistics, touches nothing, and
    returns cache=None.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != cfg.input_dim:
        raise ValueError(f"expected input of shape (batch, {cfg.input_dim}), got {y.shape}")
    b = y.shape[0]

    h0 = y @ params.fc_in_w + params.fc_in_b
    x = h0.reshape(b, cfg.n_filters, cfg.inner_dim)
    x0_shape = x.shape
    block_caches = []
    for blk in params.blocks:
        x_in = x
        z = _conv1d_same(x_in, blk.kernel, blk.bias)
        if train:
            bn_out, xhat, inv_std, mean, var = _bn_train(z, blk.gamma, blk.beta, cfg.bn_epsilon)
            n_elem = b * cfg.inner_dim
            unbiased = var * n_elem / (n_elem - 1) if n_elem > 1 else var
            m = cfg.bn_momentum
            blk.running_mean += m * (mean - blk.running_mean)
            blk.running_var += m * (unbiased - blk.running_var)
        else:
            bn_out = _bn_eval(z, blk.gamma, blk.beta, blk.running_mean, blk.running_var, cfg.bn_epsilon)
        mask = bn_out > 0.0
        x = np.where(mask, bn_out, 0.0)
        if train:
            block_caches.append(_BlockCache(x_in, xhat, inv_std, mask))

    flat = x.reshape(b, cfg.hidden_dim)
    out = flat @ params.fc_out_w + params.fc_out_b
    cache = ForwardCache(y, x0_shape, block_caches, flat) if train else None
    return out, cache


# --------------------------------------------------------------------------
# loss and training


def _spectrum_loss_grad(z, refs, steering):
    """Loss (batch mean of grid-mean squared error) and its complex gradient.

    With p = a^H(angle) z, the spectrum is |p|^2 and the gradient of the
    loss with respect to z is sum_angle w * a a^H z with the pointwise
    weights w = 2/(batch * grid) * (spectrum - reference).
    """
    p = z @ steering.T
    fsp = np.abs(p) ** 2
    diff = fsp - refs
    b, omega = fsp.shape
    loss = float(np.sum(diff * diff) / (b * omega))
    w = (2.0 / (b * omega)) * diff
    gz = (w * p) @ steering.conj()
    return loss, gz


def _loss_and_grad_arrays(params, y, refs, steering, cfg):
    out, cache = forward(params, y, cfg, train=True)
    z = to_complex(out)
    loss, gz = _spectrum_loss_grad(z, refs, steering)
    if not np.isfinite(loss):
        raise ArithmeticError("training loss is not finite")

    dout = np.concatenate([2.0 * gz.real, 2.0 * gz.imag], axis=1)
    grads = {
        "fc_out_w": cache.flat.T @ dout,
        "fc_out_b": dout.sum(axis=0),
    }
    dx = (dout @ params.fc_out_w.T).reshape(cache.x0_shape)
    for i in reversed(range(len(params.blocks))):
        blk = params.blocks[i]
        c = cache.blocks[i]
        dz, dgamma, dbeta = _bn_backward(dx * c.mask, blk.gamma, c.xhat, c.inv_std)
        dx, dkernel, dbias = _conv1d_same_backward(dz, c.x_in, blk.kernel)
        grads[f"block{i}_kernel"] = dkernel
        grads[f"block{i}_bias"] = dbias
        grads[f"block{i}_gamma"] = dgamma
        grads[f"block{i}_beta"] = dbeta
    dh0 = dx.reshape(y.shape[0], cfg.hidden_dim)
    grads["fc_in_w"] = y.T @ dh0
    grads["fc_in_b"] = dh0.sum(axis=0)
    return loss, grads


def loss_and_grad(
    params: NetworkParams,
    snapshots: list[Snapshot],
    grid: AngleGrid,
    cfg: NetConfig,
    sigma_bar: float = DEFAULT_SIGMA_BAR,
    spacing: float = 0.5,
):
    """Batch loss against the Gaussian reference spectra plus all gradients."""
    y = stack_received(np.array([s.received for s in snapshots]))
    doas = np.stack([s.truth.doas_deg for s in snapshots])
    refs = reference_values(doas, grid.angles, sigma_bar / cfg.n_antennas)
    steering = steering_matrix(grid.angles, np.arange(cfg.n_antennas) * spacing)
    return _loss_and_grad_arrays(params, y, refs, steering, cfg)


@dataclass
class AdamState:
    """First and second moment accumulators matching the trainable arrays."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.trainable()},
            v={name: np.zeros_like(arr) for name, arr in params.trainable()},
        )


def adam_step(params: NetworkParams, grads: dict, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, applied to the parameters in place."""
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for name, arr in params.trainable():
        g = grads[name]
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        arr -= lr * (state.m[name] / c1) / (np.sqrt(state.v[name] / c2) + state.eps)


@dataclass
class EpochStats:
    epoch: int
    stage: CurriculumStage | None
    mean_loss: float
    wall_time_s: float

    @property
    def stage_label(self) -> str:
        return self.stage.label if self.stage is not None else "dataset"


class TrainingDivergedError(RuntimeError):
    """Raised when the loss goes non-finite; carries the history so far."""

    def __init__(self, message: str, history: list[EpochStats]):
        super().__init__(message)
        self.history = history


def train(
    cfg: NetConfig,
    caps: ImperfectionCaps,
    *,
    epochs: int,
    samples_per_epoch: int = 5000,
    policy: DoaSamplingPolicy | None = None,
    snr_range_db: tuple[float, float] = (0.0, 30.0),
    rng_seed: int = 0,
    spacing: float = 0.5,
    sigma_bar: float = DEFAULT_SIGMA_BAR,
    train_grid_size: int = TRAIN_GRID_SIZE,
    dataset: list[Snapshot] | None = None,
) -> tuple[NetworkParams, list[EpochStats]]:
    """Run the staged-imperfection training loop.

    Epoch e draws a fresh dataset from curriculum stage (e mod 7) unless a
    fixed dataset is supplied for reproducibility studies.  Fully
    deterministic for a given seed; raises TrainingDivergedError (with the
    history so far) if the loss leaves the float range.
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    array = ArrayConfig(cfg.n_antennas, nominal_spacing=spacing)
    policy = policy or DoaSamplingPolicy()
    params = init_params(cfg, (rng_seed, 0))
    state = AdamState.for_params(params)
    grid = AngleGrid.linspace(train_grid_size)
    steering = steering_matrix(grid.angles, array.nominal_positions, array.wavelength)
    sigma = sigma_bar / cfg.n_antennas

    history: list[EpochStats] = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        if dataset is None:
            stage = curriculum_stage_for(epoch)
            epoch_seed = int(np.random.SeedSequence([rng_seed, 7, epoch]).generate_state(1, np.uint64)[0])
            data = generate_dataset(array, caps, [stage], samples_per_epoch, snr_range_db, policy, epoch_seed)
        else:
            stage = None
            data = dataset

        total = 0.0
        count = 0
        for start in range(0, len(data), cfg.batch_size):
            batch = data[start : start + cfg.batch_size]
            y = stack_received(np.array([s.received for s in batch]))
            doas = np.stack([s.truth.doas_deg for s in batch])
            refs = reference_values(doas, grid.angles, sigma)
            try:
                loss, grads = _loss_and_grad_arrays(params, y, refs, steering, cfg)
            except ArithmeticError as exc:
                raise TrainingDivergedError(str(exc), history) from exc
            adam_step(params, grads, state, cfg.learning_rate)
            total += loss * len(batch)
            count += len(batch)
        history.append(EpochStats(epoch, stage, total / count, time.perf_counter() - t0))
    return params, history


def estimate(
    params: NetworkParams,
    r,
    grid: AngleGrid,
    k: int,
    cfg: NetConfig,
    spacing: float = 0.5,
    min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
) -> tuple[Spectrum, DoaEstimate]:
    """Eval-mode spectrum and peak extraction for one snapshot."""
    r = check_received_vector(r, cfg.n_antennas)
    out, _ = forward(params, stack_received(r[None, :]), cfg, train=False)
    z = to_complex(out[0])
    spec = eval_spectrum(z, grid, np.arange(cfg.n_antennas) * spacing)
    return spec, find_peaks(spec, k, min_separation_deg)


# --------------------------------------------------------------------------
# model file


MODEL_MAGIC = b"SDON"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sI6I3d")


def _array_specs(cfg: NetConfig) -> list[tuple[str, tuple]]:
    f, inner, k = cfg.n_filters, cfg.inner_dim, cfg.kernel_size
    specs = [("fc_in_w", (cfg.input_dim, cfg.hidden_dim)), ("fc_in_b", (cfg.hidden_dim,))]
    for i in range(cfg.n_conv_layers):
        specs += [
            (f"block{i}_kernel", (f, f, k)),
            (f"block{i}_bias", (f,)),
            (f"block{i}_gamma", (f,)),
            (f"block{i}_beta", (f,)),
            (f"block{i}_running_mean", (f,)),
            (f"block{i}_running_var", (f,)),
        ]
    specs += [("fc_out_w", (cfg.hidden_dim, cfg.input_dim)), ("fc_out_b", (cfg.input_dim,))]
    return specs


def save_model(path, params: NetworkParams, cfg: NetConfig) -> Path:
    """Write a versioned binary model file (header + float64 LE arrays)."""
    path = Path(path)
    chunks = [
        _MODEL_HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            cfg.n_antennas,
            cfg.n_filters,
            cfg.inner_dim,
            cfg.n_conv_layers,
            cfg.kernel_size,
            cfg.batch_size,
            cfg.learning_rate,
            cfg.bn_epsilon,
            cfg.bn_momentum,
        )
    ]
    specs = _array_specs(cfg)
    arrays = dict(params.arrays())
    for name, shape in specs:
        arr = arrays[name]
        if arr.shape != shape:
            raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_model(path) -> tuple[NetworkParams, NetConfig]:
    """Read a model file, validating the shape arithmetic before accepting."""
    raw = Path(path).read_bytes()
    if len(raw) < _MODEL_HEADER.size:
        raise ValueError(f"{path} is not a model file (truncated header)")
    magic, version, n, f, inner, layers, k, batch, lr, eps, momentum = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{path} is not a model file (bad magic {magic!r})")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    cfg = NetConfig(n, f, inner, layers, k, batch, lr, eps, momentum)

    specs = _array_specs(cfg)
    expected = sum(int(np.prod(shape)) for _, shape in specs)
    body = np.frombuffer(raw, dtype="<f8", offset=_MODEL_HEADER.size)
    if body.size != expected:
        raise ValueError(f"{path} is corrupt: expected {expected} floats, found {body.size}")

    arrays = {}
    offset = 0
    for name, shape in specs:
        size = int(np.prod(shape))
        arrays[name] = body[offset : offset + size].reshape(shape).copy()
        offset += size

    blocks = [
        ConvBlockParams(
            arrays[f"block{i}_kernel"],
            arrays[f"block{i}_bias"],
            arrays[f"block{i}_gamma"],
            arrays[f"block{i}_beta"],
            arrays[f"block{i}_running_mean"],
            arrays[f"block{i}_running_var"],
        )
        for i in range(layers)
    ]
    params = NetworkParams(arrays["fc_in_w"], arrays["fc_in_b"], blocks, arrays["fc_out_w"], arrays["fc_out_b"])
    for blk in blocks:
        if np.any(blk.running_var <= 0):
            raise ValueError("model file carries non-positive running variances")
    return params, cfg


# --------------------------------------------------------------------------
# estimator API


class SdoaNet(BaseEstimator):
    """Trainable spectrum-vector DOA estimator.

    `fit()` without data runs the staged-imperfection curriculum on
    synthesized snapshots; `fit(X, y)` trains on a fixed set of snapshots
    X (n, N) with true DOAs y (n, K).  `predict` maps snapshots to DOAs
    through the induced spectrum's peaks.
    """

    def __init__(
        self,
        n_antennas: int = 16,
        n_sources: int = 3,
        spacing: float = 0.5,
        n_filters: int = 2,
        inner_dim: int = 32,
        n_conv_layers: int = 6,
        kernel_size: int = 3,
        batch_size: int = 64,
        learning_rate: float = 5e-4,
        bn_epsilon: float = 1e-5,
        bn_momentum: float = 0.1,
        epochs: int = 14,
        samples_per_epoch: int = 5000,
        snr_range_db: tuple = (0.0, 30.0),
        sigma_bar: float = DEFAULT_SIGMA_BAR,
        train_grid_size: int = TRAIN_GRID_SIZE,
        grid_size: int = EVAL_GRID_SIZE,
        min_separation_deg: float = DEFAULT_MIN_SEPARATION_DEG,
        caps: ImperfectionCaps | None = None,
        random_state: int = 0,
    ):
        self.n_antennas = n_antennas
        self.n_sources = n_sources
        self.spacing = spacing
        self.n_filters = n_filters
        self.inner_dim = inner_dim
        self.n_conv_layers = n_conv_layers
        self.kernel_size = kernel_size
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.bn_epsilon = bn_epsilon
        self.bn_momentum = bn_momentum
        self.epochs = epochs
        self.samples_per_epoch = samples_per_epoch
        self.snr_range_db = snr_range_db
        self.sigma_bar = sigma_bar
        self.train_grid_size = train_grid_size
        self.grid_size = grid_size
        self.min_separation_deg = min_separation_deg
        self.caps = caps
        self.random_state = random_state

    def net_config(self) -> NetConfig:
        return NetConfig(
            n_antennas=self.n_antennas,
            n_filters=self.n_filters,
            inner_dim=self.inner_dim,
            n_conv_layers=self.n_conv_layers,
            kernel_size=self.kernel_size,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            bn_epsilon=self.bn_epsilon,
            bn_momentum=self.bn_momentum,
        )

    def fit(self, X=None, y=None):
        cfg = self.net_config()
        caps = self.caps if self.caps is not None else ImperfectionCaps()
        dataset = None
        if X is not None:
            X = check_snapshot_matrix(X, self.n_antennas)
            if y is None:
                raise ValueError("fixed-dataset training needs true DOAs")
            y = np.atleast_2d(np.asarray(y, dtype=np.float64))
            if y.shape[0] != X.shape[0]:
                raise ValueError("X and y disagree on the number of snapshots")
            dataset = [
                Snapshot(row, SourceSet(doas, np.ones(len(doas), dtype=complex)), np.nan)
                for row, doas in zip(X, y)
            ]
        self.params_, self.history_ = train(
            cfg,
            caps,
            epochs=self.epochs,
            samples_per_epoch=self.samples_per_epoch,
            snr_range_db=tuple(self.snr_range_db),
            rng_seed=self.random_state,
            spacing=self.spacing,
            sigma_bar=self.sigma_bar,
            train_grid_size=self.train_grid_size,
            dataset=dataset,
        )
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("SdoaNet is neither fitted nor loaded from a model file")

    def estimate_one(self, r) -> tuple[Spectrum, DoaEstimate]:
        self._require_fitted()
        grid = AngleGrid.linspace(self.grid_size)
        return estimate(
            self.params_, r, grid, self.n_sources, self.net_config(),
            self.spacing, self.min_separation_deg,
        )

    def predict(self, X) -> np.ndarray:
        X = check_snapshot_matrix(X, self.n_antennas)
        return np.vstack([self.estimate_one(row)[1].doas for row in X])

    def transform(self, X) -> np.ndarray:
        X = check_snapshot_matrix(X, self.n_antennas)
        return np.vstack([self.estimate_one(row)[0].values for row in X])

    def save(self, path) -> Path:
        self._require_fitted()
        return save_model(path, self.params_, self.net_config())

    def load(self, path) -> "SdoaNet":
        """Load weights, adopting the architecture stored in the file."""
        params, cfg = load_model(path)
        self.n_antennas = cfg.n_antennas
        self.n_filters = cfg.n_filters
        self.inner_dim = cfg.inner_dim
        self.n_conv_layers = cfg.n_conv_layers
        self.kernel_size = cfg.kernel_size
        self.batch_size = cfg.batch_size
        self.learning_rate = cfg.learning_rate
        self.bn_epsilon = cfg.bn_epsilon
        self.bn_momentum = cfg.bn_momentum
        self.params_ = params
        return self

    @classmethod
    def from_file(cls, path, **kwargs) -> "SdoaNet":
        return cls(**kwargs).load(path)
