"""Squared-loss training for sequence convolution networks.

Empirical risk here is the plain mean squared error over a dataset; gradients
are computed by exact backpropagation through the convolution / downsample /
bias / ReLU chain, honoring the two weight-sharing structures of the
architecture: every layer's Toeplitz matrix is parameterized by its s+1 filter
taps, and a ``mid``-tagged bias exposes only its distinct values (the tied
middle entries accumulate into a single slot).  The ReLU derivative at exactly
zero is taken to be zero.

Truncation is never applied during training; it is an evaluation-time device,
so the reported test RMSE clamps predictions to the test set's label bound
while the training trace is raw.

Two optimizers are provided: plain gradient descent and adaptive moment
estimation (exponential moving averages of the gradient and its square with
bias correction).  Training is deterministic given a seed: minibatch order is
drawn from a seeded generator and gradient accumulation uses a fixed
reduction order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .dcnn import BiasVector, ConvLayer, Dcnn, forward_batch
from .deepen import Dataset
from .errors import NumericalError, ValidationError
from .seqconv import FilterSeq

__all__ = [
    "OptimizerSpec",
    "TrainConfig",
    "TrainReport",
    "GradientPack",
    "init_net",
    "loss",
    "grad",
    "fit",
]


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class OptimizerSpec:
    """Which update rule to use.

    ``plain_sgd`` ignores the moment parameters; ``adaptive_moments`` keeps
    exponential averages of the gradient (decay ``beta1``) and its square
    (decay ``beta2``), corrects their startup bias, and divides by the root
    of the second moment plus ``eps_adam``.
    """

    kind: str = "adaptive_moments"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in ("plain_sgd", "adaptive_moments"):
            raise ValidationError(
                "optimizer kind must be 'plain_sgd' or 'adaptive_moments'"
            )
        if self.kind == "adaptive_moments":
            if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
                raise ValidationError("moment decays must lie in (0, 1)")
            if not (math.isfinite(self.eps_adam) and self.eps_adam > 0.0):
                raise ValidationError("eps_adam must be a positive number")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for ``fit``.

    ``batch=None`` selects the default policy: full batch up to 1000 samples,
    minibatches of 128 beyond that.  ``step_size`` may be zero (a no-op run,
    useful as a control).  ``tied_bias`` controls whether freshly initialized
    interior biases carry the equal-middle structure; ``head_only`` freezes
    every layer and trains just the output coefficients and offset, which
    makes the problem an ordinary least squares in those parameters.
    """

    epochs: int
    step_size: float = 1e-3
    optimizer: OptimizerSpec = OptimizerSpec()
    batch: int | None = None
    seed: int = 0
    init_scale: float = 1.0
    tied_bias: bool = True
    head_only: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.epochs, int) or isinstance(self.epochs, bool):
            raise ValidationError("epochs must be an integer")
        if self.epochs < 1:
            raise ValidationError("epochs must be positive")
        step = float(self.step_size)
        if not math.isfinite(step) or step < 0.0:
            raise ValidationError("step_size must be a finite nonnegative number")
        if self.batch is not None:
            if not isinstance(self.batch, int) or isinstance(self.batch, bool):
                raise ValidationError("batch must be an integer or None")
            if self.batch < 1:
                raise ValidationError("batch must be positive")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValidationError("seed must be an integer")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")
        scale = float(self.init_scale)
        if not math.isfinite(scale) or scale <= 0.0:
            raise ValidationError("init_scale must be a positive number")
        if not isinstance(self.optimizer, OptimizerSpec):
            raise ValidationError("optimizer must be an OptimizerSpec")


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch training loss, final truncated test RMSE, and wall time."""

    train_mse: tuple
    test_rmse: float
    wall_time: float

    def __post_init__(self) -> None:
        trace = tuple(float(v) for v in self.train_mse)
        if not all(math.isfinite(v) for v in trace):
            raise ValidationError("training loss trace must be finite")
        if not math.isfinite(float(self.test_rmse)):
            raise ValidationError("test_rmse must be finite")
        object.__setattr__(self, "train_mse", trace)


# ------------------------------------------------------------------- gradients


@dataclass(frozen=True)
class GradientPack:
    """Gradient entries for every free parameter of a network.

    ``filters[j]`` matches layer j's tap vector; ``biases[j]`` is full-width
    for a free bias and reduced to its distinct values for a mid-tagged one
    (first s-1 entries, the accumulated middle slot, last s-1 entries).
    """

    filters: tuple
    biases: tuple
    out_coeffs: np.ndarray
    out_offset: float

    def flatten(self) -> np.ndarray:
        """All entries in a fixed order (layer by layer, then the head)."""
        parts = []
        for taps, bias in zip(self.filters, self.biases):
            parts.append(np.asarray(taps, dtype=float))
            parts.append(np.asarray(bias, dtype=float))
        parts.append(np.asarray(self.out_coeffs, dtype=float))
        parts.append(np.array([self.out_offset], dtype=float))
        return np.concatenate(parts)


def _reduce_bias(values: np.ndarray, tag: str, s: int) -> np.ndarray:
    """Collapse a full-width vector to its distinct slots (sum over ties)."""
    if tag == "free":
        return values.copy()
    m = values.size
    head = values[: s - 1]
    middle = values[s - 1 : m - s + 1]
    tail = values[m - s + 1 :]
    return np.concatenate((head, [float(np.sum(middle))], tail))


def _expand_bias(reduced: np.ndarray, tag: str, s: int, width: int) -> np.ndarray:
    """Inverse of ``_reduce_bias`` for parameter values (middle broadcast)."""
    if tag == "free":
        return reduced.copy()
    full = np.empty(width)
    full[: s - 1] = reduced[: s - 1]
    full[s - 1 : width - s + 1] = reduced[s - 1]
    full[width - s + 1 :] = reduced[s:]
    return full


class _TrainState:
    """Mutable copy of a network's parameters, in trainer-friendly form.

    Biases are kept in reduced form (distinct values only) so that optimizer
    state and updates act on free parameters; the full vectors are expanded
    on demand, which keeps tied middle entries exactly equal forever.
    """

    def __init__(self, net: Dcnn):
        self.input_dim = net.input_dim
        self.s = net.filter_len
        self.truncation = net.truncation
        self.taps = [layer.filter.coeffs.copy() for layer in net.layers]
        self.tags = [layer.bias.tag for layer in net.layers]
        self.downs = [layer.downsample for layer in net.layers]
        self.widths = [len(layer.bias) for layer in net.layers]
        self.biases = [
            _reduce_bias_values(layer.bias) for layer in net.layers
        ]
        self.c = np.asarray(net.out_coeffs, dtype=float).copy()
        self.a = float(net.out_offset)

    # -- flat parameter vector ------------------------------------------------
    def flatten(self) -> np.ndarray:
        parts = []
        for taps, bias in zip(self.taps, self.biases):
            parts.append(taps)
            parts.append(bias)
        parts.append(self.c)
        parts.append(np.array([self.a]))
        return np.concatenate(parts)

    def load(self, theta: np.ndarray) -> None:
        pos = 0
        for j in range(len(self.taps)):
            t = self.taps[j].size
            self.taps[j] = theta[pos : pos + t].copy()
            pos += t
            b = self.biases[j].size
            self.biases[j] = theta[pos : pos + b].copy()
            pos += b
        self.c = theta[pos : pos + self.c.size].copy()
        pos += self.c.size
        self.a = float(theta[pos])

    def head_slice(self) -> slice:
        """Positions of the output head inside the flat vector."""
        n = self.flatten().size
        return slice(n - self.c.size - 1, n)

    def full_bias(self, j: int) -> np.ndarray:
        return _expand_bias(self.biases[j], self.tags[j], self.s, self.widths[j])

    # -- forward / backward ---------------------------------------------------
    def forward_cached(self, X: np.ndarray):
        """Forward pass keeping layer inputs and ReLU masks for backprop."""
        H = X
        inputs, masks = [], []
        for j in range(len(self.taps)):
            inputs.append(H)
            B, w_prev = H.shape
            Z = np.zeros((B, w_prev + self.s))
            taps = self.taps[j]
            for t in range(taps.size):
                if taps[t] != 0.0:
                    Z[:, t : t + w_prev] += taps[t] * H
            m = self.downs[j]
            if m is not None:
                Z = Z[:, m - 1 :: m]
            A = Z - self.full_bias(j)[None, :]
            mask = A > 0.0
            H = np.where(mask, A, 0.0)
            masks.append(mask)
        y = H @ self.c + self.a
        return inputs, masks, H, y

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.forward_cached(X)[3]

    def backward(self, X: np.ndarray, y_true: np.ndarray):
        """Gradient of the batch MSE, reduced to free parameters."""
        inputs, masks, H_last, y = self.forward_cached(X)
        B = X.shape[0]
        r = (2.0 / B) * (y - y_true)
        d_c = H_last.T @ r
        d_a = float(np.sum(r))
        dH = r[:, None] * self.c[None, :]
        d_taps = [None] * len(self.taps)
        d_bias = [None] * len(self.taps)
        for j in range(len(self.taps) - 1, -1, -1):
            dA = dH * masks[j]
            full_db = -np.sum(dA, axis=0)
            d_bias[j] = _reduce_bias(full_db, self.tags[j], self.s)
            m = self.downs[j]
            H_prev = inputs[j]
            w_prev = H_prev.shape[1]
            if m is not None:
                dZ = np.zeros((B, w_prev + self.s))
                dZ[:, m - 1 :: m] = dA
            else:
                dZ = dA
            taps = self.taps[j]
            dt = np.empty(taps.size)
            for t in range(taps.size):
                dt[t] = float(np.sum(H_prev * dZ[:, t : t + w_prev]))
            d_taps[j] = dt
            if j > 0:
                dH = np.zeros_like(H_prev)
                for t in range(taps.size):
                    if taps[t] != 0.0:
                        dH += taps[t] * dZ[:, t : t + w_prev]
        return GradientPack(
            filters=tuple(d_taps),
            biases=tuple(d_bias),
            out_coeffs=d_c,
            out_offset=d_a,
        )

    def to_net(self) -> Dcnn:
        layers = []
        for j in range(len(self.taps)):
            tag = self.tags[j]
            bias = BiasVector(
                self.full_bias(j),
                tag=tag,
                mid_s=self.s if tag == "mid" else None,
            )
            layers.append(ConvLayer(FilterSeq(self.taps[j]), bias, self.downs[j]))
        return Dcnn(
            input_dim=self.input_dim,
            filter_len=self.s,
            layers=layers,
            out_coeffs=self.c.copy(),
            out_offset=self.a,
            truncation=self.truncation,
        )


def _reduce_bias_values(bias: BiasVector) -> np.ndarray:
    """Distinct values of a bias vector (middle kept once, not summed)."""
    if bias.tag == "free":
        return bias.values.copy()
    s = bias.mid_s
    m = bias.values.size
    return np.concatenate(
        (bias.values[: s - 1], [float(bias.values[s - 1])], bias.values[m - s + 1 :])
    )


# ------------------------------------------------------------------ public ops


def init_net(
    input_dim: int,
    filter_len: int,
    depth: int,
    *,
    seed: int,
    init_scale: float = 1.0,
    tied_bias: bool = True,
) -> Dcnn:
    """A freshly initialized trainable network.

    Widths follow the zero-padded architecture (each layer adds ``filter_len``
    entries).  Filters and biases are drawn uniformly from
    [-init_scale, init_scale] / sqrt(filter_len + 1); the output coefficients
    and offset start at zero.  With ``tied_bias`` every interior bias carries
    the equal-middle structure; the last layer's bias is always free.
    """
    if not isinstance(input_dim, int) or input_dim < 1:
        raise ValidationError("input_dim must be a positive integer")
    if not isinstance(filter_len, int) or filter_len < 1:
        raise ValidationError("filter_len must be a positive integer")
    if not isinstance(depth, int) or depth < 1:
        raise ValidationError("depth must be a positive integer")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError("seed must be a nonnegative integer")
    scale = float(init_scale) / math.sqrt(filter_len + 1.0)
    rng = np.random.default_rng(seed)
    layers = []
    width = input_dim
    for j in range(1, depth + 1):
        taps = rng.uniform(-scale, scale, filter_len + 1)
        width += filter_len
        if tied_bias and j < depth and width >= 2 * filter_len - 1:
            distinct = rng.uniform(-scale, scale, 2 * filter_len - 1)
            values = _expand_bias(distinct, "mid", filter_len, width)
            bias = BiasVector(values, tag="mid", mid_s=filter_len)
        else:
            bias = BiasVector(rng.uniform(-scale, scale, width))
        layers.append(ConvLayer(FilterSeq(taps), bias, None))
    return Dcnn(
        input_dim=input_dim,
        filter_len=filter_len,
        layers=layers,
        out_coeffs=np.zeros(width),
        out_offset=0.0,
        truncation=None,
    )


def loss(net: Dcnn, data: Dataset) -> float:
    """Mean squared error of the raw (untruncated) network on the data."""
    if net.input_dim != data.d:
        raise ValidationError("network input dimension does not match the data")
    raw = net if net.truncation is None else replace(net, truncation=None)
    preds = forward_batch(raw, data.xs)
    return float(np.mean((preds - data.ys) ** 2))


def grad(net: Dcnn, data: Dataset) -> GradientPack:
    """Exact gradient of ``loss`` with respect to every free parameter."""
    if net.input_dim != data.d:
        raise ValidationError("network input dimension does not match the data")
    state = _TrainState(net)
    return state.backward(data.xs, data.ys)


def _test_rmse(state: _TrainState, test: Dataset) -> float:
    preds = state.predict(test.xs)
    clipped = np.clip(preds, -test.M, test.M)
    return float(np.sqrt(np.mean((clipped - test.ys) ** 2)))


def fit(net: Dcnn, data: Dataset, test: Dataset, cfg: TrainConfig):
    """Train a copy of ``net`` on ``data``; returns (trained net, report).

    The loss trace records the full-data MSE after each epoch.  Test RMSE is
    computed once at the end on truncated predictions (clamped to the test
    set's label bound).  If the loss leaves the finite range, training stops
    with an error naming the last epoch that was still finite.
    """
    if not isinstance(cfg, TrainConfig):
        raise ValidationError("cfg must be a TrainConfig")
    if net.input_dim != data.d:
        raise ValidationError("network input dimension does not match the data")
    if test.d != data.d:
        raise ValidationError("test set dimension does not match the data")
    start = time.perf_counter()
    state = _TrainState(net)
    theta = state.flatten()
    n = data.n
    batch = cfg.batch if cfg.batch is not None else (n if n <= 1000 else 128)
    batch = min(batch, n)
    rng = np.random.default_rng(cfg.seed)
    head = state.head_slice()
    opt = cfg.optimizer
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    steps = 0
    trace = []
    # Overflow during a diverging run is expected and detected explicitly
    # below, so the elementwise warnings are silenced inside the loop.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n) if batch < n else np.arange(n)
            for lo in range(0, n, batch):
                idx = order[lo : lo + batch]
                pack = state.backward(data.xs[idx], data.ys[idx])
                g = pack.flatten()
                if cfg.head_only:
                    masked = np.zeros_like(g)
                    masked[head] = g[head]
                    g = masked
                steps += 1
                if opt.kind == "plain_sgd":
                    theta = theta - cfg.step_size * g
                else:
                    m1 = opt.beta1 * m1 + (1.0 - opt.beta1) * g
                    m2 = opt.beta2 * m2 + (1.0 - opt.beta2) * g * g
                    hat1 = m1 / (1.0 - opt.beta1**steps)
                    hat2 = m2 / (1.0 - opt.beta2**steps)
                    theta = theta - cfg.step_size * hat1 / (
                        np.sqrt(hat2) + opt.eps_adam
                    )
                state.load(theta)
            preds = state.predict(data.xs)
            mse = float(np.mean((preds - data.ys) ** 2))
            if not math.isfinite(mse):
                last = epoch - 1
                raise NumericalError(
                    f"training diverged at epoch {epoch}; "
                    f"last finite epoch was {last}"
                )
            trace.append(mse)
    report = TrainReport(
        train_mse=tuple(trace),
        test_rmse=_test_rmse(state, test),
        wall_time=time.perf_counter() - start,
    )
    return state.to_net(), report
