"""Constructive deepening: grow a teacher network into an interpolating student.

Given a teacher network and a dataset, `interpolate` builds a deeper student
network that reproduces every label exactly while agreeing with the teacher's
readout everywhere outside a thin slab around the data.  The student is built
from three stacked stages, each also available on its own:

1. `linear_feature_block` - a convolutional chain plus one downsampling step
   whose output lays out a chosen linear feature ``xi . x`` next to interleaved
   copies of the raw input coordinates, all shifted by one uniform constant.
2. `embed_teacher` - even-support filters that carry the teacher's layers on
   the even slots of the widened vector while the first slot keeps tracking
   the linear feature; no new free parameters are introduced.
3. `replication_block` - a long chain whose filters multiply out to the
   "ones at multiples of the block width" sequence, replicating the feature
   slot into a bank of shifted ReLU ramps (three per data point) while the
   teacher slots ride along unchanged up to one additive constant.

The output head then combines three ramps per data point into a hat function
over the projected feature, scaled by the residual the teacher leaves at that
point.  Off the union of hat supports the correction vanishes identically,
which is what preserves the teacher's predictions away from the data.

Numerical strategy: every hidden layer's bias is chosen so the pre-activation
equals payload plus a per-entry *guard* vector that certifiably dominates the
payload's magnitude.  ReLUs therefore never clip live lanes, lanes outside a
filter's support stay exactly zero, and the guard of one layer becomes the
additive shift that the next layer's bias converts again.  Guards are sized
from the running product of the layer filters, so they stay tight even for
chains hundreds of layers deep (uniform worst-case constants would overflow
double precision there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dcnn import BiasVector, ConvLayer, Dcnn, _apply_layer, forward_batch
from .errors import NumericalError, ValidationError
from .factorize import (
    _leja_angle_order,
    _replication_pair_angles,
    factor_sequence,
    replication_sequence,
)
from .seqconv import FilterSeq, as_filter

__all__ = [
    "Dataset",
    "InterpolationPlan",
    "Block",
    "build_block",
    "linear_feature_block",
    "embed_teacher",
    "replication_block",
    "normalize_teacher",
    "interpolate",
    "in_slab",
    "stack_blocks",
]

# Relative headroom added to every guard vector so float rounding inside the
# convolution chain can never push a pre-activation past its guard.
_GUARD_PAD = 1e-9

# Attempts at drawing a direction that separates all data projections.
_XI_MAX_RETRIES = 64

# Relative tolerance (vs. the replication sequence's l1 mass) on the product
# of the replication chain's filters.
_REPLICATION_RESID_TOL = 1e-7


def _float_array(values, what: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValidationError(f"{what} must be a {ndim}-D array")
    if arr.size == 0:
        raise ValidationError(f"{what} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def _positive_float(value, what: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{what} must be a positive finite number")
    return value


def _int_value(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"{what} must be an integer")
    return int(value)


@dataclass(frozen=True, eq=False)
class Dataset:
    """A labelled sample: rows of `xs` are inputs, `ys` the targets.

    `M` is the label bound: every |y| must be at most M.  Data points must be
    pairwise distinct because the interpolator separates them along a random
    direction.
    """

    xs: np.ndarray
    ys: np.ndarray
    M: float

    def __post_init__(self) -> None:
        xs = _float_array(self.xs, "xs", 2)
        ys = _float_array(self.ys, "ys", 1)
        if ys.size != xs.shape[0]:
            raise ValidationError("xs and ys must have the same number of rows")
        M = _positive_float(self.M, "M")
        if np.max(np.abs(ys)) > M:
            raise ValidationError("labels must satisfy |y| <= M")
        if np.unique(xs, axis=0).shape[0] != xs.shape[0]:
            raise ValidationError("duplicate data points")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "M", M)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True, eq=False)
class InterpolationPlan:
    """Everything the interpolating head needs, plus construction bookkeeping.

    Core fields: the projection direction `xi`, the sign and magnitude of the
    product of the teacher's leading filter taps, the slab half-width `eps`,
    the projected data `u`, the sorted threshold grid `t_grid` (three
    thresholds per data point: u-eps, u, u+eps), and the per-point residual
    `corrections` = y - teacher(x).

    The optional fields record how the student was assembled (stage depths,
    widths, the filter-length parameter) so parameter accounting can be
    reported; they stay None for hand-built plans.
    """

    xi: np.ndarray
    sign_wstar: float
    wstar_abs: float
    eps: float
    u: np.ndarray
    t_grid: np.ndarray
    corrections: np.ndarray
    eps_star: float | None = None
    s: int | None = None
    j1: int | None = None
    j2: int | None = None
    j3: int | None = None
    block_width: int | None = None
    final_width: int | None = None

    def __post_init__(self) -> None:
        xi = _float_array(self.xi, "xi", 1)
        u = _float_array(self.u, "u", 1)
        t_grid = _float_array(self.t_grid, "t_grid", 1)
        corrections = _float_array(self.corrections, "corrections", 1)
        if float(self.sign_wstar) not in (-1.0, 1.0):
            raise ValidationError("sign_wstar must be +1 or -1")
        wstar_abs = _positive_float(self.wstar_abs, "wstar_abs")
        eps = _positive_float(self.eps, "eps")
        n = u.size
        if corrections.size != n:
            raise ValidationError("corrections must have one entry per data point")
        if t_grid.size != 3 * n:
            raise ValidationError("t_grid must hold exactly 3n thresholds")
        if np.unique(u).size != n:
            raise ValidationError("projected data values u must be pairwise distinct")
        if not np.all(np.diff(t_grid) > 0.0):
            raise ValidationError("t_grid must be sorted with distinct entries")
        if self.eps_star is not None:
            eps_star = _positive_float(self.eps_star, "eps_star")
            if eps >= eps_star:
                raise ValidationError("eps must be smaller than eps_star")
            object.__setattr__(self, "eps_star", eps_star)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "sign_wstar", float(self.sign_wstar))
        object.__setattr__(self, "wstar_abs", wstar_abs)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t_grid", t_grid)
        object.__setattr__(self, "corrections", corrections)

    @property
    def n(self) -> int:
        return self.u.size

    def _require_metadata(self) -> None:
        if None in (self.s, self.j1, self.j2, self.j3, self.final_width):
            raise ValidationError(
                "plan does not carry construction metadata (built by hand?)"
            )

    def added_params_itemized(self) -> dict:
        """Free parameters the deepening adds on top of the teacher's own."""
        self._require_metadata()
        return {
            "head_coefficients": self.final_width,
            "head_offset": 1,
            "linear_block": self.j1 * (self.s + 2) + 1,
            "replication_bound": 1,
        }

    def added_free_params(self) -> int:
        """Total added free parameters: final_width + j1*(s+2) + 3."""
        self._require_metadata()
        return self.final_width + self.j1 * (self.s + 2) + 3


@dataclass(frozen=True, eq=False)
class Block:
    """A run of layers with certified exit structure.

    `bound_B` is the running additive constant at the block's exit (the value
    riding on the surviving slots).  `exit_shift` gives the full per-entry
    additive shift of the output, `exit_bound` a certified per-entry bound on
    |output - exit_shift|; entries that are exactly zero really are exactly
    zero.  `input_bound` echoes the sup-norm bound the block assumed on its
    payload input.  For `build_block` (whose final bias is caller-chosen)
    `exit_shift` instead records the additive constant present *before* the
    final bias is subtracted.
    """

    layers: tuple
    in_dim: int
    out_dim: int
    bound_B: float
    s: int
    exit_shift: np.ndarray | None = None
    exit_bound: np.ndarray | None = None
    input_bound: float | None = None
    free_params: int | None = None
    ramp_rows: np.ndarray | None = None
    teacher_rows: np.ndarray | None = None

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("a block needs at least one layer")
        in_dim = _int_value(self.in_dim, "in_dim")
        out_dim = _int_value(self.out_dim, "out_dim")
        s = _int_value(self.s, "s")
        if in_dim < 1 or s < 1:
            raise ValidationError("in_dim and s must be positive")
        width = in_dim
        for j, layer in enumerate(layers, start=1):
            if not isinstance(layer, ConvLayer):
                raise ValidationError(f"layer {j}: not a ConvLayer")
            if len(layer.filter) > s + 1:
                raise ValidationError(f"layer {j}: filter longer than s+1")
            width += s
            if layer.downsample is not None:
                if layer.downsample > width:
                    raise ValidationError(f"layer {j}: empty downsample")
                width //= layer.downsample
            if len(layer.bias) != width:
                raise ValidationError(f"layer {j}: bias length does not match width")
        if width != out_dim:
            raise ValidationError(
                f"out_dim {out_dim} does not match the width chain (got {width})"
            )
        bound_B = float(self.bound_B)
        if not math.isfinite(bound_B) or bound_B < 0.0:
            raise ValidationError("bound_B must be finite and nonnegative")
        for name in ("exit_shift", "exit_bound"):
            vec = getattr(self, name)
            if vec is not None:
                vec = _float_array(vec, name, 1)
                if vec.size != out_dim:
                    raise ValidationError(f"{name} must have length out_dim")
                object.__setattr__(self, name, vec)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "in_dim", in_dim)
        object.__setattr__(self, "out_dim", out_dim)
        object.__setattr__(self, "bound_B", bound_B)
        object.__setattr__(self, "s", s)

    @property
    def depth(self) -> int:
        return len(self.layers)


def stack_blocks(blocks, out_coeffs, out_offset: float, truncation=None) -> Dcnn:
    """Stack blocks (in order) into a single network with the given head."""
    blocks = list(blocks)
    if not blocks:
        raise ValidationError("need at least one block to stack")
    s = blocks[0].s
    width = blocks[0].in_dim
    layers = []
    for i, block in enumerate(blocks, start=1):
        if block.s != s:
            raise ValidationError(f"block {i}: filter-length parameter differs")
        if block.in_dim != width:
            raise ValidationError(
                f"block {i}: in_dim {block.in_dim} does not match previous out_dim {width}"
            )
        layers.extend(block.layers)
        width = block.out_dim
    return Dcnn(
        input_dim=blocks[0].in_dim,
        filter_len=s,
        layers=layers,
        out_coeffs=out_coeffs,
        out_offset=out_offset,
        truncation=truncation,
    )


def _pad_to(arr: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros(width)
    out[: arr.size] = arr
    return out


def _conv_to_width(taps: np.ndarray, vec: np.ndarray, s: int) -> np.ndarray:
    """Apply the layer convolution to `vec`, zero-padded to width len(vec)+s."""
    return _pad_to(np.convolve(taps, vec), vec.size + s)


def _guarded_layers(taps_list, in_width: int, s: int, kappa0, shift_in):
    """Build a chain of layers whose biases keep every ReLU inactive.

    The input is assumed to be payload + shift_in with |payload| <= kappa0
    entrywise.  After layer j the output is (the filters-so-far convolution of
    the payload) + guard_j, where guard_j = (1 + pad) * conv(|product of the
    first j filters|, kappa0) zero-padded to the layer width.  Each bias is
    the layer convolution of the previous shift minus the new guard, so the
    whole chain is linear on its payload.

    Returns (layers, guards, product) where `product` is the convolution of
    all filters (the chain's overall symbol).
    """
    kappa0 = np.asarray(kappa0, dtype=np.float64)
    shift = np.asarray(shift_in, dtype=np.float64)
    if kappa0.size != in_width or shift.size != in_width:
        raise ValidationError("kappa0 and shift_in must have length in_width")
    if np.any(kappa0 < 0.0):
        raise ValidationError("kappa0 must be entrywise nonnegative")
    layers = []
    guards = []
    prod = np.array([1.0])
    width = in_width
    for taps in taps_list:
        taps = np.asarray(taps, dtype=np.float64)
        width += s
        prod = np.convolve(prod, taps)
        guard = _pad_to(np.convolve(np.abs(prod), kappa0), width) * (1.0 + _GUARD_PAD)
        bias = _conv_to_width(taps, shift, s) - guard
        layers.append(ConvLayer(FilterSeq(taps), BiasVector(bias), None))
        guards.append(guard)
        shift = guard
    return layers, guards, prod


def build_block(W, s: int, K: int, C_shift, B0, last_bias) -> Block:
    """Factor the long filter W into a chain of short layers on inputs of
    dimension K, with uniform worst-case constants in every bias.

    The block expects inputs of the form U(x) + C_shift with ||U||_inf <= B0.
    Before the final bias is subtracted, the last layer's convolution output
    equals T^W U(x) plus a fixed shift vector (`exit_shift`): the product of
    the first J*-1 filter l1-norms times B0 times the last layer's
    convolution of the all-ones vector.  The caller chooses the final bias.

    Biases here use the classical uniform constants (products of filter
    l1-norms), which is simple and exact but grows exponentially with depth;
    the pipeline stages below use per-entry guards instead.
    """
    W = as_filter(W)
    s = _int_value(s, "s")
    if s < 2:
        raise ValidationError("filter length parameter s must be >= 2")
    K = _int_value(K, "K")
    if K < 1:
        raise ValidationError("input dimension K must be >= 1")
    B0 = _positive_float(B0, "B0")
    if np.isscalar(C_shift) or np.asarray(C_shift).ndim == 0:
        C = np.full(K, float(C_shift))
    else:
        C = np.asarray(C_shift, dtype=np.float64)
        if C.ndim != 1 or C.size != K:
            raise ValidationError("C_shift must be a scalar or a vector of length K")
    if not np.all(np.isfinite(C)):
        raise ValidationError("C_shift must be finite")

    nz = np.nonzero(W.coeffs)[0]
    degree = int(nz[-1]) if nz.size else 0
    j_star = max(1, math.ceil(degree / (s - 1)))
    fact = factor_sequence(W, s, pad_to=j_star)
    filters = fact.filters
    norms = [float(np.sum(np.abs(f.coeffs))) for f in filters]

    if isinstance(last_bias, BiasVector):
        last = last_bias
    else:
        last = BiasVector(np.asarray(last_bias, dtype=np.float64))
    if len(last) != K + j_star * s:
        raise ValidationError(
            f"last bias length must be {K + j_star * s} (K + J*s), got {len(last)}"
        )

    layers = []
    width = K
    running = 1.0  # product of filter l1-norms over layers before the current one
    exit_shift = None
    for j in range(1, j_star + 1):
        taps = filters[j - 1].coeffs
        in_width = width
        width += s
        if j == j_star:
            exit_shift = (
                _conv_to_width(taps, C, s)
                if j_star == 1
                else running * B0 * _conv_to_width(taps, np.ones(in_width), s)
            )
            bias = last
        elif j == 1:
            bias = BiasVector(_conv_to_width(taps, C, s) - norms[0] * B0)
        else:
            bias = BiasVector(
                running * B0 * _conv_to_width(taps, np.ones(in_width), s)
                - running * norms[j - 1] * B0
            )
        layers.append(ConvLayer(filters[j - 1], bias, None))
        running *= norms[j - 1]

    return Block(
        layers=tuple(layers),
        in_dim=K,
        out_dim=K + j_star * s,
        bound_B=running * B0,
        s=s,
        exit_shift=exit_shift,
        exit_bound=None,
        input_bound=B0,
        free_params=None,
    )


def linear_feature_block(xi, s: int, B0) -> Block:
    """First stage: expose xi.x and the raw coordinates behind one downsample.

    On any x with ||x||_inf <= B0 the block's output is
        [xi.x, x_1, 0, x_2, 0, ..., x_d, 0, ..., 0] + B * ones,
    where B is the block's uniform exit constant (`bound_B`).  The output
    width is 1 + floor(J1*s/d) > 2d; the block contributes J1*(s+2)+1 free
    parameters (J1 filters of s+1 taps, J1 tied biases, and the constant B).
    """
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim != 1 or xi.size == 0:
        raise ValidationError("xi must be a non-empty vector")
    if not np.all(np.isfinite(xi)):
        raise ValidationError("xi must be finite")
    d = xi.size
    s = _int_value(s, "s")
    if s < 2 or s > d:
        raise ValidationError("filter length parameter s must satisfy 2 <= s <= d")
    B0 = _positive_float(B0, "B0")

    # Target sequence, written high-degree-first as d basis blocks separated
    # by zero blocks, ending with xi itself; ascending coefficient order is
    # the reverse.  Its top tap (degree 2d^2-d) is always 1.
    desc_parts = []
    for r in range(d, 0, -1):
        e = np.zeros(d)
        e[r - 1] = 1.0
        desc_parts.append(e)
        if r > 1:
            desc_parts.append(np.zeros(d))
    desc_parts.append(xi)
    w_seq = np.concatenate(desc_parts)[::-1]

    j1 = math.ceil((2 * d * d - 1) / (s - 1))
    fact = factor_sequence(FilterSeq(w_seq), s, pad_to=j1)
    taps_list = [f.coeffs for f in fact.filters]

    kappa0 = np.full(d, B0)
    layers, guards, _prod = _guarded_layers(taps_list, d, s, kappa0, np.zeros(d))

    # Final layer: downsample by d, then shift everything by one uniform
    # constant that dominates every downsampled guard entry.
    last_taps = taps_list[-1]
    prev_guard = guards[-2] if j1 >= 2 else np.zeros(d)
    pre_bias = _conv_to_width(last_taps, prev_guard, s)
    guard_full = guards[-1]
    down_guard = guard_full[d - 1 :: d]
    b_exit = float(np.max(down_guard))
    bias_last = pre_bias[d - 1 :: d] - b_exit
    layers[-1] = ConvLayer(FilterSeq(last_taps), BiasVector(bias_last), d)

    w_out = (d + j1 * s) // d
    if w_out < 2 * d:
        raise NumericalError("linear feature block width fell below 2d")
    return Block(
        layers=tuple(layers),
        in_dim=d,
        out_dim=w_out,
        bound_B=b_exit,
        s=s,
        exit_shift=np.full(w_out, b_exit),
        exit_bound=down_guard.copy(),
        input_bound=B0,
        free_params=j1 * (s + 2) + 1,
    )


def normalize_teacher(teacher: Dcnn) -> Dcnn:
    """Rescale each teacher filter to unit l1-norm without changing the
    network's function (biases and head coefficients are rescaled to match,
    using the positive homogeneity of the ReLU).

    A normalized teacher keeps the embedded chain's constants balanced; the
    product of its leading taps has magnitude at most 1.
    """
    if not isinstance(teacher, Dcnn):
        raise ValidationError("teacher must be a Dcnn")
    if teacher.depth < 1:
        raise ValidationError("teacher must have at least one layer")
    new_layers = []
    running = 1.0
    for layer in teacher.layers:
        if layer.downsample is not None:
            raise ValidationError("teacher must not downsample")
        taps = layer.filter.coeffs
        if taps[0] == 0.0:
            raise ValidationError("zero leading filter tap")
        lam = float(np.sum(np.abs(taps)))
        running *= lam
        bias = BiasVector(
            layer.bias.values / running,
            tag=layer.bias.tag,
            mid_s=layer.bias.mid_s,
        )
        new_layers.append(ConvLayer(FilterSeq(taps / lam), bias, None))
    return Dcnn(
        input_dim=teacher.input_dim,
        filter_len=teacher.filter_len,
        layers=new_layers,
        out_coeffs=np.asarray(teacher.out_coeffs) * running,
        out_offset=teacher.out_offset,
        truncation=teacher.truncation,
    )


def embed_teacher(teacher: Dcnn, linear_block: Block, s: int) -> Block:
    """Second stage: carry the teacher on the even slots of the widened vector.

    Each teacher filter (length S+1) becomes an even-support filter of length
    2S+1 = s+1; teacher biases are copied onto the even rows.  After j of
    these layers, the output's first entry is (product of leading taps) * xi.x
    plus a running constant, entry 2k is exactly the teacher's layer-j output
    entry k, and every other entry is zero.  No new free parameters.
    """
    if not isinstance(teacher, Dcnn):
        raise ValidationError("teacher must be a Dcnn")
    if not isinstance(linear_block, Block):
        raise ValidationError("linear_block must be a Block")
    s = _int_value(s, "s")
    if s != 2 * teacher.filter_len:
        raise ValidationError(
            "filter length parameter s must be twice the teacher filter length"
        )
    if s != linear_block.s:
        raise ValidationError("linear_block was built with a different s")
    if teacher.depth < 1:
        raise ValidationError("teacher must have at least one layer")
    if teacher.input_dim != linear_block.in_dim:
        raise ValidationError("teacher input dimension does not match the block")
    if linear_block.exit_shift is None or linear_block.exit_bound is None:
        raise ValidationError("linear_block is missing exit metadata")
    if np.unique(linear_block.exit_shift).size != 1:
        raise ValidationError("linear_block exit shift must be uniform")
    for layer in teacher.layers:
        if layer.downsample is not None:
            raise ValidationError("teacher must not downsample")
        if layer.filter.coeffs[0] == 0.0:
            raise ValidationError("zero leading filter tap")

    d = teacher.input_dim
    cap_s = teacher.filter_len  # teacher filter parameter S; s == 2S
    k0 = linear_block.out_dim
    b_in = float(linear_block.exit_shift[0])
    b_xi = float(linear_block.exit_bound[0])  # certified bound on |xi.x|
    h_bound = float(linear_block.input_bound)  # bound on the teacher's input

    layers = []
    shift_prev = np.full(k0, b_in)
    b_head = b_in
    p_abs = 1.0
    width = k0
    for j, layer in enumerate(teacher.layers, start=1):
        t_taps = layer.filter.coeffs
        taps = np.zeros(s + 1)
        taps[0 : 2 * t_taps.size : 2] = t_taps
        in_width = width
        width += s

        base = _conv_to_width(taps, shift_prev, s)
        bias = base.copy()

        # Head slot: keep tracking the leading-tap product times xi.x.
        b_head_next = abs(float(t_taps[0])) * b_head
        bias[0] = base[0] - b_head_next

        # Teacher slots (1-based rows 2k): copy the teacher's bias.
        d_j = d + j * cap_s
        if 2 * d_j > width:
            raise NumericalError("teacher slots exceed the embedded width")
        teach_idx = 2 * np.arange(1, d_j + 1) - 1  # 0-based
        bias[teach_idx] = base[teach_idx] + layer.bias.values

        # Odd rows fed by the head slot: clip them to exact zero.
        for i in range(1, cap_s + 1):
            tap = float(taps[2 * i])
            if tap != 0.0:
                r = 2 * i  # 0-based index of 1-based row 2i+1
                bias[r] = base[r] + abs(tap) * p_abs * b_xi * (1.0 + _GUARD_PAD)

        layers.append(ConvLayer(FilterSeq(taps), BiasVector(bias), None))

        b_head = b_head_next
        p_abs *= abs(float(t_taps[0]))
        h_bound = float(np.sum(np.abs(t_taps))) * h_bound + float(
            np.max(np.abs(layer.bias.values))
        )
        shift_prev = np.zeros(width)
        shift_prev[0] = b_head

    d_out = d + teacher.depth * cap_s
    exit_shift = np.zeros(width)
    exit_shift[0] = b_head
    exit_bound = np.zeros(width)
    exit_bound[0] = p_abs * b_xi * (1.0 + _GUARD_PAD)
    exit_bound[2 * np.arange(1, d_out + 1) - 1] = h_bound
    return Block(
        layers=tuple(layers),
        in_dim=k0,
        out_dim=width,
        bound_B=b_head,
        s=s,
        exit_shift=exit_shift,
        exit_bound=exit_bound,
        input_bound=linear_block.input_bound,
        free_params=0,
    )


def replication_block(
    in_width: int,
    N: int,
    s: int,
    plan: InterpolationPlan,
    B0,
    *,
    shift_in=None,
    kappa_in=None,
    teacher_slots: int | None = None,
) -> Block:
    """Third stage: replicate the head slot into 3n shifted ReLU ramps.

    The chain's filters multiply out to the sequence with ones at multiples
    of `in_width` (N of them), so the final convolution stacks N copies of
    the input.  The final bias then turns copy k's head slot into the ramp
    |w*| * relu(sign(w*) xi.x - t_k) for the 3n thresholds of the plan, keeps
    every even slot 2k (teacher lanes) alive shifted by exactly B0, and clips
    every other entry to exact zero.

    `shift_in` is the additive shift riding on the block's input (defaults to
    B0 on the first slot only) and `kappa_in` a per-entry bound on the input
    payload (defaults to B0 everywhere); `teacher_slots` says how many leading
    even slots carry live values (defaults to in_width // 2).
    """
    in_width = _int_value(in_width, "in_width")
    if in_width < 1:
        raise ValidationError("in_width must be >= 1")
    N = _int_value(N, "N")
    if N < 1 or N % 2 == 0:
        raise ValidationError("replication count N must be odd")
    s = _int_value(s, "s")
    if s < 2:
        raise ValidationError("filter length parameter s must be >= 2")
    if s % 2 != 0:
        raise ValidationError("filter length parameter s must be even")
    if not isinstance(plan, InterpolationPlan):
        raise ValidationError("plan must be an InterpolationPlan")
    n = plan.n
    if N < 3 * n:
        raise ValidationError("replication count N must be at least 3n")
    B0 = _positive_float(B0, "B0")

    if teacher_slots is None:
        teacher_slots = in_width // 2
    teacher_slots = _int_value(teacher_slots, "teacher_slots")
    if teacher_slots < 0 or 2 * teacher_slots > in_width:
        raise ValidationError("teacher_slots must fit inside in_width")

    if shift_in is None:
        shift = np.zeros(in_width)
        shift[0] = B0
    else:
        shift = np.asarray(shift_in, dtype=np.float64)
        if shift.ndim == 0:
            shift = np.full(in_width, float(shift))
    if kappa_in is None:
        kappa0 = np.full(in_width, B0)
    else:
        kappa0 = np.asarray(kappa_in, dtype=np.float64)
    if shift.size != in_width or kappa0.size != in_width:
        raise ValidationError("shift_in and kappa_in must have length in_width")

    ramp_rows = np.arange(3 * n) * in_width  # 0-based rows (i-1)*in_width
    teacher_rows = 2 * np.arange(1, teacher_slots + 1) - 1  # 0-based rows 2k
    if np.intersect1d(ramp_rows, teacher_rows).size:
        raise ValidationError(
            "ramp and teacher slot indices collide; "
            "need in_width > 2 * teacher_slots"
        )

    j3 = math.ceil((N - 1) * in_width / (s - 1))
    angles = _replication_pair_angles(in_width, N)
    order = _leja_angle_order(angles)
    ordered = angles[order]
    q_per = s // 2
    n_filters = math.ceil(ordered.size / q_per) if ordered.size else 0
    if n_filters > j3:
        raise NumericalError("replication packing exceeded the layer budget")
    taps_list = [np.array([1.0])] * (j3 - n_filters)
    for b in range(n_filters):
        acc = np.array([1.0])
        for theta in ordered[b * q_per : (b + 1) * q_per]:
            acc = np.convolve(acc, np.array([1.0, -2.0 * math.cos(theta), 1.0]))
        taps_list.append(acc)

    layers, guards, prod = _guarded_layers(taps_list, in_width, s, kappa0, shift)

    target = replication_sequence(in_width, N).coeffs
    resid = float(np.max(np.abs(_pad_to(prod, target.size) - target)))
    if resid > _REPLICATION_RESID_TOL * N:
        raise NumericalError(
            f"replication filter product residual {resid:.3e} exceeds tolerance"
        )

    # Final bias: ramps on the head-slot copies, -B0 on the teacher lanes,
    # and the full guard everywhere else (clipping those rows to exact zero).
    w_out = in_width + j3 * s
    last_taps = taps_list[-1]
    prev_shift = guards[-2] if j3 >= 2 else shift
    k_last = _conv_to_width(last_taps, prev_shift, s)
    kappa_final = guards[-1]
    bias = k_last + kappa_final
    bias[ramp_rows] = k_last[ramp_rows] + plan.wstar_abs * plan.t_grid
    bias[teacher_rows] = k_last[teacher_rows] - B0
    layers[-1] = ConvLayer(FilterSeq(last_taps), BiasVector(bias), None)

    exit_shift = np.zeros(w_out)
    exit_shift[teacher_rows] = B0
    exit_bound = np.zeros(w_out)
    exit_bound[ramp_rows] = kappa_final[ramp_rows] + plan.wstar_abs * np.abs(
        plan.t_grid
    )
    exit_bound[teacher_rows] = kappa0[teacher_rows] * (1.0 + _GUARD_PAD)
    return Block(
        layers=tuple(layers),
        in_dim=in_width,
        out_dim=w_out,
        bound_B=B0,
        s=s,
        exit_shift=exit_shift,
        exit_bound=exit_bound,
        input_bound=float(np.max(kappa0)),
        free_params=1,
        ramp_rows=ramp_rows,
        teacher_rows=teacher_rows,
    )


def in_slab(plan: InterpolationPlan, X, eps: float | None = None) -> np.ndarray:
    """Boolean mask: which rows of X project within eps of some data point.

    Off-slab points (mask False) are exactly those where the interpolating
    correction vanishes and the student agrees with the teacher's readout.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != plan.xi.size:
        raise ValidationError("X must be a 2-D array with d columns")
    if eps is None:
        eps = plan.eps
    eps = _positive_float(eps, "eps")
    proj = plan.sign_wstar * (X @ plan.xi)
    dist = np.min(np.abs(proj[:, None] - plan.u[None, :]), axis=1)
    return dist < eps


def _forward_pre_final(layers, s: int, X: np.ndarray) -> np.ndarray:
    """Run X through all layers but the last, then apply the last layer's
    convolution without its bias: the pre-bias values the final bias sees."""
    H = X
    for layer in layers[:-1]:
        H = _apply_layer(s, layer, H)
    taps = layers[-1].filter.coeffs
    batch, d_prev = H.shape
    out = np.zeros((batch, d_prev + s))
    for k in range(taps.size):
        wk = taps[k]
        if wk != 0.0:
            out[:, k : k + d_prev] += wk * H
    return out


def interpolate(
    teacher: Dcnn,
    data: Dataset,
    s: int,
    seed: int,
    *,
    eps_frac: float = 0.5,
    n_rep: int | None = None,
    b0: float | None = None,
    calibrate: bool = True,
):
    """Deepen `teacher` into a student that interpolates `data` exactly.

    Returns (student, plan).  The student reproduces every label and agrees
    with the teacher's readout at any x whose projection sign(w*) xi.x stays
    at least eps away from every projected data point.

    Parameters: `eps_frac` scales the slab half-width relative to the largest
    admissible value (half the smallest projection gap); `n_rep` overrides
    the replication count N (odd, >= 3n; default: smallest odd >= 3n); `b0`
    overrides the stage-one input bound (default 1.25 * max ||x^i||_inf);
    `calibrate` re-measures the 3n ramp biases on the training data after
    construction so each hat function peaks at exactly 1 in floating point.
    """
    if not isinstance(teacher, Dcnn):
        raise ValidationError("teacher must be a Dcnn")
    if not isinstance(data, Dataset):
        raise ValidationError("data must be a Dataset")
    s = _int_value(s, "s")
    if s % 2 != 0:
        raise ValidationError("filter length parameter s must be even")
    if s != 2 * teacher.filter_len:
        raise ValidationError(
            "filter length parameter s must be twice the teacher filter length"
        )
    d = data.d
    n = data.n
    if teacher.input_dim != d:
        raise ValidationError("teacher input dimension does not match the data")
    if s < 2 or s > d:
        raise ValidationError("filter length parameter s must satisfy 2 <= s <= d")
    for layer in teacher.layers:
        if layer.downsample is not None:
            raise ValidationError("teacher must not downsample")
        if layer.filter.coeffs[0] == 0.0:
            raise ValidationError("zero leading filter tap")
    seed = _int_value(seed, "seed")
    if seed < 0:
        raise ValidationError("seed must be a nonnegative integer")
    eps_frac = float(eps_frac)
    if not (0.0 < eps_frac < 1.0) or not math.isfinite(eps_frac):
        raise ValidationError("eps_frac must lie in (0, 1)")

    # Teacher readout without truncation: the reference function the student
    # must preserve off-slab and correct at the data.
    teacher_eval = Dcnn(
        input_dim=teacher.input_dim,
        filter_len=teacher.filter_len,
        layers=list(teacher.layers),
        out_coeffs=teacher.out_coeffs,
        out_offset=teacher.out_offset,
        truncation=None,
    )
    fstar = forward_batch(teacher_eval, data.xs)
    corrections = data.ys - fstar

    hat = normalize_teacher(teacher)
    wstar = 1.0
    for layer in hat.layers:
        wstar *= float(layer.filter.coeffs[0])
    sign = 1.0 if wstar > 0 else -1.0
    wstar_abs = abs(wstar)

    max_norm = float(np.max(np.abs(data.xs)))
    if b0 is not None:
        B0 = _positive_float(b0, "b0")
    else:
        B0 = 1.25 * max_norm if max_norm > 0.0 else 1.0

    # Separating direction: all data projections must be distinct.  Among a
    # fixed number of seeded candidate draws, keep the one with the largest
    # minimal projection gap: the hat coefficients scale like 1/gap, so a
    # well-separated direction keeps them (and the float noise they amplify)
    # small.
    rng = np.random.default_rng(seed)
    xi = None
    proj = None
    best_gap = -math.inf
    for _ in range(_XI_MAX_RETRIES):
        g = rng.standard_normal(d)
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            continue
        cand = g / norm
        cand_proj = data.xs @ cand
        if n == 1:
            xi, proj = cand, cand_proj
            break
        gap = float(np.min(np.diff(np.sort(cand_proj))))
        if gap > best_gap:
            best_gap = gap
            xi, proj = cand, cand_proj
    if xi is not None and n >= 2:
        tol_proj = 1e-9 * max(1.0, float(np.max(np.abs(proj))))
        if best_gap <= tol_proj:
            xi = None
    if xi is None:
        raise NumericalError(
            f"could not find a separating direction in {_XI_MAX_RETRIES} draws"
        )

    u = sign * proj
    if n >= 2:
        eps_star = 0.5 * float(np.min(np.diff(np.sort(u))))
        eps = eps_frac * eps_star
    else:
        eps_star = None
        eps = eps_frac * max(1.0, abs(float(u[0])))
    t_grid = np.sort(np.concatenate((u - eps, u, u + eps)))

    if n_rep is None:
        N = 3 * n if (3 * n) % 2 == 1 else 3 * n + 1
    else:
        N = _int_value(n_rep, "n_rep")

    lin = linear_feature_block(xi, s, B0)
    emb = embed_teacher(hat, lin, s)
    d_teach = d + teacher.depth * teacher.filter_len
    b0_rep = max(float(emb.exit_shift[0]), float(np.max(emb.exit_bound)))

    j1 = lin.depth
    j2 = emb.depth
    j3 = math.ceil((N - 1) * emb.out_dim / (s - 1))
    plan = InterpolationPlan(
        xi=xi,
        sign_wstar=sign,
        wstar_abs=wstar_abs,
        eps=eps,
        u=u,
        t_grid=t_grid,
        corrections=corrections,
        eps_star=eps_star,
        s=s,
        j1=j1,
        j2=j2,
        j3=j3,
        block_width=emb.out_dim,
        final_width=emb.out_dim + j3 * s,
    )
    rep = replication_block(
        emb.out_dim,
        N,
        s,
        plan,
        b0_rep,
        shift_in=emb.exit_shift,
        kappa_in=emb.exit_bound,
        teacher_slots=d_teach,
    )
    if rep.out_dim != plan.final_width or rep.depth != j3:
        raise NumericalError("replication block geometry disagrees with the plan")

    layers = list(lin.layers) + list(emb.layers) + list(rep.layers)
    w_out = rep.out_dim
    w_block = emb.out_dim

    # Hat ℓ owns three consecutive thresholds in the sorted grid (triples
    # cannot interleave because 2*eps is below every projection gap).
    rank_of = np.empty(n, dtype=int)
    rank_of[np.argsort(u)] = np.arange(n)

    if calibrate:
        pre = _forward_pre_final(layers, s, data.xs)
        bias_vals = layers[-1].bias.values.copy()
        step = eps * wstar_abs
        for ell in range(n):
            p0 = 3 * rank_of[ell]
            expected = (u[ell] - eps, u[ell], u[ell] + eps)
            if tuple(t_grid[p0 : p0 + 3]) != expected:
                raise NumericalError("threshold grid ordering failed")
            rows = (p0 + np.arange(3)) * w_block
            measured = pre[ell, rows]
            bias_vals[rows[0]] = measured[0] - step
            bias_vals[rows[1]] = measured[1]
            bias_vals[rows[2]] = measured[2] + step
        layers[-1] = ConvLayer(layers[-1].filter, BiasVector(bias_vals), None)

    out_coeffs = np.zeros(w_out)
    for ell in range(n):
        p0 = 3 * rank_of[ell]
        rows = (p0 + np.arange(3)) * w_block
        c = corrections[ell] / (eps * wstar_abs)
        out_coeffs[rows] = (c, -2.0 * c, c)
    teach_rows = 2 * np.arange(1, d_teach + 1) - 1
    c_tilde = np.asarray(hat.out_coeffs)
    out_coeffs[teach_rows] = c_tilde
    out_offset = float(hat.out_offset) - b0_rep * float(np.sum(c_tilde))

    student = Dcnn(
        input_dim=d,
        filter_len=s,
        layers=layers,
        out_coeffs=out_coeffs,
        out_offset=out_offset,
        truncation=None,
    )
    return student, plan
