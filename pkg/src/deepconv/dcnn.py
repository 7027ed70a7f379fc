"""Zero-padded 1-D convolutional ReLU networks.

A network maps an input vector of length d through J layers; layer j convolves
with a filter supported in {0, ..., s} (so the width grows by s each layer,
except where a layer downsamples), optionally keeps every m-th entry, then
subtracts a bias and applies the ReLU componentwise.  A linear functional plus
offset reads the last layer out, optionally clamped to [-M, M].

Bias vectors carry a shape tag: ``free`` (every entry its own parameter) or
``mid`` (all entries with 1-based index in s..d_j-s+1 are one shared
parameter, which is how deep filter stacks keep their parameter count linear
in depth).  The tag is metadata used by validation, parameter counting and
serialization; the forward pass only reads the values.

Everything here is 0-based; `deepconv.seqconv` documents the index mapping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .seqconv import FilterSeq, as_filter

__all__ = [
    "BiasVector",
    "ConvLayer",
    "Dcnn",
    "forward",
    "forward_batch",
    "truncate",
    "count_free_params",
    "serialize",
    "deserialize",
]


def _readonly_vector(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValidationError(f"{what} must be one-dimensional")
    if arr.size == 0:
        raise ValidationError(f"{what} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BiasVector:
    """A bias vector plus its shape tag (``free`` or ``mid``).

    ``mid`` requires an explicit span ``mid_s``: all entries with 1-based
    index in mid_s..d-mid_s+1 must be exactly equal (checked by direct scan).
    """

    values: np.ndarray
    tag: str = "free"
    mid_s: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly_vector(self.values, "bias"))
        if self.tag not in ("free", "mid"):
            raise ValidationError(f"unknown bias shape tag {self.tag!r}")
        if self.tag == "mid":
            if self.mid_s is None or self.mid_s < 1:
                raise ValidationError("mid-tagged bias needs a positive span")
            mid = self.middle_block()
            if mid.size > 1 and not bool(np.all(mid == mid[0])):
                raise ValidationError(
                    "mid-tagged bias has unequal middle entries"
                )
        elif self.mid_s is not None:
            raise ValidationError("free bias must not carry a middle span")

    def middle_block(self) -> np.ndarray:
        """The entries required to be equal under the ``mid`` tag."""
        s = self.mid_s
        return self.values[s - 1 : self.values.size - s + 1]

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, BiasVector):
            return NotImplemented
        return (
            self.tag == other.tag
            and self.mid_s == other.mid_s
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        tag = self.tag if self.tag == "free" else f"mid({self.mid_s})"
        return f"BiasVector(len={self.values.size}, {tag})"


@dataclass(frozen=True, eq=False)
class ConvLayer:
    """One layer: filter taps, optional keep-every-m downsampling, bias."""

    filter: FilterSeq
    bias: BiasVector
    downsample: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "filter", as_filter(self.filter))
        if not isinstance(self.bias, BiasVector):
            object.__setattr__(self, "bias", BiasVector(self.bias))
        if self.downsample is not None:
            m = self.downsample
            if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
                raise ValidationError("downsample factor must be a positive integer")
            object.__setattr__(self, "downsample", int(m))

    def __eq__(self, other):
        if not isinstance(other, ConvLayer):
            return NotImplemented
        return (
            self.filter == other.filter
            and self.bias == other.bias
            and self.downsample == other.downsample
        )


def _check_index(value, what: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"{what} must be an integer")
    return int(value)


@dataclass(frozen=True, eq=False)
class Dcnn:
    """An immutable convolutional network.

    Width chain: d_0 = input_dim; layer j maps width w to w + filter_len, then
    to floor((w + filter_len)/m) when it downsamples by m.  Every bias length
    must equal its layer's output width, and the output coefficients must
    match the final width.  All of this is validated here, so a constructed
    (or deserialized) network is always internally consistent.
    """

    input_dim: int
    filter_len: int
    layers: tuple
    out_coeffs: np.ndarray
    out_offset: float
    truncation: float | None = None

    def __post_init__(self):
        d = _check_index(self.input_dim, "input_dim")
        s = _check_index(self.filter_len, "filter_len")
        object.__setattr__(self, "input_dim", d)
        object.__setattr__(self, "filter_len", s)
        if d < 1:
            raise ValidationError("input_dim must be >= 1")
        if s < 1:
            raise ValidationError("filter_len must be >= 1")
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("network must have at least one layer")
        for layer in layers:
            if not isinstance(layer, ConvLayer):
                raise ValidationError("layers must be ConvLayer instances")
        object.__setattr__(self, "layers", layers)

        width = d
        for j, layer in enumerate(layers, start=1):
            if len(layer.filter) > s + 1:
                raise ValidationError(
                    f"layer {j}: filter length {len(layer.filter)} exceeds "
                    f"filter_len + 1 = {s + 1}"
                )
            width = width + s
            if layer.downsample is not None:
                if layer.downsample > width:
                    raise ValidationError(f"layer {j}: empty downsample")
                width = width // layer.downsample
            if len(layer.bias) != width:
                raise ValidationError(
                    f"layer {j}: bias length {len(layer.bias)} does not match "
                    f"width {width}"
                )
            if layer.bias.tag == "mid" and layer.bias.mid_s != s:
                raise ValidationError(
                    f"layer {j}: mid-tagged bias span {layer.bias.mid_s} does "
                    f"not match filter_len {s}"
                )

        coeffs = _readonly_vector(self.out_coeffs, "out_coeffs")
        if coeffs.size != width:
            raise ValidationError(
                f"out_coeffs length {coeffs.size} does not match final width {width}"
            )
        object.__setattr__(self, "out_coeffs", coeffs)
        offset = float(self.out_offset)
        if not np.isfinite(offset):
            raise ValidationError("out_offset must be finite")
        object.__setattr__(self, "out_offset", offset)
        if self.truncation is not None:
            M = float(self.truncation)
            if not np.isfinite(M) or M <= 0:
                raise ValidationError("truncation level must be positive")
            object.__setattr__(self, "truncation", M)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def widths(self) -> list:
        """[d_0, d_1, ..., d_J] along the layer chain."""
        out = [self.input_dim]
        for layer in self.layers:
            w = out[-1] + self.filter_len
            if layer.downsample is not None:
                w = w // layer.downsample
            out.append(w)
        return out

    def __eq__(self, other):
        if not isinstance(other, Dcnn):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and self.filter_len == other.filter_len
            and self.layers == other.layers
            and np.array_equal(self.out_coeffs, other.out_coeffs)
            and self.out_offset == other.out_offset
            and self.truncation == other.truncation
        )

    def __repr__(self) -> str:
        return (
            f"Dcnn(d={self.input_dim}, s={self.filter_len}, "
            f"depth={self.depth}, widths={self.widths()!r})"
        )


# ------------------------------------------------------------------ forward


def _apply_layer(s: int, layer: ConvLayer, H: np.ndarray) -> np.ndarray:
    """One layer on a batch (rows are samples): conv, downsample, bias, ReLU.

    The convolution is accumulated tap by tap into a zero-initialized buffer
    of width d_prev + s, so filters shorter than s+1 behave exactly as if
    zero-padded, and windows of exact zeros stay exact zeros.
    """
    batch, d_prev = H.shape
    out = np.zeros((batch, d_prev + s), dtype=np.float64)
    taps = layer.filter.coeffs
    for k in range(taps.size):
        wk = taps[k]
        if wk != 0.0:
            out[:, k : k + d_prev] += wk * H
    if layer.downsample is not None:
        out = out[:, layer.downsample - 1 :: layer.downsample]
    out = out - layer.bias.values
    np.maximum(out, 0.0, out=out)
    return out


def forward(net: Dcnn, x):
    """Evaluate the network on one input.

    Returns (layer_outputs, y): layer_outputs[0] is the input itself and
    layer_outputs[j] is the j-th layer's output, so indexing matches depth;
    y is the scalar readout, clamped when the network carries a truncation
    level.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != net.input_dim:
        raise ValidationError(
            f"input length {x.size} does not match input_dim {net.input_dim}"
        )
    outs = [x]
    H = x[None, :]
    for layer in net.layers:
        H = _apply_layer(net.filter_len, layer, H)
        outs.append(H[0])
    y = float(H[0] @ net.out_coeffs + net.out_offset)
    if net.truncation is not None:
        y = truncate(y, net.truncation)
    return outs, y


def forward_batch(net: Dcnn, X, keep_layers: bool = False):
    """Evaluate the network on a batch (rows of X are inputs).

    Returns the vector of outputs; with keep_layers=True returns
    (layer_outputs, ys) where layer_outputs[j] stacks layer j's outputs
    row-for-row (index 0 is X itself).  Streaming (the default) holds only
    one layer in memory, which is what very deep networks need.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValidationError(
            f"input batch must have shape (n, {net.input_dim})"
        )
    H = X
    kept = [X] if keep_layers else None
    for layer in net.layers:
        H = _apply_layer(net.filter_len, layer, H)
        if keep_layers:
            kept.append(H)
    ys = H @ net.out_coeffs + net.out_offset
    if net.truncation is not None:
        M = net.truncation
        np.clip(ys, -M, M, out=ys)
    if keep_layers:
        return kept, ys
    return ys


def truncate(y, M):
    """Clamp to [-M, M]; scalars come back as floats, arrays elementwise."""
    M = float(M)
    if not np.isfinite(M) or M <= 0:
        raise ValidationError("truncation level must be positive")
    clipped = np.clip(y, -M, M)
    if np.ndim(y) == 0:
        return float(clipped)
    return clipped


# ----------------------------------------------------------- parameter count


def count_free_params(net: Dcnn) -> int:
    """Free parameters of a no-downsampling network whose interior biases are
    mid-tagged: 3s(J-1) + s + 2 + 2 d_J.

    Interior layers contribute s+1 filter taps and 2s-1 distinct bias values;
    the last layer contributes s+1 taps, d_J bias values, d_J output
    coefficients and the offset.  The tags are what make the count true, so
    networks tagged differently are rejected rather than miscounted.
    """
    for j, layer in enumerate(net.layers, start=1):
        if layer.downsample is not None:
            raise ValidationError(
                f"layer {j}: parameter count requires no downsampling"
            )
    for j, layer in enumerate(net.layers[:-1], start=1):
        if layer.bias.tag != "mid":
            raise ValidationError(
                f"layer {j}: parameter count requires a mid-tagged bias"
            )
    if net.layers[-1].bias.tag != "free":
        raise ValidationError(
            f"layer {net.depth}: parameter count requires a free last bias"
        )
    s = net.filter_len
    J = net.depth
    d_J = net.widths()[-1]
    return 3 * s * (J - 1) + s + 2 + 2 * d_J


# ------------------------------------------------------------- serialization

_NET_FIELDS = (
    "input_dim",
    "filter_len",
    "layers",
    "out_coeffs",
    "out_offset",
    "truncation",
)
_LAYER_FIELDS = ("filter", "bias", "bias_shape", "downsample")


def serialize(net: Dcnn) -> str:
    """One-line JSON with a fixed field order; floats keep full precision."""
    obj = {
        "input_dim": net.input_dim,
        "filter_len": net.filter_len,
        "layers": [
            {
                "filter": [float(v) for v in layer.filter.coeffs],
                "bias": [float(v) for v in layer.bias.values],
                "bias_shape": layer.bias.tag,
                "downsample": layer.downsample,
            }
            for layer in net.layers
        ],
        "out_coeffs": [float(v) for v in net.out_coeffs],
        "out_offset": float(net.out_offset),
        "truncation": None if net.truncation is None else float(net.truncation),
    }
    return json.dumps(obj, separators=(",", ":"))


def _require_fields(obj: dict, names, where: str = "") -> None:
    prefix = f"{where}: " if where else ""
    for name in names:
        if name not in obj:
            raise ValidationError(f"{prefix}missing field {name}")
    for name in obj:
        if name not in names:
            raise ValidationError(f"{prefix}unknown field {name}")


def _as_int(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValidationError(f"field {what} must be an integer")
    return value


def _as_float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"field {what} must be a number")
    return float(value)


def _as_float_list(value, what: str) -> list:
    if not isinstance(value, list):
        raise ValidationError(f"field {what} must be a list of numbers")
    return [_as_float(v, what) for v in value]


def deserialize(text: str) -> Dcnn:
    """Parse a serialized network; the result passes full construction
    validation, so anything returned is internally consistent."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(obj, dict):
        raise ValidationError("parse error: top level must be an object")
    _require_fields(obj, _NET_FIELDS)

    input_dim = _as_int(obj["input_dim"], "input_dim")
    filter_len = _as_int(obj["filter_len"], "filter_len")
    if not isinstance(obj["layers"], list) or not obj["layers"]:
        raise ValidationError("field layers must be a non-empty list")

    layers = []
    for idx, entry in enumerate(obj["layers"], start=1):
        where = f"layer {idx}"
        if not isinstance(entry, dict):
            raise ValidationError(f"{where}: must be an object")
        _require_fields(entry, _LAYER_FIELDS, where)
        taps = _as_float_list(entry["filter"], f"{where} filter")
        bias_vals = _as_float_list(entry["bias"], f"{where} bias")
        shape = entry["bias_shape"]
        if shape not in ("free", "mid"):
            raise ValidationError(
                f"{where}: bias_shape must be \"free\" or \"mid\""
            )
        down = entry["downsample"]
        if down is not None:
            down = _as_int(down, f"{where} downsample")
        bias = BiasVector(
            bias_vals,
            tag=shape,
            mid_s=filter_len if shape == "mid" else None,
        )
        layers.append(ConvLayer(FilterSeq(taps), bias, down))

    return Dcnn(
        input_dim=input_dim,
        filter_len=filter_len,
        layers=tuple(layers),
        out_coeffs=_as_float_list(obj["out_coeffs"], "out_coeffs"),
        out_offset=_as_float(obj["out_offset"], "out_offset"),
        truncation=(
            None
            if obj["truncation"] is None
            else _as_float(obj["truncation"], "truncation")
        ),
    )
