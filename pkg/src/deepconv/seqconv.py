"""Finitely supported sequences, zero-padded 1-D convolution, and downsampling.

A filter is a finitely supported real sequence w with support in
{0, 1, ..., len-1}; entries outside that range are implicitly zero
(zero-padding).  Convolving a length-(s+1) filter with a length-d vector
therefore yields a length-(d+s) vector, realized by the sparse Toeplitz
matrix T^w with entries (T^w)[i, k] = w[i-k].

Index convention: the classical presentation of these operators is 1-based;
everything here is stored 0-based.  The only place the shift matters is
`downsample`, which keeps the m-th, 2m-th, ... entries in 1-based terms,
i.e. indices m-1, 2m-1, ... of the stored array.

All arithmetic is float64; 32-bit precision is not enough once filter
factorization (see `factorize`) enters the picture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "FilterSeq",
    "ConvMatrix",
    "as_filter",
    "convolve_seq",
    "apply_conv",
    "materialize",
    "downsample",
]


class FilterSeq:
    """A finitely supported real sequence; entry k holds the tap w_k."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs) -> None:
        arr = np.asarray(coeffs, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("filter coefficients must be one-dimensional")
        if arr.size == 0:
            raise ValidationError("filter must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("filter coefficients must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        self.coeffs = arr

    @property
    def degree(self) -> int:
        """Highest index of the stored support (len - 1); trailing zeros count."""
        return self.coeffs.size - 1

    def l1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def __len__(self) -> int:
        return self.coeffs.size

    def __getitem__(self, k: int) -> float:
        return float(self.coeffs[k])

    def __iter__(self):
        return iter(self.coeffs.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FilterSeq):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and bool(
            np.all(self.coeffs == other.coeffs)
        )

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self) -> str:
        return f"FilterSeq({self.coeffs.tolist()!r})"


def as_filter(w) -> FilterSeq:
    """Coerce a FilterSeq or any 1-D array-like into a FilterSeq."""
    if isinstance(w, FilterSeq):
        return w
    return FilterSeq(w)


@dataclass(frozen=True)
class ConvMatrix:
    """The Toeplitz matrix T^w realizing zero-padded convolution by `filter`.

    Shape is (in_dim + degree) x in_dim with entry (i, k) = w[i-k] whenever
    0 <= i-k <= degree and 0 otherwise.  Kept implicit; `dense()` materializes
    it for tests and small problems only.
    """

    filter: FilterSeq
    in_dim: int

    def __post_init__(self):
        if self.in_dim < 1:
            raise ValidationError("in_dim must be >= 1")

    @property
    def out_dim(self) -> int:
        return self.in_dim + self.filter.degree

    def entry(self, i: int, k: int) -> float:
        j = i - k
        if 0 <= j <= self.filter.degree:
            return float(self.filter.coeffs[j])
        return 0.0

    def dense(self) -> np.ndarray:
        return materialize(self.filter, self.in_dim)

    def __matmul__(self, x) -> np.ndarray:
        return apply_conv(self.filter, x)


def convolve_seq(w, v) -> FilterSeq:
    """Convolution of two sequences: (w*v)[i] = sum_k w[i-k] v[k].

    Result length is len(w) + len(v) - 1; no trimming of zeros either side.
    """
    w = as_filter(w)
    v = as_filter(v)
    return FilterSeq(np.convolve(w.coeffs, v.coeffs))


def apply_conv(w, x) -> np.ndarray:
    """Apply T^w to a vector x of length d, giving a vector of length d+degree.

    Equivalent to materialize(w, d) @ x but computed by sliding dot products,
    never forming the matrix.
    """
    w = as_filter(w)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("input vector must be 1-D and non-empty")
    return np.convolve(w.coeffs, x)


def materialize(w, in_dim: int) -> np.ndarray:
    """Dense (in_dim + degree) x in_dim Toeplitz matrix for the filter w."""
    w = as_filter(w)
    if in_dim < 1:
        raise ValidationError("in_dim must be >= 1")
    out_dim = in_dim + w.degree
    mat = np.zeros((out_dim, in_dim))
    for k in range(in_dim):
        mat[k : k + w.degree + 1, k] = w.coeffs
    return mat


def downsample(v, m: int) -> np.ndarray:
    """Keep every m-th entry of v (1-based: entries m, 2m, ...).

    Output length is floor(len(v)/m); m must satisfy 1 <= m <= len(v).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError("downsample expects a 1-D vector")
    if m < 1:
        raise ValidationError("downsample scale must be >= 1")
    if m > v.size:
        raise ValidationError("empty downsample")
    return v[m - 1 :: m].copy()
