"""Factor a long sequence into a convolution of short filters.

A sequence W of degree V, viewed through its polynomial symbol
W~(z) = sum_k W_k z^k, factors into real filters each supported in
{0, ..., s} by grouping the symbol's roots: conjugate pairs become real
quadratics, real roots become linear pieces, and pieces are packed into
factors of degree <= s.  Sequential packing guarantees at most
ceil(V/(s-1)) factors; delta filters pad the list up to an exact requested
count when asked.

The grouping is not unique; this module fixes one deterministic choice:
pieces are taken in Leja order (each next piece maximizes the product of
distances of its roots to all roots already placed), which keeps the
partial products of the factors well-scaled — that matters a great deal
once factors are turned into network layers whose intermediate values
track those partial products.

The replication sequence (ones at multiples of a block width) has a fully
closed-form root set on the unit circle; `replication_roots` provides it so
that no numeric root finding is ever needed on that path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NumericalError, ValidationError
from .seqconv import FilterSeq, as_filter

__all__ = [
    "SymbolPoly",
    "FactorizationResult",
    "find_roots",
    "factor_sequence",
    "replication_sequence",
    "replication_roots",
]

#: acceptance threshold for |p(root)|, relative to the evaluation scale
#: sum_k |c_k| max(1, |root|)^k — the l1 norm of the coefficients whenever the
#: root lies in the closed unit disc
TOL_ROOT = 1e-10
#: matching tolerance when pairing a root with its complex conjugate
TOL_CONJ = 1e-7
#: hard refusal: symbols beyond this degree are too ill-conditioned to factor honestly
MAX_DEGREE = 4096
#: companion-matrix eigenvalues below this degree; Durand-Kerner polish above
COMPANION_MAX = 64

_DK_MAX_ITER = 500


class SymbolPoly:
    """Polynomial view of a sequence: coeffs[k] is the z^k coefficient.

    Trailing zeros of the sequence are trimmed so the leading coefficient is
    nonzero; an all-zero sequence has no polynomial symbol and is rejected.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs) -> None:
        arr = np.asarray(as_filter(coeffs).coeffs, dtype=np.float64)
        nz = np.nonzero(arr)[0]
        if nz.size == 0:
            raise ValidationError("zero sequence has no polynomial symbol")
        arr = arr[: nz[-1] + 1].copy()
        arr.flags.writeable = False
        self.coeffs = arr

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, z):
        return npoly.polyval(z, self.coeffs)

    def __repr__(self) -> str:
        return f"SymbolPoly({self.coeffs.tolist()!r})"


@dataclass
class FactorizationResult:
    """Filters whose convolution (in list order) reproduces the target sequence."""

    filters: list[FilterSeq]
    target_len: int
    residual: float

    def reconvolved(self) -> np.ndarray:
        """Convolve all filters back together, zero-padded to target_len."""
        acc = np.array([1.0])
        for f in self.filters:
            acc = np.convolve(acc, f.coeffs)
        out = np.zeros(self.target_len)
        out[: acc.size] = acc[: self.target_len]
        return out


def _newton_polish(coeffs: np.ndarray, roots: np.ndarray, steps: int = 3) -> np.ndarray:
    """A few guarded Newton steps per root; keep an iterate only if |p| drops."""
    dcoeffs = npoly.polyder(coeffs)
    z = roots.astype(np.complex128).copy()
    for _ in range(steps):
        pz = npoly.polyval(z, coeffs)
        dpz = npoly.polyval(z, dcoeffs)
        safe = np.abs(dpz) > 0
        step = np.zeros_like(z)
        step[safe] = pz[safe] / dpz[safe]
        cand = z - step
        better = np.abs(npoly.polyval(cand, coeffs)) < np.abs(pz)
        z[better] = cand[better]
    return z


def _durand_kerner(coeffs: np.ndarray, seeds: np.ndarray, tol_abs: float) -> np.ndarray:
    """Simultaneous root iteration on a monic polynomial, from given seeds."""
    lead = coeffs[-1]
    with np.errstate(all="ignore"):
        monic = coeffs / lead
        stop = tol_abs / abs(lead) if lead != 0 else 0.0
    z = seeds.astype(np.complex128).copy()
    best = z.copy()
    best_res = float(np.max(np.abs(npoly.polyval(z, monic))))
    for _ in range(_DK_MAX_ITER):
        pz = npoly.polyval(z, monic)
        res = float(np.max(np.abs(pz)))
        if res < best_res:
            best, best_res = z.copy(), res
        if res <= stop:
            break
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        denom = np.prod(diff, axis=1)
        denom[denom == 0] = 1e-300
        z = z - pz / denom
        if not np.all(np.isfinite(z)):
            z = best.copy()
            break
    return best


def find_roots(p) -> np.ndarray:
    """All complex roots (with multiplicity) of the symbol polynomial.

    Each returned root r is certified by |p(r)| <= TOL_ROOT * S(r), where
    S(r) = sum_k |c_k| max(1, |r|)^k is the float64 evaluation scale of p
    at r.  For roots in the closed unit disc, S(r) is exactly the l1 norm
    of the coefficients; outside the disc the |r|^k growth is what merely
    evaluating p already costs in float64, so no tighter certificate is
    attainable at any degree.  Raises NumericalError with the worst
    relative residual when the certificate cannot be met.
    """
    if not isinstance(p, SymbolPoly):
        p = SymbolPoly(p)
    if p.degree < 1:
        raise ValidationError("constant symbol has no roots")
    # scale-invariant normalization: same roots, same relative residuals,
    # and the companion matrix never sees overflowing entries
    coeffs = p.coeffs / np.max(np.abs(p.coeffs))

    # companion-matrix eigenvalues; np.roots expects highest-degree first
    seeds = None
    try:
        with np.errstate(all="ignore"):
            cand = np.roots(coeffs[::-1])
        if cand.size == p.degree and bool(np.all(np.isfinite(cand))):
            seeds = cand.astype(np.complex128)
    except np.linalg.LinAlgError:
        seeds = None
    companion_ok = seeds is not None
    if not companion_ok:
        # degenerate coefficient range: seed a unit circle and let the
        # residual certificate decide whether anything was actually found
        k = np.arange(p.degree)
        seeds = np.exp(2j * np.pi * (k + 0.25) / p.degree)

    tol_abs = TOL_ROOT * float(np.sum(np.abs(coeffs)))
    if p.degree > COMPANION_MAX or not companion_ok:
        roots = _durand_kerner(coeffs, seeds, tol_abs)
    else:
        roots = seeds
    roots = _newton_polish(coeffs, roots)

    resid = np.abs(npoly.polyval(roots, coeffs))
    growth = np.maximum(1.0, np.abs(roots))
    with np.errstate(over="ignore"):
        scale = np.power(growth[:, None], np.arange(coeffs.size)[None, :]) @ np.abs(
            coeffs
        )
    ok = np.isfinite(resid) & (resid <= TOL_ROOT * scale)
    if not bool(np.all(ok)):
        with np.errstate(invalid="ignore"):
            rel = np.where(np.isfinite(resid), resid / scale, np.inf)
        raise NumericalError(
            f"root finding did not converge: worst residual "
            f"{float(np.max(rel)):.3e} of the evaluation scale exceeds "
            f"tolerance {TOL_ROOT:.1e}"
        )
    # deterministic order for reproducibility
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


@dataclass
class _Piece:
    """A real factor atom: one real root (degree 1) or a conjugate pair (degree 2)."""

    coeffs: np.ndarray  # ascending, monic
    roots: tuple  # the complex roots this piece accounts for

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1


def _pair_conjugates(roots: np.ndarray) -> list[_Piece]:
    """Split roots into real linears and conjugate-pair quadratics."""
    reals = []
    upper = []
    lower = []
    for z in roots:
        if abs(z.imag) <= TOL_CONJ * max(1.0, abs(z)):
            reals.append(z.real)
        elif z.imag > 0:
            upper.append(z)
        else:
            lower.append(z)
    if len(upper) != len(lower):
        raise NumericalError(
            "conjugate pairing failed: unbalanced complex roots "
            f"({len(upper)} upper vs {len(lower)} lower half-plane)"
        )
    pieces: list[_Piece] = []
    lower_left = list(lower)
    for u in sorted(upper, key=lambda z: (z.real, z.imag)):
        target = u.conjugate()
        best_i = min(range(len(lower_left)), key=lambda i: abs(lower_left[i] - target))
        mate = lower_left[best_i]
        if abs(mate - target) > TOL_CONJ * max(1.0, abs(u)):
            raise NumericalError(
                f"conjugate pairing failed: no mate for root {u!r} within {TOL_CONJ}"
            )
        del lower_left[best_i]
        zm = (u + mate.conjugate()) / 2.0
        quad = np.array([zm.real**2 + zm.imag**2, -2.0 * zm.real, 1.0])
        pieces.append(_Piece(quad, (zm, zm.conjugate())))
    for r in sorted(reals):
        pieces.append(_Piece(np.array([-r, 1.0]), (complex(r, 0.0),)))
    return pieces


def _leja_order(pieces: list[_Piece]) -> list[_Piece]:
    """Order pieces so each next one maximizes the product of distances of its
    roots to all roots already placed (Leja ordering).

    This keeps partial products of the resulting factors from building up the
    huge intermediate coefficients that a naive ordering produces.
    """
    if len(pieces) <= 1:
        return list(pieces)
    remaining = list(range(len(pieces)))
    # start with the piece holding the largest-modulus root
    start = max(
        remaining,
        key=lambda i: (max(abs(r) for r in pieces[i].roots), -i),
    )
    order = [start]
    remaining.remove(start)
    scores = {i: 0.0 for i in remaining}
    placed_roots = list(pieces[start].roots)

    def add_scores(new_roots):
        for i in scores:
            s = 0.0
            for pr in pieces[i].roots:
                for nr in new_roots:
                    s += math.log(max(abs(pr - nr), 1e-300))
            scores[i] += s

    add_scores(placed_roots)
    while remaining:
        nxt = max(remaining, key=lambda i: (scores[i], -i))
        order.append(nxt)
        remaining.remove(nxt)
        del scores[nxt]
        add_scores(pieces[nxt].roots)
    return [pieces[i] for i in order]


def factor_sequence(W, s: int, pad_to: int | None = None) -> FactorizationResult:
    """Factor W into real filters each of length <= s+1.

    At most ceil(deg/(s-1)) filters are produced; with `pad_to`, delta filters
    are prepended so that exactly pad_to filters are returned.  The overall
    scalar (the symbol's leading coefficient) sits entirely on the first
    filter; all later filters are monic.
    """
    W = as_filter(W)
    if s < 2:
        raise ValidationError("filter length parameter s must be >= 2")
    target_len = len(W)

    sym_arr = W.coeffs
    nz = np.nonzero(sym_arr)[0]
    if nz.size == 0:
        # all-zero sequence: keep it as a single (zero) filter if short enough
        if target_len <= s + 1:
            filters = [W]
            return _padded(filters, pad_to, W, target_len, residual=0.0)
        raise ValidationError("cannot factor an all-zero sequence longer than s+1")
    degree = int(nz[-1])
    if degree > MAX_DEGREE:
        raise ValidationError(
            f"symbol degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )

    if target_len <= s + 1:
        return _padded([W], pad_to, W, target_len, residual=0.0)

    sym = SymbolPoly(W.coeffs)
    roots = find_roots(sym)
    pieces = _leja_order(_pair_conjugates(roots))

    # sequential packing: each closed bin carries degree >= s-1, so the filter
    # count stays within ceil(degree/(s-1))
    bins: list[list[_Piece]] = []
    current: list[_Piece] = []
    room = s
    for piece in pieces:
        if piece.degree > room:
            bins.append(current)
            current, room = [], s
        current.append(piece)
        room -= piece.degree
    if current:
        bins.append(current)
    max_count = math.ceil(degree / (s - 1))
    if len(bins) > max_count:
        raise NumericalError(
            f"packing produced {len(bins)} filters, more than the bound {max_count}"
        )

    filters = []
    for pieces_in_bin in bins:
        acc = np.array([1.0])
        for piece in pieces_in_bin:
            acc = np.convolve(acc, piece.coeffs)
        filters.append(FilterSeq(acc))
    lead = float(sym.coeffs[-1])

    result = _padded(filters, pad_to, W, target_len, residual=None, lead=lead)
    return result


def _padded(filters, pad_to, W, target_len, residual, lead=None):
    if pad_to is not None:
        if pad_to < len(filters):
            raise ValidationError(
                f"pad_to too small: need at least {len(filters)} filters"
            )
        filters = [FilterSeq([1.0])] * (pad_to - len(filters)) + list(filters)
    else:
        filters = list(filters)
    if lead is not None and lead != 1.0:
        filters[0] = FilterSeq(filters[0].coeffs * lead)
    result = FactorizationResult(filters=filters, target_len=target_len, residual=0.0)
    if residual is None:
        recon = result.reconvolved()
        ref = np.zeros(target_len)
        ref[: len(W)] = W.coeffs
        result.residual = float(np.max(np.abs(recon - ref)))
    else:
        result.residual = residual
    return result


def replication_sequence(block_width: int, N: int) -> FilterSeq:
    """The sequence with ones at 0, w, 2w, ..., (N-1)w and zeros elsewhere."""
    if block_width < 1:
        raise ValidationError("block_width must be >= 1")
    if N < 1:
        raise ValidationError("N must be >= 1")
    if N % 2 == 0:
        raise ValidationError("replication count N must be odd")
    out = np.zeros((N - 1) * block_width + 1)
    out[::block_width] = 1.0
    return FilterSeq(out)


def replication_roots(block_width: int, N: int) -> np.ndarray:
    """Closed-form roots of the replication symbol: e^{2 pi i (l + jN)/(N w)}
    for l = 1..N-1 and j = 0..w-1.  Exactly (N-1)*w roots, all on the unit
    circle; bypasses numeric root finding entirely.
    """
    if block_width < 1:
        raise ValidationError("block_width must be >= 1")
    if N < 1:
        raise ValidationError("N must be >= 1")
    if N % 2 == 0:
        raise ValidationError("replication count N must be odd")
    ls = np.arange(1, N)
    js = np.arange(block_width)
    expo = (ls[None, :] + js[:, None] * N).ravel()
    return np.exp(2j * np.pi * expo / (N * block_width))


def _replication_pair_angles(block_width: int, N: int) -> np.ndarray:
    """Angles in (0, pi) of the conjugate-pair quadratics of the replication
    symbol: theta = 2 pi (l + jN)/(N w) for l = 1..(N-1)/2, j = 0..w-1.

    Each angle stands for the real quadratic [1, -2 cos theta, 1]; the full
    root set is these angles plus their reflections.
    """
    ls = np.arange(1, (N - 1) // 2 + 1)
    js = np.arange(block_width)
    expo = (ls[None, :] + js[:, None] * N).ravel()
    return 2.0 * np.pi * expo / (N * block_width)


def _leja_angle_order(angles: np.ndarray) -> np.ndarray:
    """Greedy Leja ordering of unit-circle conjugate pairs given by angles.

    Starts from the angle nearest pi/2 and repeatedly picks the pair
    {e^{i a}, e^{-i a}} maximizing the summed log-distance to every root
    already chosen.  Returns the permutation indices.
    """
    angles = np.asarray(angles, dtype=np.float64)
    n = angles.size
    if n <= 1:
        return np.arange(n)
    pts = np.exp(1j * angles)
    remaining = np.arange(n)
    start = int(np.argmin(np.abs(angles - np.pi / 2)))
    order = [start]
    remaining = remaining[remaining != start]
    scores = np.zeros(n)

    def add(root):
        d_up = np.abs(pts[remaining] - root)
        d_dn = np.abs(np.conj(pts[remaining]) - root)
        scores[remaining] += np.log(np.maximum(d_up, 1e-300))
        scores[remaining] += np.log(np.maximum(d_dn, 1e-300))

    add(pts[start])
    add(np.conj(pts[start]))
    while remaining.size:
        k = int(np.argmax(scores[remaining]))
        idx = int(remaining[k])
        order.append(idx)
        remaining = np.delete(remaining, k)
        add(pts[idx])
        add(np.conj(pts[idx]))
    return np.array(order)
