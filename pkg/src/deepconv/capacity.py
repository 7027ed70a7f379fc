"""Capacity and learning-rate bound evaluators.

Four closed-form bounds for ReLU (more generally, piecewise-polynomial)
convolutional networks:

* a pseudo-dimension bound for a general layered architecture described by an
  :class:`ArchSpec` (base-2 logs),
* its specialization to the deep-convolutional layout, in an explicit
  pre-constant form and in a compact ``c0``-constant form (natural log),
* a log-covering-number bound driven by the pseudo-dimension (natural log),
* an excess-error rate bound in sample size, dimension and depth
  (natural log).

The absolute constants ``c0`` and ``C`` appearing in the compact forms are
not pinned down by any derivation; they are caller-supplied parameters with
default value 1.0, and results scale linearly in them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

__all__ = [
    "ArchSpec",
    "BoundReport",
    "dcnn_arch_spec",
    "r_constant",
    "pdim_general",
    "pdim_dcnn",
    "covering_log_bound",
    "rate_bound_theorem2",
    "evaluate_bounds",
]


def _positive_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{what} must be an integer")
    if value < 1:
        raise ValidationError(f"{what} must be positive")
    return value


@dataclass(frozen=True)
class ArchSpec:
    """Architecture summary the pseudo-dimension bound reads.

    widths[j-1] is layer j's output width d_j; param_counts[j-1] is the number
    K_j of free parameters feeding layer j.  ``pieces`` and ``degree`` describe
    the activation: a continuous piecewise-polynomial function with at most
    ``pieces`` pieces of degree at most ``degree`` (ReLU has both equal 1).
    """

    depth: int
    widths: tuple
    param_counts: tuple
    pieces: int = 1
    degree: int = 1

    def __post_init__(self):
        J = _positive_int(self.depth, "depth")
        widths = tuple(_positive_int(w, "width") for w in self.widths)
        counts = tuple(_positive_int(k, "param count") for k in self.param_counts)
        if len(widths) != J or len(counts) != J:
            raise ValidationError(
                "widths and param_counts must each have one entry per layer"
            )
        _positive_int(self.pieces, "pieces")
        _positive_int(self.degree, "degree")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "param_counts", counts)

    @property
    def total_params(self) -> int:
        return sum(self.param_counts)


def dcnn_arch_spec(J: int, S: int, d: int) -> ArchSpec:
    """The deep-convolutional layout with ReLU: widths d_j = d + jS; interior
    layers carry 3S free parameters (S+1 taps plus 2S-1 distinct bias values),
    the last layer S+1+d+JS (its taps plus a free bias)."""
    J = _positive_int(J, "depth J")
    S = _positive_int(S, "filter length S")
    d = _positive_int(d, "input dimension d")
    widths = tuple(d + j * S for j in range(1, J + 1))
    counts = tuple(3 * S for _ in range(J - 1)) + (S + 1 + d + J * S,)
    return ArchSpec(depth=J, widths=widths, param_counts=counts)


def r_constant(spec: ArchSpec) -> float:
    """R = sum_{i=0..J} theta^i + sum_{i=1..J} d_i * p * sum_{t<i} theta^t."""
    theta, p = spec.degree, spec.pieces
    J = spec.depth
    R = sum(theta**i for i in range(J + 1))
    for i in range(1, J + 1):
        R += spec.widths[i - 1] * p * sum(theta**t for t in range(i))
    return float(R)


def pdim_general(spec: ArchSpec) -> float:
    """Pseudo-dimension bound for a general layered piecewise-polynomial
    architecture (logs base 2):

        J + 1 + (d_J + sum_j (J - j + 2) K_j)
              * (log2(4 e R) + log2 log2(2 e R)).
    """
    J = spec.depth
    R = r_constant(spec)
    coef = spec.widths[-1] + sum(
        (J - j + 2) * spec.param_counts[j - 1] for j in range(1, J + 1)
    )
    e = math.e
    return J + 1 + coef * (math.log2(4 * e * R) + math.log2(math.log2(2 * e * R)))


def pdim_dcnn(J: int, S: int, d: int, c0: float = 1.0):
    """Pseudo-dimension of the deep-convolutional layout, two forms.

    Returns (explicit, c0_form):

        explicit = J + 1 + (3d + 9 J^2 S) * 2 * log2(12 e (J^2 S + J d)^2)
        c0_form  = c0 * (J^2 S + d) * ln(J d + J^2 S)      (natural log)

    ``c0`` is an unspecified absolute constant; the default 1.0 makes the
    c0_form a shape, not a certified bound.
    """
    if J < 2:
        raise ValidationError("depth J must be >= 2")
    if S < 2:
        raise ValidationError("filter length S must be >= 2")
    _positive_int(d, "input dimension d")
    c0 = float(c0)
    if not (c0 > 0):
        raise ValidationError("c0 must be positive")
    e = math.e
    explicit = J + 1 + (3 * d + 9 * J * J * S) * 2 * math.log2(
        12 * e * (J * J * S + J * d) ** 2
    )
    c0_form = c0 * (J * J * S + d) * math.log(J * d + J * J * S)
    return explicit, c0_form


def covering_log_bound(pdim: float, M: float, eps: float) -> float:
    """Natural log of the covering-number bound 2((2eM/eps) ln(2eM/eps))^pdim,
    valid for radii 0 < eps <= M."""
    pdim = float(pdim)
    M = float(M)
    eps = float(eps)
    if not (pdim >= 0) or not math.isfinite(pdim):
        raise ValidationError("pdim must be a nonnegative real")
    if not (M > 0) or not math.isfinite(M):
        raise ValidationError("M must be positive")
    if not (eps > 0):
        raise ValidationError("eps must be positive")
    if eps > M:
        raise ValidationError("eps must not exceed M")
    ratio = 2 * math.e * M / eps
    return math.log(2) + pdim * math.log(ratio * math.log(ratio))


def rate_bound_theorem2(n, d, J, delta: float, C: float = 1.0) -> float:
    """Excess-error rate bound (natural logs):

        C d ln(d) (1 + ln(2/delta)/sqrt(n))
            * ((ln n) J^2 (ln J)/n + 1/sqrt(n) + (ln J)/J).

    n and J may be real (e.g. a depth schedule evaluated between integers);
    the domain is n >= 3, d >= 2, J >= 2, 0 < delta < 1, C > 0.
    """
    n = float(n)
    J = float(J)
    C = float(C)
    delta = float(delta)
    if not (n >= 3):
        raise ValidationError("sample size n must be >= 3")
    if isinstance(d, bool) or not isinstance(d, int) or d < 2:
        raise ValidationError("dimension d must be an integer >= 2")
    if not (J >= 2):
        raise ValidationError("depth J must be >= 2")
    if not (0 < delta < 1):
        raise ValidationError("delta must lie in (0, 1)")
    if not (C > 0):
        raise ValidationError("C must be positive")
    sqrt_n = math.sqrt(n)
    conf = 1.0 + math.log(2.0 / delta) / sqrt_n
    shape = (
        math.log(n) * J * J * math.log(J) / n
        + 1.0 / sqrt_n
        + math.log(J) / J
    )
    return C * d * math.log(d) * conf * shape


@dataclass(frozen=True)
class BoundReport:
    """All four evaluations for one architecture/sample-size choice.

    covering_log is a table of (eps, log-bound) pairs computed at radii
    eps = M/2, M/4, ... using pdim_general as the driving dimension.
    """

    R: float
    pdim_general: float
    pdim_dcnn_explicit: float
    pdim_dcnn_c0: float
    covering_log: tuple
    rate_bound: float

    def __post_init__(self):
        for name in ("R", "pdim_general", "pdim_dcnn_explicit", "pdim_dcnn_c0",
                     "rate_bound"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"bound report field {name} must be "
                                      "finite and positive")
        for eps, v in self.covering_log:
            if not math.isfinite(v):
                raise ValidationError("covering table entries must be finite")


def evaluate_bounds(
    J: int,
    S: int,
    d: int,
    n,
    delta: float,
    c0: float = 1.0,
    C: float = 1.0,
    M: float = 2.0,
) -> BoundReport:
    """Evaluate every bound for the deep-convolutional layout.

    M is the output-range level used by the covering table (the harness
    truncates at M = 2, hence the default)."""
    spec = dcnn_arch_spec(J, S, d)
    pg = pdim_general(spec)
    explicit, c0_form = pdim_dcnn(J, S, d, c0=c0)
    table = tuple(
        (M / 2**k, covering_log_bound(pg, M, M / 2**k)) for k in range(1, 7)
    )
    return BoundReport(
        R=r_constant(spec),
        pdim_general=pg,
        pdim_dcnn_explicit=explicit,
        pdim_dcnn_c0=c0_form,
        covering_log=table,
        rate_bound=rate_bound_theorem2(n, d, J, delta, C),
    )
