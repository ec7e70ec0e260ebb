"""Closed-form Renyi divergences and per-instance RDP accounting.

Every divergence here is D_alpha(P_theta || P_{theta + shift}) between two
members of one location family. Shifts may be negative. Each closed form is
assembled in log space (logs of Phi and of the in-support mass) so that
alpha up to a few hundred and locations far outside the support neither
overflow nor underflow.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from boundedgauss import numerics
from boundedgauss.errors import ConsistencyError, ParameterError, ShapeError
from boundedgauss.mechanisms import MechanismKind, MechanismSpec, SupportBox

DEFAULT_ALPHAS = (1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 16.0, 32.0, 64.0)

# Negative epsilons smaller than this in magnitude are roundoff and read as 0.
NEGATIVE_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class Sensitivity:
    """Worst-case per-coordinate shift c of the query (the L-inf clip bound)."""

    c: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ParameterError(f'sensitivity must be finite and >= 0, got {self.c}')


SensitivityLike = Union[Sensitivity, float]


def _as_sensitivity(sens: SensitivityLike) -> float:
    return sens.c if isinstance(sens, Sensitivity) else Sensitivity(float(sens)).c


def _check_alpha(alpha):
    if not (math.isfinite(alpha) and alpha > 1):
        raise ParameterError(f'alpha must be finite and > 1, got {alpha}')


def _check_common(alpha, c, sigma):
    _check_alpha(alpha)
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterError(f'sigma must be finite and > 0, got {sigma}')
    if not (math.isfinite(c) and c >= 0):
        raise ParameterError(f'c must be finite and >= 0, got {c}')


def _check_half_width(a):
    if not (math.isfinite(a) and a > 0):
        raise ParameterError(f'half_width must be finite and > 0, got {a}')


def _theta_array(theta):
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError('theta must be finite')
    return arr, arr.ndim == 0


def floor_epsilon(eps):
    """Maps roundoff negatives in (-1e-12, 0) to 0; rejects anything lower.

    NaN is also rejected. +inf passes through unchanged.
    """
    arr = np.asarray(eps, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= -NEGATIVE_SLACK):
        worst = np.nanmin(arr) if not np.all(np.isnan(arr)) else float('nan')
        raise ConsistencyError(f'divergence evaluated to {worst}, below the roundoff slack')
    out = np.maximum(arr, 0.0)
    return float(out) if out.ndim == 0 else out


def _power_pair(log_num, log_den, alpha):
    # log(num^alpha * den^(1 - alpha)); a zero numerator kills the term even
    # when the denominator is zero too.
    with np.errstate(invalid='ignore'):
        term = alpha * log_num + (1.0 - alpha) * log_den
    return np.where(log_num == -np.inf, -np.inf, term)


def _log_delta(x, a, sigma):
    return numerics._log_interval_mass((-a - x) / sigma, (a - x) / sigma)


# --- closed forms on signed shifts -----------------------------------------


def _gaussian(alpha, shift, sigma):
    return alpha * shift * shift / (2.0 * sigma * sigma)


def _rectified(alpha, theta, shift, sigma, a):
    interior = (alpha * (alpha - 1.0) * shift * shift / (2.0 * sigma * sigma)
                + _log_delta(theta + (1.0 - alpha) * shift, a, sigma))
    lower = _power_pair(numerics._log_ndtr((-a - theta) / sigma),
                        numerics._log_ndtr((-a - theta - shift) / sigma), alpha)
    upper = _power_pair(numerics._log_ndtr((theta - a) / sigma),
                        numerics._log_ndtr((theta + shift - a) / sigma), alpha)
    total = np.logaddexp(np.logaddexp(interior, lower), upper)
    return total / (alpha - 1.0)


def _truncated(alpha, theta, shift, sigma, a):
    log_base = _log_delta(theta, a, sigma)
    ratio_shift = _log_delta(theta + shift, a, sigma) - log_base
    ratio_mix = _log_delta(theta + (1.0 - alpha) * shift, a, sigma) - log_base
    return _gaussian(alpha, shift, sigma) + ratio_shift + ratio_mix / (alpha - 1.0)


def _sign(alpha, theta, shift, sigma):
    t_p = theta / sigma
    t_q = (theta + shift) / sigma
    plus = _power_pair(numerics._log_ndtr(t_p), numerics._log_ndtr(t_q), alpha)
    minus = _power_pair(numerics._log_ndtr(-t_p), numerics._log_ndtr(-t_q), alpha)
    return np.logaddexp(plus, minus) / (alpha - 1.0)


def _finish(values, scalar, c):
    if c == 0:
        values = np.zeros_like(values)
    values = floor_epsilon(values)
    return float(values) if scalar else values


# --- public closed forms ---------------------------------------------------


def renyi_gaussian(alpha: float, c: float, sigma: float) -> float:
    """D_alpha(N(theta, sigma^2) || N(theta + c, sigma^2)) = alpha c^2 / (2 sigma^2)."""
    _check_common(alpha, c, sigma)
    return _gaussian(alpha, c, sigma)


def renyi_rectified(alpha: float, theta, c: float, sigma: float, half_width: float):
    """D_alpha between rectified Gaussians on [-a, a] at theta and theta + c.

    Sums three contributions in log space: the interior overlap and the two
    endpoint atoms. An atom whose second-argument mass underflows to zero
    while its first-argument mass does not yields +inf.
    """
    _check_common(alpha, c, sigma)
    _check_half_width(half_width)
    arr, scalar = _theta_array(theta)
    return _finish(_rectified(alpha, arr, c, sigma, half_width), scalar, c)


def renyi_truncated(alpha: float, theta, c: float, sigma: float, half_width: float):
    """D_alpha between truncated Gaussians on [-a, a] at theta and theta + c.

    Equals the Gaussian divergence plus log Delta(theta + c)/Delta(theta) plus
    log(Delta(theta + (1 - alpha) c)/Delta(theta)) / (alpha - 1), where Delta
    is the Gaussian mass inside the support. Never exceeds the Gaussian value.
    """
    _check_common(alpha, c, sigma)
    _check_half_width(half_width)
    arr, scalar = _theta_array(theta)
    return _finish(_truncated(alpha, arr, c, sigma, half_width), scalar, c)


def renyi_sign(alpha: float, theta, c: float, sigma: float):
    """D_alpha between the stochastic-sign outputs at theta and theta + c.

    The outputs are Bernoulli with P(+1) = Phi(theta/sigma).
    """
    _check_common(alpha, c, sigma)
    arr, scalar = _theta_array(theta)
    return _finish(_sign(alpha, arr, c, sigma), scalar, c)


def _signed_divergence(spec: MechanismSpec, alpha, theta, shift):
    kind, sigma = spec.kind, spec.sigma
    if kind is MechanismKind.GAUSSIAN:
        return np.full(np.shape(theta), _gaussian(alpha, shift, sigma))
    if kind is MechanismKind.SIGN:
        return _sign(alpha, theta, shift, sigma)
    a = spec.half_width
    if kind is MechanismKind.RECTIFIED:
        return _rectified(alpha, theta, shift, sigma, a)
    return _truncated(alpha, theta, shift, sigma, a)


def renyi_divergence(spec: MechanismSpec, alpha: float, theta, shift: float):
    """D_alpha(P_theta || P_{theta + shift}) for any kind; shift may be negative."""
    _check_alpha(alpha)
    if not math.isfinite(shift):
        raise ParameterError('shift must be finite')
    arr, scalar = _theta_array(theta)
    values = _signed_divergence(spec, alpha, arr, float(shift))
    return _finish(np.asarray(values, dtype=float), scalar, shift)


# --- per-instance accounting -----------------------------------------------


def _per_instance(spec, alpha, theta, c, shift_scan):
    if c == 0:
        return np.zeros_like(theta)
    if spec.kind is MechanismKind.RECTIFIED:
        magnitudes = [c * (i + 1) / shift_scan for i in range(shift_scan)]
    else:
        magnitudes = [c]
    best = np.full(np.shape(theta), -np.inf)
    for s in magnitudes:
        for shift in (s, -s):
            # both orderings: (theta || theta + shift) and (theta + shift || theta)
            forward = _signed_divergence(spec, alpha, theta, shift)
            backward = _signed_divergence(spec, alpha, theta + shift, -shift)
            best = np.maximum(best, np.maximum(forward, backward))
    return floor_epsilon(best)


def per_instance_rdp_scalar(spec: MechanismSpec, alpha: float, theta,
                            sens: SensitivityLike, shift_scan: int = 1):
    """Per-instance RDP-for-all epsilon of one coordinate at location theta.

    Takes the max of the closed-form divergence over shifts +c and -c and
    over both argument orders. For the rectified kind, ``shift_scan = m > 1``
    also tries the magnitudes c/m, 2c/m, ..., c; the truncated divergence is
    nondecreasing in the shift magnitude, so only |shift| = c is evaluated.
    Accepts array theta and returns elementwise values.
    """
    _check_alpha(alpha)
    c = _as_sensitivity(sens)
    if int(shift_scan) != shift_scan or shift_scan < 1:
        raise ParameterError('shift_scan must be a positive integer')
    arr, scalar = _theta_array(theta)
    out = _per_instance(spec, alpha, arr, c, int(shift_scan))
    return float(out) if scalar else np.asarray(out)


def per_coordinate_rdp(spec: MechanismSpec, alpha: float, theta,
                       sens: SensitivityLike, shift_scan: int = 1) -> np.ndarray:
    """Vector of per-coordinate epsilons for a box-supported (or unbounded) spec."""
    if spec.kind.bounded and not isinstance(spec.support, SupportBox):
        raise ParameterError('vector accounting needs a SupportBox')
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.ndim != 1:
        raise ShapeError('theta must be a vector')
    return np.atleast_1d(per_instance_rdp_scalar(spec, alpha, arr, sens, shift_scan))


def per_instance_rdp_vector(spec: MechanismSpec, alpha: float, theta,
                            sens: SensitivityLike, shift_scan: int = 1) -> float:
    """Sum over coordinates of the per-coordinate epsilon (L-inf box support).

    The sum is exactly rounded (math.fsum), so it does not depend on the
    coordinate order.
    """
    values = per_coordinate_rdp(spec, alpha, theta, sens, shift_scan)
    return exact_sum(values)


def exact_sum(values: Iterable[float]) -> float:
    """Correctly rounded sum; +inf if any term is +inf."""
    values = [float(v) for v in values]
    if any(math.isinf(v) for v in values):
        return math.inf
    return math.fsum(values)


# --- curves, composition, conversion ---------------------------------------


@dataclasses.dataclass(frozen=True)
class RdpPoint:
    alpha: float
    epsilon: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        object.__setattr__(self, 'epsilon', floor_epsilon(float(self.epsilon)))


@dataclasses.dataclass(frozen=True)
class RdpCurve:
    """(alpha, epsilon) points on a strictly increasing alpha grid."""

    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, 'points', pts)
        alphas = [p.alpha for p in pts]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ShapeError('alpha grid must be strictly increasing')

    @classmethod
    def from_arrays(cls, alphas: Sequence[float], epsilons: Sequence[float]) -> 'RdpCurve':
        if len(alphas) != len(epsilons):
            raise ShapeError('alphas and epsilons differ in length')
        return cls(tuple(RdpPoint(float(a), float(e)) for a, e in zip(alphas, epsilons)))

    @property
    def alphas(self) -> tuple:
        return tuple(p.alpha for p in self.points)

    @property
    def epsilons(self) -> tuple:
        return tuple(p.epsilon for p in self.points)

    def epsilon_at(self, alpha: float) -> float:
        for p in self.points:
            if p.alpha == alpha:
                return p.epsilon
        raise ParameterError(f'alpha {alpha} is not on the curve grid')

    def __len__(self):
        return len(self.points)


def compose_rdp(curves: Sequence[RdpCurve]) -> RdpCurve:
    """Pointwise sum of epsilon over curves sharing one alpha grid."""
    curves = list(curves)
    if not curves:
        raise ParameterError('need at least one curve')
    grid = curves[0].alphas
    for curve in curves[1:]:
        if curve.alphas != grid:
            raise ShapeError('cannot compose curves on different alpha grids')
    totals = [exact_sum(curve.epsilons[i] for curve in curves) for i in range(len(grid))]
    return RdpCurve.from_arrays(grid, totals)


class DpConversion(NamedTuple):
    epsilon: float
    best_alpha: float


def rdp_to_dp(curve: RdpCurve, delta: float) -> DpConversion:
    """(epsilon, delta)-DP from an RDP curve: min over alpha of eps + log(1/delta)/(alpha - 1).

    Ties go to the smaller alpha.
    """
    if not len(curve):
        raise ParameterError('curve is empty')
    if not (0 < delta < 1):
        raise ParameterError(f'delta must lie in (0, 1), got {delta}')
    log_inv_delta = -math.log(delta)
    best = None
    for p in curve.points:
        eps = p.epsilon + log_inv_delta / (p.alpha - 1.0)
        if best is None or eps < best.epsilon:
            best = DpConversion(eps, p.alpha)
    return best
