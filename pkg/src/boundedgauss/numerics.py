"""Standard-normal special functions, log-space helpers and quadrature.

Everything here accepts scalars or numpy arrays. Scalar input gives a Python
float back. Log-magnitudes are plain floats with ``-inf`` encoding zero.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from boundedgauss.errors import ConvergenceError, DomainError, ParameterError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)

# Below this, log Phi goes through the scaled complementary error function.
TAIL_SWITCH = -8.0


def _out(arr, scalar_input):
    if scalar_input:
        return float(arr)
    return arr


def _check_finite(x, name='x'):
    if not np.all(np.isfinite(x)):
        raise DomainError(f'{name} must be finite')


def _prepare(x, name='x', check=True):
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=float)
    if check:
        _check_finite(arr, name)
    return arr, scalar


# --- log-space arithmetic -------------------------------------------------


def log1mexp(t):
    """Returns log(1 - exp(t)) for t <= 0, accurate over the whole range."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(
            t > -math.log(2.0),
            np.log(-np.expm1(t)),
            np.log1p(-np.exp(t)),
        )
    return out


def log_add_exp(a, b):
    """log(exp(a) + exp(b))."""
    return np.logaddexp(a, b)


def log_diff_exp(a, b):
    """log(exp(a) - exp(b)) for a >= b; returns -inf when a == b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b > a):
        raise DomainError('log_diff_exp requires a >= b')
    with np.errstate(invalid='ignore'):
        out = np.where(b == -np.inf, a, a + log1mexp(b - a))
    out = np.where(a == b, -np.inf, out)
    return out if out.ndim else float(out)


def log_sum_exp(values: Sequence[float]) -> float:
    """Stable log(sum(exp(v))) over a finite collection of floats.

    ``+inf`` entries propagate; an all ``-inf`` input returns ``-inf``.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        return -math.inf
    if np.any(np.isnan(arr)):
        return math.nan
    m = float(np.max(arr))
    if m in (math.inf, -math.inf):
        return m
    return m + math.log(float(np.sum(np.exp(arr - m))))


# --- standard normal ------------------------------------------------------


def log_std_normal_pdf(x):
    """log phi(x) = -x^2/2 - log(sqrt(2 pi))."""
    arr, scalar = _prepare(x)
    return _out(-0.5 * arr * arr - LOG_SQRT_2PI, scalar)


def std_normal_pdf(x):
    """Standard normal density phi(x)."""
    arr, scalar = _prepare(x)
    return _out(np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi), scalar)


def _ndtr(arr):
    return 0.5 * special.erfc(-arr / _SQRT2)


def _log_ndtr(arr):
    # Unchecked; +-inf are allowed and map to 0 / -inf.
    arr = np.asarray(arr, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        upper = np.log1p(-0.5 * special.erfc(arr / _SQRT2))
        middle = np.log(0.5 * special.erfc(-arr / _SQRT2))
        z = -arr / _SQRT2
        tail = np.log(0.5 * special.erfcx(z)) - z * z
    out = np.where(arr > 0.0, upper, np.where(arr >= TAIL_SWITCH, middle, tail))
    out = np.where(arr == -np.inf, -np.inf, out)
    return out


def std_normal_cdf(x):
    """Standard normal CDF Phi(x)."""
    arr, scalar = _prepare(x)
    return _out(_ndtr(arr), scalar)


def log_std_normal_cdf(x):
    """log Phi(x), accurate in the far lower tail.

    For x < -8 the value is assembled from the scaled complementary error
    function, log(erfcx(-x/sqrt2)/2) - x^2/2, which neither underflows nor
    loses relative accuracy. For x > 0 it is log1p(-Phi(-x)).
    """
    arr, scalar = _prepare(x)
    return _out(_log_ndtr(arr), scalar)


def _acklam(q):
    # Rational approximation of the lower-tail quantile, |rel err| < 1.2e-9.
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        r = np.sqrt(-2.0 * np.log(q))
        tail = ((((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5])
                / ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0))
        s = q - 0.5
        t = s * s
        central = ((((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * s
                   / (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0))
    return np.where(q < 0.02425, tail, central)


def _lower_quantile_from_log(log_q):
    """Solves log Phi(x) = log_q for log_q <= log(1/2)."""
    log_q = np.asarray(log_q, dtype=float)
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        tt = -2.0 * log_q
        asymptotic = -np.sqrt(np.maximum(tt - np.log(tt) - 2.0 * LOG_SQRT_2PI, 1.0))
        x = np.where(log_q < -700.0, asymptotic, _acklam(np.exp(log_q)))
        for _ in range(60):
            log_cdf = _log_ndtr(x)
            log_pdf = -0.5 * x * x - LOG_SQRT_2PI
            step = (log_cdf - log_q) * np.exp(log_cdf - log_pdf)
            step = np.where(np.isfinite(step), step, 0.0)
            x = x - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(x))):
                break
    return np.minimum(x, 0.0)


def inverse_std_normal_log_cdf(log_p):
    """Quantile function taking log p, usable when p underflows a double."""
    arr, scalar = _prepare(log_p, 'log_p', check=False)
    if np.any(np.isnan(arr)) or np.any(arr >= 0.0) or np.any(arr == -np.inf):
        raise DomainError('log_p must lie in (-inf, 0)')
    lower = arr <= _LOG_HALF
    with np.errstate(divide='ignore', invalid='ignore'):
        log_q_upper = np.log(-np.expm1(arr))
    x = np.where(
        lower,
        _lower_quantile_from_log(np.where(lower, arr, _LOG_HALF)),
        -_lower_quantile_from_log(np.where(lower, _LOG_HALF, log_q_upper)),
    )
    return _out(x, scalar)


def inverse_std_normal_cdf(p):
    """Quantile function Phi^{-1}(p) for 0 < p < 1.

    A rational first guess is polished by Newton steps on log Phi, which keeps
    the relative accuracy uniform out to p ~ 1e-300.
    """
    arr, scalar = _prepare(p, 'p', check=False)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError('p must lie in the open interval (0, 1)')
    upper = arr > 0.5
    q = np.where(upper, 1.0 - arr, arr)
    x = _lower_quantile_from_log(np.log(q))
    x = np.where(upper, -x, x)
    x = np.where(arr == 0.5, 0.0, x)
    return _out(x, scalar)


# --- Gaussian mass of an interval ------------------------------------------


def _log_interval_mass(lo, hi):
    """log(Phi(hi) - Phi(lo)) for lo <= hi, both possibly infinite."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        # Interval in the upper half: use upper-tail masses.
        lu = _log_ndtr(-lo)
        hu = _log_ndtr(-hi)
        upper = lu + log1mexp(hu - lu)
        # Interval in the lower half.
        ll = _log_ndtr(lo)
        hl = _log_ndtr(hi)
        lower = hl + log1mexp(ll - hl)
        # Straddles zero: one minus the two tails.
        straddle = np.log1p(-(_ndtr(lo) + _ndtr(-hi)))
    out = np.where(lo >= 0.0, upper, np.where(hi <= 0.0, lower, straddle))
    return np.where(lo >= hi, -np.inf, out)


def log_std_normal_interval_mass(lo, hi):
    """log P(lo < Z < hi) for a standard normal Z; -inf when lo >= hi."""
    lo_arr, s1 = _prepare(lo, 'lo', check=False)
    hi_arr, s2 = _prepare(hi, 'hi', check=False)
    if np.any(np.isnan(lo_arr)) or np.any(np.isnan(hi_arr)):
        raise DomainError('interval endpoints must not be NaN')
    return _out(_log_interval_mass(lo_arr, hi_arr), s1 and s2)


def _check_support_params(a, sigma):
    if not (np.all(np.asarray(a) > 0) and np.all(np.isfinite(a))):
        raise ParameterError('half-width a must be finite and > 0')
    if not (np.all(np.asarray(sigma) > 0) and np.all(np.isfinite(sigma))):
        raise ParameterError('sigma must be finite and > 0')


def log_delta_mass(x, a, sigma):
    """log Delta(x) with Delta(x) = Phi((a - x)/sigma) - Phi((-a - x)/sigma).

    Stays finite when both Phi terms underflow (x far outside [-a, a]).
    """
    _check_support_params(a, sigma)
    arr, scalar = _prepare(x)
    out = _log_interval_mass((-a - arr) / sigma, (a - arr) / sigma)
    return _out(out, scalar)


def delta_mass(x, a, sigma):
    """Gaussian mass N(x, sigma^2) places on [-a, a]."""
    _check_support_params(a, sigma)
    arr, scalar = _prepare(x)
    return _out(np.exp(_log_interval_mass((-a - arr) / sigma, (a - arr) / sigma)), scalar)


# --- quadrature -------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for `adaptive_quadrature`.

    Infinite limits are replaced by ``center +- cutoff * scale`` where the
    caller supplies the integrand's center and scale.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000
    infinite_domain_cutoff_sigmas: float = 12.0

    def __post_init__(self):
        if not self.abs_tol > 0 or not self.rel_tol > 0:
            raise ParameterError('quadrature tolerances must be positive')
        if self.max_subdivisions < 1:
            raise ParameterError('max_subdivisions must be >= 1')
        if not self.infinite_domain_cutoff_sigmas >= 8:
            raise ParameterError('infinite-domain cutoff must be >= 8 sigmas')

    def halved(self) -> 'QuadratureConfig':
        return dataclasses.replace(self, abs_tol=self.abs_tol / 2, rel_tol=self.rel_tol / 2)


DEFAULT_QUADRATURE = QuadratureConfig()


def adaptive_quadrature(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    *,
    center: float = 0.0,
    scale: float = 1.0,
    points: Optional[Sequence[float]] = None,
    full_output: bool = False,
):
    """Integrates f over [lo, hi] with globally adaptive Gauss-Kronrod rules.

    Args:
      f: Integrand, finite on [lo, hi].
      lo, hi: Limits with lo < hi; infinite limits are cut off at
        ``center -+ cfg.infinite_domain_cutoff_sigmas * scale``.
      cfg: Tolerances and subdivision budget.
      center, scale: Location and width of the integrand's bulk, used only for
        infinite limits.
      points: Optional break points (kinks, peaks) inside the interval.
      full_output: Also return the error estimate.

    Returns:
      The integral, or ``(integral, error_estimate)`` with `full_output`.

    Raises:
      ConvergenceError: the subdivision budget ran out before the tolerance
        max(abs_tol, rel_tol * |result|) was met.
    """
    if not lo < hi:
        raise ParameterError('adaptive_quadrature requires lo < hi')
    cut = cfg.infinite_domain_cutoff_sigmas * scale
    if lo == -math.inf:
        lo = center - cut
    if hi == math.inf:
        hi = center + cut
    if not lo < hi:
        return (0.0, 0.0) if full_output else 0.0
    inner = None
    if points is not None:
        inner = sorted({float(p) for p in points if lo < p < hi}) or None
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad(
            f, lo, hi, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
            limit=cfg.max_subdivisions, points=inner)
    allowed = max(cfg.abs_tol, cfg.rel_tol * abs(value))
    if not (math.isfinite(value) and err <= allowed * 10.0):
        raise ConvergenceError(
            f'quadrature on [{lo}, {hi}] did not converge (error {err:.3g})',
            estimate=value, error_bound=err)
    return (value, err) if full_output else value
