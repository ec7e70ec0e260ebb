"""Fisher information loss (FIL) of the four mechanisms.

The per-coordinate quantities ``eta`` are square roots of the Fisher
information of the output about the location theta; a mechanism applied to a
query f then has FIL ``eta * ||J_f||_2``. All formulas accept array-valued
theta.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Sequence

import numpy as np

from boundedgauss import numerics
from boundedgauss.errors import ParameterError, ShapeError
from boundedgauss.mechanisms import MechanismKind, MechanismSpec, SupportInterval

_LOG_SQRT_2PI = numerics.LOG_SQRT_2PI


def _check_sigma(sigma):
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterError(f'sigma must be finite and > 0, got {sigma}')


def _theta(theta):
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError('theta must be finite')
    return arr, arr.ndim == 0


def _log_pdf(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


def eta_gaussian(sigma: float) -> float:
    """FIL per unit Jacobian norm of the Gaussian mechanism: 1/sigma."""
    _check_sigma(sigma)
    return 1.0 / sigma


def _truncated_information(lo, hi):
    """Fisher information (sigma = 1) of a normal truncated to (lo, hi).

    This is the variance of the truncated variable,
    1 - ((phi(hi) - phi(lo)) / Z)^2 + (lo phi(lo) - hi phi(hi)) / Z.
    When that expression would cancel badly (narrow windows, deep tails) the
    variance is taken instead from centered moments on a Gauss-Legendre rule.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    log_z = numerics._log_interval_mass(lo, hi)
    with np.errstate(over='ignore', invalid='ignore'):
        r_lo = np.exp(_log_pdf(lo) - log_z)
        r_hi = np.exp(_log_pdf(hi) - log_z)
        r_lo = np.where(np.isinf(lo), 0.0, r_lo)
        r_hi = np.where(np.isinf(hi), 0.0, r_hi)
        t_lo = np.where(np.isinf(lo), 0.0, lo * r_lo)
        t_hi = np.where(np.isinf(hi), 0.0, hi * r_hi)
        info = 1.0 - (r_hi - r_lo) ** 2 + (t_lo - t_hi)
        magnitude = np.maximum.reduce([np.ones_like(info), (r_hi - r_lo) ** 2,
                                       np.abs(t_lo), np.abs(t_hi)])
        roundoff = magnitude * (1.0 + np.abs(log_z)) * 4e-16
    shaky = ~(roundoff <= 1e-13 * info)
    if np.any(shaky):
        info = np.array(info, dtype=float, copy=True)
        for idx in zip(*np.nonzero(np.atleast_1d(shaky))):
            i = idx if info.ndim else ()
            info[i] = _truncated_variance_gl(float(np.atleast_1d(lo)[idx]),
                                             float(np.atleast_1d(hi)[idx]))
    return np.clip(info, 0.0, 1.0)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(160)


def _truncated_variance_gl(lo, hi):
    """Variance of Z | lo < Z < hi by two-pass moments on a Legendre rule."""
    if lo >= 0.0 or hi <= 0.0:
        # Measure offsets from the endpoint nearest the mode; density
        # proportional to exp(-t y - y^2/2) for y in [0, width].
        t = lo if lo >= 0.0 else -hi
        width = hi - lo
        reach = -t + math.sqrt(t * t + 160.0)
        y_max = min(width, reach)
        y = 0.5 * y_max * (_GL_NODES + 1.0)
        w = _GL_WEIGHTS * np.exp(-t * y - 0.5 * y * y)
    else:
        left = max(lo, -13.0)
        right = min(hi, 13.0)
        y = left + 0.5 * (right - left) * (_GL_NODES + 1.0)
        w = _GL_WEIGHTS * np.exp(-0.5 * y * y)
    total = w.sum()
    mean = (w * y).sum() / total
    return float((w * (y - mean) ** 2).sum() / total)


def eta_truncated(theta, sigma: float, support: SupportInterval):
    """eta of N^T(theta, sigma^2, [a, b]); never exceeds 1/sigma."""
    _check_sigma(sigma)
    arr, scalar = _theta(theta)
    lo = (support.lower - arr) / sigma
    hi = (support.upper - arr) / sigma
    eta = np.sqrt(_truncated_information(lo, hi)) / sigma
    return float(eta) if scalar else eta


def _rectified_information(lo, hi):
    """Fisher information (sigma = 1) of a normal clamped to [lo, hi].

    Atom terms phi^2/Phi are evaluated as exp(2 log phi - log Phi) so that the
    0/0 of the far tails becomes the correct limit 0.
    """
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        atom_lo = np.exp(2.0 * _log_pdf(lo) - numerics._log_ndtr(lo))
        atom_hi = np.exp(2.0 * _log_pdf(hi) - numerics._log_ndtr(-hi))
        mass = np.exp(numerics._log_interval_mass(lo, hi))
        edge = lo * np.exp(_log_pdf(lo)) - hi * np.exp(_log_pdf(hi))
    info = atom_lo + atom_hi + mass + edge
    return np.clip(info, 0.0, 1.0)


def eta_rectified(theta, sigma: float, support: SupportInterval):
    """eta of N^R(theta, sigma^2, [a, b]) (Gaussian clamped to [a, b]).

    The interior-mass term is Phi((b - theta)/sigma) - Phi((a - theta)/sigma),
    the probability of landing strictly inside the interval.
    """
    _check_sigma(sigma)
    arr, scalar = _theta(theta)
    lo = (support.lower - arr) / sigma
    hi = (support.upper - arr) / sigma
    eta = np.sqrt(_rectified_information(lo, hi)) / sigma
    return float(eta) if scalar else eta


def eta_sign(theta, sigma: float):
    """eta of the stochastic sign: phi(t) / (sigma sqrt(Phi(t) Phi(-t))), t = theta/sigma."""
    _check_sigma(sigma)
    arr, scalar = _theta(theta)
    t = arr / sigma
    log_eta = _log_pdf(t) - 0.5 * (numerics._log_ndtr(t) + numerics._log_ndtr(-t))
    eta = np.exp(log_eta) / sigma
    return float(eta) if scalar else eta


def _log_abs_pdf_diff(lo, hi):
    # log|phi(lo) - phi(hi)| = log phi(lo) + log|1 - exp(-(hi - lo)(hi + lo)/2)|
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore', over='ignore'):
        base = np.maximum(_log_pdf(lo), _log_pdf(hi))
        near = np.where(np.abs(lo) <= np.abs(hi), lo, hi)
        far = np.where(np.abs(lo) <= np.abs(hi), hi, lo)
        # exponent <= 0 because |far| >= |near|
        expo = -0.5 * (far - near) * (far + near)
        out = base + np.log(-np.expm1(expo))
    return np.where(np.isinf(lo) | np.isinf(hi), base, out)


def eta_quantized(theta, sigma: float, support: SupportInterval, k_levels: int) -> float:
    """eta of a Gaussian draw rounded to the nearest of k+1 uniform levels.

    Levels are a, a + delta, ..., b with delta = (b - a)/k; cell boundaries sit
    at the midpoints, so the end cells collect the tails. Converges to
    `eta_rectified` as k grows.
    """
    _check_sigma(sigma)
    k = int(k_levels)
    if k != k_levels or k < 2:
        raise ParameterError('k_levels must be an integer >= 2')
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterError('theta must be finite')
    a, b = support.lower, support.upper
    step = (b - a) / k
    mids = a + step * (np.arange(k) + 0.5)
    edges = np.concatenate(([-np.inf], (mids - theta) / sigma, [np.inf]))
    lo, hi = edges[:-1], edges[1:]
    log_p = numerics._log_interval_mass(lo, hi)
    log_dp = _log_abs_pdf_diff(lo, hi)
    with np.errstate(over='ignore', invalid='ignore'):
        terms = np.exp(2.0 * log_dp - log_p)
    terms = np.where(np.isfinite(terms), terms, 0.0)
    info = math.fsum(terms.tolist())
    return math.sqrt(max(info, 0.0)) / sigma


def eta_for(spec: MechanismSpec, theta):
    """Dispatches to the closed form matching ``spec.kind``."""
    kind = spec.kind
    if kind is MechanismKind.GAUSSIAN:
        base = eta_gaussian(spec.sigma)
        return base if np.ndim(theta) == 0 else np.full(np.shape(theta), base)
    if kind is MechanismKind.SIGN:
        return eta_sign(theta, spec.sigma)
    if kind is MechanismKind.RECTIFIED:
        return eta_rectified(theta, spec.sigma, spec.interval)
    return eta_truncated(theta, spec.sigma, spec.interval)


# --- multidimensional assembly and composition ------------------------------


def assemble_fim(etas: Sequence[float], jacobian) -> np.ndarray:
    """Fisher information matrix J^T diag(eta^2) J of the whole dataset.

    Args:
      etas: Length-d per-coordinate eta values.
      jacobian: d x m Jacobian of the query with respect to the (flattened)
        dataset.
    """
    etas = np.asarray(etas, dtype=float)
    jac = np.atleast_2d(np.asarray(jacobian, dtype=float))
    if etas.ndim != 1 or jac.ndim != 2 or jac.shape[0] != etas.shape[0]:
        raise ShapeError(f'jacobian rows {jac.shape} must match {etas.shape[0]} etas')
    weighted = jac * (etas ** 2)[:, None]
    fim = jac.T @ weighted
    return 0.5 * (fim + fim.T)


@dataclasses.dataclass(frozen=True)
class PerExampleFil:
    """Two readings of one example's FIL.

    Attributes:
      spectral: ||diag(eta) J_i||_2, the spectral-norm FIL (default).
      squared: ||eta^T J_i||_2^2, the literal squared row-vector form.
    """

    spectral: float
    squared: float


def per_example_fil(etas: Sequence[float], per_example_jacobian) -> PerExampleFil:
    """FIL of one example given the Jacobian d x k of the query w.r.t. that example."""
    etas = np.asarray(etas, dtype=float)
    jac = np.asarray(per_example_jacobian, dtype=float)
    if jac.ndim == 1:
        jac = jac[:, None]
    if etas.ndim != 1 or jac.shape[0] != etas.shape[0]:
        raise ShapeError(f'jacobian rows {jac.shape} must match {etas.shape[0]} etas')
    scaled = etas[:, None] * jac
    spectral = float(np.linalg.norm(scaled, 2)) if scaled.size else 0.0
    row = etas @ jac
    return PerExampleFil(spectral, float(row @ row))


def compose_fil(fims: Sequence[np.ndarray]) -> np.ndarray:
    """Fisher information of independent mechanism applications adds up."""
    if not fims:
        raise ParameterError('need at least one matrix')
    mats = [np.asarray(m, dtype=float) for m in fims]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ShapeError('all Fisher information matrices must share a shape')
    total = np.zeros(shape)
    for m in mats:
        total = total + m
    return total


def subsample_fil(eta, rate: float):
    """Scales eta by the sampling rate. Experimental: no derivation backs it.

    Nothing in the accountant calls this; it exists for callers who want to
    explore subsampled FIL and accept the unproven rule.
    """
    if not 0 < rate <= 1:
        raise ParameterError('rate must lie in (0, 1]')
    warnings.warn('subsample_fil is experimental', FutureWarning, stacklevel=2)
    return np.asarray(eta) * rate
