"""Gaussian, rectified, truncated and stochastic-sign mechanisms.

A mechanism is described by a `MechanismSpec` (kind, noise scale, support);
the location ``theta = f(D)`` is passed per call. Random draws come from
``numpy.random.Generator`` streams built with `make_rng`, so a run is fixed by
``(seed, stream key, shape)``.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import NamedTuple, Optional, Union

import numpy as np

from boundedgauss import numerics
from boundedgauss.errors import ParameterError


class MechanismKind(str, enum.Enum):
    GAUSSIAN = 'gaussian'
    RECTIFIED = 'rectified'
    TRUNCATED = 'truncated'
    SIGN = 'sign'

    @property
    def bounded(self) -> bool:
        return self in (MechanismKind.RECTIFIED, MechanismKind.TRUNCATED)


@dataclasses.dataclass(frozen=True)
class SupportInterval:
    """Closed output interval [lower, upper] of a bounded mechanism."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ParameterError('support endpoints must be finite')
        if not self.lower < self.upper:
            raise ParameterError(f'support needs lower < upper, got [{self.lower}, {self.upper}]')

    @classmethod
    def symmetric(cls, half_width: float) -> 'SupportInterval':
        if not half_width > 0:
            raise ParameterError('half_width must be > 0')
        return cls(-float(half_width), float(half_width))

    @property
    def is_symmetric(self) -> bool:
        return self.lower == -self.upper

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


@dataclasses.dataclass(frozen=True)
class SupportBox:
    """The L-infinity box {x : max_j |x_j| <= half_width}."""

    half_width: float

    def __post_init__(self):
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ParameterError('half_width must be finite and > 0')

    @property
    def interval(self) -> SupportInterval:
        return SupportInterval.symmetric(self.half_width)


Support = Union[SupportInterval, SupportBox]


@dataclasses.dataclass(frozen=True)
class MechanismSpec:
    """Mechanism kind, noise scale sigma and (for bounded kinds) the support."""

    kind: MechanismKind
    sigma: float
    support: Optional[Support] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', MechanismKind(self.kind))
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f'sigma must be finite and > 0, got {self.sigma}')
        if self.kind.bounded and self.support is None:
            raise ParameterError(f'{self.kind.value} mechanism needs a support')
        if not self.kind.bounded and self.support is not None:
            raise ParameterError(f'{self.kind.value} mechanism takes no support')

    @classmethod
    def gaussian(cls, sigma: float) -> 'MechanismSpec':
        return cls(MechanismKind.GAUSSIAN, sigma)

    @classmethod
    def sign(cls, sigma: float) -> 'MechanismSpec':
        return cls(MechanismKind.SIGN, sigma)

    @classmethod
    def rectified(cls, sigma: float, half_width: float, box: bool = True) -> 'MechanismSpec':
        support = SupportBox(half_width) if box else SupportInterval.symmetric(half_width)
        return cls(MechanismKind.RECTIFIED, sigma, support)

    @classmethod
    def truncated(cls, sigma: float, half_width: float, box: bool = True) -> 'MechanismSpec':
        support = SupportBox(half_width) if box else SupportInterval.symmetric(half_width)
        return cls(MechanismKind.TRUNCATED, sigma, support)

    @property
    def interval(self) -> SupportInterval:
        """Per-coordinate support interval (boxes map to [-a, a])."""
        if self.support is None:
            raise ParameterError(f'{self.kind.value} mechanism has no support interval')
        if isinstance(self.support, SupportBox):
            return self.support.interval
        return self.support

    @property
    def half_width(self) -> float:
        interval = self.interval
        if not interval.is_symmetric:
            raise ParameterError('closed-form accounting needs a symmetric support [-a, a]')
        return interval.upper


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible stream for ``(seed, *key)``.

    ``make_rng(seed, t)`` is the stream of trial ``t``; distinct keys give
    statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# --- densities --------------------------------------------------------------


class Density(NamedTuple):
    interior_density: float
    atom_mass_at_lower: float
    atom_mass_at_upper: float


def density(spec: MechanismSpec, theta: float, x: float) -> Density:
    """Mixed density of the output at x.

    The interior part is a Lebesgue density on the open interval (a, b); the
    atoms are point masses at the endpoints (rectified only). The atom fields
    do not depend on x.
    """
    theta, x, sigma = float(theta), float(x), spec.sigma
    if spec.kind is MechanismKind.SIGN:
        raise ParameterError('sign mechanism has a 2-point pmf; use sign_pmf')
    z = (x - theta) / sigma
    if spec.kind is MechanismKind.GAUSSIAN:
        return Density(numerics.std_normal_pdf(z) / sigma, 0.0, 0.0)
    lo, hi = spec.interval.lower, spec.interval.upper
    inside = lo < x < hi
    if spec.kind is MechanismKind.TRUNCATED:
        if not inside:
            return Density(0.0, 0.0, 0.0)
        log_z = numerics.log_std_normal_interval_mass((lo - theta) / sigma, (hi - theta) / sigma)
        return Density(float(np.exp(numerics.log_std_normal_pdf(z) - log_z)) / sigma, 0.0, 0.0)
    interior = numerics.std_normal_pdf(z) / sigma if inside else 0.0
    return Density(
        interior,
        numerics.std_normal_cdf((lo - theta) / sigma),
        numerics.std_normal_cdf((theta - hi) / sigma),
    )


def sign_pmf(spec: MechanismSpec, theta: float) -> tuple[float, float]:
    """(P(-1), P(+1)) of the stochastic-sign mechanism."""
    if spec.kind is not MechanismKind.SIGN:
        raise ParameterError('sign_pmf needs a sign mechanism')
    t = float(theta) / spec.sigma
    return numerics.std_normal_cdf(-t), numerics.std_normal_cdf(t)


# --- sampling ---------------------------------------------------------------


def _truncated_standard(lo, hi, u):
    """Inverse-CDF draw of Z | lo < Z < hi from uniforms u in [0, 1).

    Works on log Phi, so windows that underflow a double (lo >> 0 or hi << 0)
    are still sampled exactly. Upper-half windows are reflected to the lower
    half first.
    """
    lo, hi, u = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float),
                                    np.asarray(u, float))
    flip = lo > -hi
    lo_r = np.where(flip, -hi, lo)
    hi_r = np.where(flip, -lo, hi)
    log_lo = numerics._log_ndtr(lo_r)
    log_hi = numerics._log_ndtr(hi_r)
    # u_eff = (1 - u) Phi(lo) + u Phi(hi), formed in log space.
    with np.errstate(divide='ignore'):
        log_target = np.logaddexp(np.log1p(-u) + log_lo, np.log(u) + log_hi)
    log_target = np.minimum(log_target, log_hi)
    log_target = np.where(log_target == -np.inf, log_lo, log_target)
    z = numerics.inverse_std_normal_log_cdf(np.minimum(log_target, -1e-300))
    z = np.clip(z, lo_r, hi_r)
    # Keep draws strictly inside the open interval.
    z = np.where(z <= lo_r, np.nextafter(lo_r, hi_r), z)
    z = np.where(z >= hi_r, np.nextafter(hi_r, lo_r), z)
    return np.where(flip, -z, z)


def sample(spec: MechanismSpec, theta, rng: np.random.Generator, size=None):
    """Draws from the mechanism at location theta.

    Gaussian and rectified draws consume one standard normal each (the
    rectified draw is exactly the clamped Gaussian draw); truncated draws
    consume one uniform; sign draws consume one standard normal.

    Args:
      spec: Mechanism description.
      theta: Location (scalar or array broadcastable with `size`).
      rng: Random stream.
      size: Output shape; None draws a single value.
    """
    theta_arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta_arr)):
        raise ParameterError('theta must be finite')
    shape = theta_arr.shape if size is None else size
    sigma = spec.sigma
    kind = spec.kind
    if kind is MechanismKind.TRUNCATED:
        u = rng.random(shape)
        lo, hi = spec.interval.lower, spec.interval.upper
        z = _truncated_standard((lo - theta_arr) / sigma, (hi - theta_arr) / sigma, u)
        out = np.clip(theta_arr + sigma * z, lo, hi)
        out = np.where(out <= lo, np.nextafter(lo, hi), out)
        out = np.where(out >= hi, np.nextafter(hi, lo), out)
    else:
        noisy = theta_arr + sigma * rng.standard_normal(shape)
        if kind is MechanismKind.GAUSSIAN:
            out = noisy
        elif kind is MechanismKind.RECTIFIED:
            out = np.clip(noisy, spec.interval.lower, spec.interval.upper)
        else:
            out = np.where(noisy > 0.0, 1.0, -1.0)
    if size is None and np.ndim(out) == 0:
        return float(out)
    return out


def sample_vector(spec: MechanismSpec, theta, rng: np.random.Generator) -> np.ndarray:
    """Samples each coordinate independently, consuming the stream in index order.

    Bounded kinds need a `SupportBox`; every coordinate then lands in [-a, a].
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.ndim != 1:
        raise ParameterError('theta must be a vector')
    if spec.kind.bounded and not isinstance(spec.support, SupportBox):
        raise ParameterError('vector sampling needs a SupportBox')
    return np.asarray(sample(spec, theta, rng))
