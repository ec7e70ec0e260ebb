"""Brute-force numerical references for the closed forms.

Nothing here calls the closed-form divergence or Fisher-information code.
Interior integrals use adaptive Gauss-Kronrod quadrature (or tensor
Gauss-Legendre for the multidimensional oracle), normal tails come from
``scipy.special.log_ndtr``, and truncated normalizers are themselves
integrated numerically. Atoms are added as exact mass products.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import itertools
import math
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy import special

from boundedgauss import numerics, serialization
from boundedgauss.errors import ConvergenceError, ParameterError, ShapeError
from boundedgauss.mechanisms import MechanismKind, MechanismSpec
from boundedgauss.numerics import DEFAULT_QUADRATURE, QuadratureConfig

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class OracleMethod(str, enum.Enum):
    QUADRATURE = 'quadrature'
    QUADRATURE_PLUS_ATOMS = 'quadrature_plus_atoms'
    FINITE_DIFFERENCE = 'finite_difference'
    DISCRETE_PMF = 'discrete_pmf'
    TENSOR_PRODUCT = 'tensor_product'


@dataclasses.dataclass(frozen=True)
class OracleResult:
    """A reference value with an error estimate.

    ``value`` is a float, or an ndarray for the finite-difference FIM.
    """

    value: object
    error_bound: float
    method: OracleMethod

    def __post_init__(self):
        if not self.error_bound >= 0:
            raise ParameterError('error_bound must be >= 0')


def _log_normal_pdf(x, mean, sigma):
    z = (x - mean) / sigma
    return -0.5 * z * z - _HALF_LOG_2PI - math.log(sigma)


def _interval(spec: MechanismSpec):
    iv = spec.interval
    return iv.lower, iv.upper


def _scaled_log_integral(log_f, lo, hi, peak_x, width, cfg):
    """log of the integral of exp(log_f) over [lo, hi], plus the relative error.

    The integrand is divided by its value at ``peak_x`` first so that
    exponents in the hundreds or thousands stay representable. Break points
    around the peak help the adaptive rule find narrow bulk.
    """
    if math.isinf(lo) or math.isinf(hi):
        lo = peak_x - cfg.infinite_domain_cutoff_sigmas * width if math.isinf(lo) else lo
        hi = peak_x + cfg.infinite_domain_cutoff_sigmas * width if math.isinf(hi) else hi
    anchor = min(max(peak_x, lo), hi)
    scale = float(log_f(anchor))
    points = [anchor + k * width for k in (-4, -1, 0, 1, 4)]
    value, err = numerics.adaptive_quadrature(
        lambda x: math.exp(float(log_f(x)) - scale), lo, hi, cfg,
        points=points, full_output=True)
    if value <= 0:
        raise ConvergenceError('scaled integral vanished', estimate=value, error_bound=err)
    return scale + math.log(value), err / value


def _log_truncation_mass(theta, sigma, lo, hi, cfg):
    """log of the N(theta, sigma^2) mass of (lo, hi) by quadrature."""
    log_f = lambda x: _log_normal_pdf(x, theta, sigma)
    return _scaled_log_integral(log_f, lo, hi, theta, sigma, cfg)


def _check_pair(spec, alpha):
    if not (math.isfinite(alpha) and alpha > 1):
        raise ParameterError(f'alpha must be finite and > 1, got {alpha}')
    if not isinstance(spec, MechanismSpec):
        raise ParameterError('spec must be a MechanismSpec')


def oracle_renyi(spec: MechanismSpec, theta: float, theta_prime: float, alpha: float,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OracleResult:
    """D_alpha(P_theta || P_theta') for one mechanism by direct integration.

    Evaluates (1/(alpha-1)) log( integral of p^alpha q^(1-alpha) over the
    interior + sum over atoms of m_p^alpha m_q^(1-alpha) ).
    """
    _check_pair(spec, alpha)
    theta, theta_prime = float(theta), float(theta_prime)
    sigma = spec.sigma
    kind = spec.kind

    if kind is MechanismKind.SIGN:
        t_p, t_q = theta / sigma, theta_prime / sigma
        terms = [alpha * special.log_ndtr(t_p) + (1 - alpha) * special.log_ndtr(t_q),
                 alpha * special.log_ndtr(-t_p) + (1 - alpha) * special.log_ndtr(-t_q)]
        value = float(special.logsumexp(terms)) / (alpha - 1)
        return OracleResult(value, 1e-15 * max(1.0, abs(value)), OracleMethod.DISCRETE_PMF)

    # The log-integrand alpha log p + (1-alpha) log q is a concave quadratic
    # peaking at alpha theta + (1 - alpha) theta'.
    peak = alpha * theta + (1 - alpha) * theta_prime
    log_norm_p = log_norm_q = 0.0
    norm_err = 0.0
    if kind is MechanismKind.GAUSSIAN:
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = _interval(spec)
    if kind is MechanismKind.TRUNCATED:
        log_norm_p, e_p = _log_truncation_mass(theta, sigma, lo, hi, cfg)
        log_norm_q, e_q = _log_truncation_mass(theta_prime, sigma, lo, hi, cfg)
        norm_err = alpha * e_p + abs(1 - alpha) * e_q

    def log_integrand(x):
        return (alpha * (_log_normal_pdf(x, theta, sigma) - log_norm_p)
                + (1 - alpha) * (_log_normal_pdf(x, theta_prime, sigma) - log_norm_q))

    # Near the boundary the integrand may decay much faster than sigma.
    anchor = min(max(peak, lo), hi)
    slope = abs(anchor - peak) / sigma ** 2
    width = min(sigma, 1.0 / slope) if slope > 0 else sigma
    log_interior, rel_err = _scaled_log_integral(log_integrand, lo, hi, peak, width, cfg)
    logs = [log_interior]
    method = OracleMethod.QUADRATURE
    if kind is MechanismKind.RECTIFIED:
        method = OracleMethod.QUADRATURE_PLUS_ATOMS
        for mass_p, mass_q in (
                (special.log_ndtr((lo - theta) / sigma), special.log_ndtr((lo - theta_prime) / sigma)),
                (special.log_ndtr((theta - hi) / sigma), special.log_ndtr((theta_prime - hi) / sigma))):
            if mass_p == -math.inf:
                continue
            logs.append(alpha * mass_p + (1 - alpha) * mass_q)
    log_total = float(special.logsumexp(logs))
    share = math.exp(log_interior - log_total) if math.isfinite(log_total) else 1.0
    value = log_total / (alpha - 1)
    err = (share * rel_err + norm_err) / (alpha - 1) + 4e-16 * max(1.0, abs(value))
    return OracleResult(value, err, method)


def oracle_fisher(spec: MechanismSpec, theta: float,
                  cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OracleResult:
    """Fisher information E[(d/dtheta log p)^2] about the location theta.

    Returned on the eta^2 scale (the closed-form eta is its square root).
    """
    theta = float(theta)
    sigma = spec.sigma
    kind = spec.kind
    if kind is MechanismKind.SIGN:
        t = theta / sigma
        log_slope = -0.5 * t * t - _HALF_LOG_2PI - math.log(sigma)
        info = sum(math.exp(2 * log_slope - special.log_ndtr(s * t)) for s in (1.0, -1.0))
        return OracleResult(info, 1e-15 * info, OracleMethod.DISCRETE_PMF)

    if kind is MechanismKind.GAUSSIAN:
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = _interval(spec)

    pdf = lambda x: math.exp(_log_normal_pdf(x, theta, sigma))
    pts = [theta + k * sigma for k in (-4, -1, 0, 1, 4)]

    def integrate(g):
        return numerics.adaptive_quadrature(
            lambda x: g(x) * pdf(x), lo, hi, cfg, center=theta, scale=sigma,
            points=pts, full_output=True)

    if kind is MechanismKind.TRUNCATED:
        # Score is (x - theta)/sigma^2 minus its conditional mean; the
        # Fisher information is the conditional variance of (x - theta)/sigma^2.
        # Moments are taken about the near endpoint when theta is outside,
        # where the mass concentrates.
        ref = min(max(theta, lo), hi)
        log_mass, mass_rel = _log_truncation_mass(theta, sigma, lo, hi, cfg)
        log_shift = lambda x: _log_normal_pdf(x, theta, sigma) - log_mass
        w_pts = [ref + k * sigma for k in (-4, -1, 0, 1, 4)]

        def moment(g):
            return numerics.adaptive_quadrature(
                lambda x: g(x) * math.exp(log_shift(x)), lo, hi, cfg,
                points=w_pts, full_output=True)

        mean, e1 = moment(lambda x: x - ref)
        var, e2 = moment(lambda x: (x - ref - mean) ** 2)
        info = var / sigma ** 4
        err = (e2 + 2 * abs(mean) * e1 + mass_rel * var) / sigma ** 4
        return OracleResult(info, err + 1e-15 * info, OracleMethod.QUADRATURE)

    interior, err = integrate(lambda x: ((x - theta) / sigma ** 2) ** 2)
    method = OracleMethod.QUADRATURE
    if kind is MechanismKind.RECTIFIED:
        method = OracleMethod.QUADRATURE_PLUS_ATOMS
        # Atom at lo has mass Phi((lo - theta)/sigma); its score is the
        # theta-derivative of the log mass.
        for z in ((lo - theta) / sigma, (theta - hi) / sigma):
            log_phi = -0.5 * z * z - _HALF_LOG_2PI
            interior += math.exp(2 * log_phi - special.log_ndtr(z)) / sigma ** 2
    return OracleResult(interior, err + 1e-15 * interior, method)


# --- finite-difference Fisher information matrix -----------------------------


@dataclasses.dataclass(frozen=True)
class OutcomeRule:
    """Nodes and reference-measure weights over the output space.

    ``points`` is K x d. Interior nodes carry Lebesgue weights; atom nodes
    carry weight 1, and the matching log density there is the log atom mass.
    """

    points: np.ndarray
    weights: np.ndarray


def _coordinate_rule(spec: MechanismSpec, center: float, nodes: int, cfg: QuadratureConfig):
    kind, sigma = spec.kind, spec.sigma
    if kind is MechanismKind.SIGN:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    if kind is MechanismKind.GAUSSIAN:
        cut = cfg.infinite_domain_cutoff_sigmas * sigma
        lo, hi = center - cut, center + cut
    else:
        lo, hi = _interval(spec)
    panels = max(1, int(math.ceil((hi - lo) / (8.0 * sigma))))
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    pts = np.concatenate([0.5 * (r - l) * x + 0.5 * (r + l) for l, r in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([0.5 * (r - l) * w for l, r in zip(edges[:-1], edges[1:])])
    if kind is MechanismKind.RECTIFIED:
        pts = np.concatenate(([lo], pts, [hi]))
        wts = np.concatenate(([1.0], wts, [1.0]))
    return pts, wts


def outcome_rule(spec: MechanismSpec, centers: Sequence[float], nodes: int = 32,
                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OutcomeRule:
    """Tensor-product rule over the d-dimensional output space of `spec`.

    ``centers`` locates the Gaussian windows (ignored for bounded kinds).
    """
    rules = [_coordinate_rule(spec, float(c), nodes, cfg) for c in centers]
    grids = np.meshgrid(*[r[0] for r in rules], indexing='ij')
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing='ij')
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return OutcomeRule(points, weights)


def _coordinate_log_density(spec: MechanismSpec, theta, y, log_norm=None):
    """log density of output y given location theta, elementwise.

    For rectified outputs sitting exactly on an endpoint, the value is the
    log atom mass.
    """
    sigma = spec.sigma
    kind = spec.kind
    if kind is MechanismKind.SIGN:
        return special.log_ndtr(y * theta / sigma)
    base = -0.5 * ((y - theta) / sigma) ** 2 - _HALF_LOG_2PI - math.log(sigma)
    if kind is MechanismKind.GAUSSIAN:
        return base
    lo, hi = _interval(spec)
    if kind is MechanismKind.TRUNCATED:
        if log_norm is None:
            log_norm = _truncation_log_mass_vec(theta, sigma, lo, hi)
        return base - log_norm
    at_lo = special.log_ndtr((lo - theta) / sigma)
    at_hi = special.log_ndtr((theta - hi) / sigma)
    return np.where(y <= lo, at_lo, np.where(y >= hi, at_hi, base))


def _truncation_log_mass_vec(theta, sigma, lo, hi):
    # log(Phi(B) - Phi(A)) through the side of zero where both tails are small.
    theta = np.asarray(theta, dtype=float)
    a = (lo - theta) / sigma
    b = (hi - theta) / sigma
    upper = a > 0
    a2 = np.where(upper, -b, a)
    b2 = np.where(upper, -a, b)
    lb = special.log_ndtr(b2)
    la = special.log_ndtr(a2)
    return lb + np.log1p(-np.exp(la - lb))


def mechanism_log_density(spec: MechanismSpec,
                          query: Callable[[np.ndarray], np.ndarray]):
    """log p(outcomes | dataset) for a query released coordinatewise by `spec`.

    Returns a function ``(dataset, outcomes K x d) -> length-K array``.
    """

    def log_density(dataset, outcomes):
        theta = np.atleast_1d(np.asarray(query(np.asarray(dataset, dtype=float)), dtype=float))
        outcomes = np.asarray(outcomes, dtype=float)
        if outcomes.ndim != 2 or outcomes.shape[1] != theta.shape[0]:
            raise ShapeError(f'outcomes must be K x {theta.shape[0]}')
        total = np.zeros(outcomes.shape[0])
        for j, t in enumerate(theta):
            total = total + _coordinate_log_density(spec, t, outcomes[:, j])
        return total

    return log_density


def oracle_fim_finite_difference(log_density, dataset, outcomes: OutcomeRule,
                                 cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OracleResult:
    """Fisher information matrix of the dataset by finite differences.

    Forms L(D') = E_{h ~ p(.|D)} log p(h | D') with the outcome rule, then
    returns minus its central-difference Hessian at D' = D. Steps are
    h_i = max(1e-5, 1e-5 |D_i|); two step sizes are combined by Richardson
    extrapolation and their disagreement is the error estimate.

    Args:
      log_density: ``(dataset, outcomes) -> log densities`` w.r.t. the
        measure implied by ``outcomes.weights``.
      dataset: Array of any shape; the matrix is over its flattened entries.
      outcomes: Output-space quadrature rule.
      cfg: Unused beyond validation; kept for a uniform oracle signature.
    """
    base = np.asarray(dataset, dtype=float)
    flat = base.ravel()
    m = flat.size
    if m > 16:
        raise ParameterError('finite-difference FIM is limited to 16 dataset entries')
    weights = np.asarray(outcomes.weights, dtype=float)
    probs = weights * np.exp(log_density(base, outcomes.points))

    def expected(delta):
        shifted = (flat + delta).reshape(base.shape)
        return math.fsum((probs * log_density(shifted, outcomes.points)).tolist())

    steps = np.maximum(1e-5, 1e-5 * np.abs(flat))

    def hessian(scale):
        h = steps * scale
        out = np.zeros((m, m))
        center = expected(np.zeros(m))
        for i in range(m):
            e_i = np.zeros(m)
            e_i[i] = h[i]
            out[i, i] = (expected(e_i) - 2 * center + expected(-e_i)) / h[i] ** 2
            for j in range(i + 1, m):
                e_j = np.zeros(m)
                e_j[j] = h[j]
                val = (expected(e_i + e_j) - expected(e_i - e_j)
                       - expected(-e_i + e_j) + expected(-e_i - e_j)) / (4 * h[i] * h[j])
                out[i, j] = out[j, i] = val
        return out

    coarse = hessian(2.0)
    fine = hessian(1.0)
    richardson = (4.0 * fine - coarse) / 3.0
    fim = -richardson
    # Second differences amplify the rounding error of L by 1/h^2.
    magnitude = math.fsum(np.abs(probs * log_density(base, outcomes.points)).tolist())
    roundoff = 8.0 * np.finfo(float).eps * max(magnitude, 1.0) / float(np.min(steps)) ** 2
    err = (float(np.max(np.abs(fine - coarse))) if m else 0.0) + roundoff
    return OracleResult(fim, err, OracleMethod.FINITE_DIFFERENCE)


# --- tensor-product divergence ----------------------------------------------


def _tensor_log_divergence(spec, theta, theta_prime, alpha, nodes, cfg):
    sigma = spec.sigma
    centers = alpha * theta + (1 - alpha) * theta_prime
    rule = outcome_rule(spec, centers, nodes, cfg)
    log_p = np.zeros(rule.points.shape[0])
    log_q = np.zeros(rule.points.shape[0])
    for j in range(theta.shape[0]):
        y = rule.points[:, j]
        if spec.kind is MechanismKind.TRUNCATED:
            lo, hi = _interval(spec)
            # Normalizers by the same Legendre rule, independent of log_ndtr.
            pts, wts = _coordinate_rule(spec, 0.0, nodes, cfg)
            def log_norm(t):
                return special.logsumexp(
                    -0.5 * ((pts - t) / sigma) ** 2 - _HALF_LOG_2PI - math.log(sigma), b=wts)
            log_p += _coordinate_log_density(spec, theta[j], y, log_norm(theta[j]))
            log_q += _coordinate_log_density(spec, theta_prime[j], y, log_norm(theta_prime[j]))
        else:
            log_p += _coordinate_log_density(spec, theta[j], y)
            log_q += _coordinate_log_density(spec, theta_prime[j], y)
    with np.errstate(invalid='ignore'):
        terms = alpha * log_p + (1 - alpha) * log_q
    terms = np.where(log_p == -np.inf, -np.inf, terms)
    return float(special.logsumexp(terms, b=rule.weights)) / (alpha - 1)


def oracle_renyi_multidim(spec: MechanismSpec, theta, theta_prime, alpha: float,
                          cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                          nodes: int = 32) -> OracleResult:
    """Joint D_alpha of the d-dimensional coordinatewise mechanism, d <= 3.

    Integrates the joint density over the whole output box (interior,
    faces, edges and corners for the rectified kind) with a tensor
    Gauss-Legendre rule. The error estimate is the change from ``nodes`` to
    ``nodes + 16`` points per panel.
    """
    _check_pair(spec, alpha)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    if theta.shape != theta_prime.shape or theta.ndim != 1:
        raise ShapeError('theta and theta_prime must be vectors of one length')
    if not 1 <= theta.shape[0] <= 3:
        raise ParameterError('tensor-product oracle supports 1 <= d <= 3')
    coarse = _tensor_log_divergence(spec, theta, theta_prime, alpha, nodes, cfg)
    fine = _tensor_log_divergence(spec, theta, theta_prime, alpha, nodes + 16, cfg)
    err = abs(fine - coarse) + 1e-14 * max(1.0, abs(fine))
    return OracleResult(fine, err, OracleMethod.TENSOR_PRODUCT)


def oracle_per_instance_multidim(spec: MechanismSpec, theta, c: float, alpha: float,
                                 cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                                 nodes: int = 32) -> OracleResult:
    """Worst joint divergence over neighbors shifting each coordinate by +-c.

    Maximizes the tensor-product divergence over all 2^d sign patterns and
    both argument orders. Per-coordinate maximization can only exceed this.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    best = None
    for pattern in itertools.product((1.0, -1.0), repeat=theta.shape[0]):
        moved = theta + c * np.asarray(pattern)
        for p, q in ((theta, moved), (moved, theta)):
            res = oracle_renyi_multidim(spec, p, q, alpha, cfg, nodes)
            if best is None or res.value > best.value:
                best = res
    return best


# --- golden-value table -------------------------------------------------------

GOLDEN_COLUMNS = ('name', 'parameters', 'value', 'error_bound', 'method')


@dataclasses.dataclass(frozen=True)
class GoldenRow:
    name: str
    parameters: str
    value: float
    error_bound: float
    method: str


def write_golden_table(path, rows: Iterable[GoldenRow], version: str = '1') -> None:
    """Writes a tab-separated golden table; floats use 17 significant digits."""
    with open(path, 'w', newline='') as fh:
        fh.write(f'# golden-values version {version}\n')
        writer = csv.writer(fh, delimiter='\t', lineterminator='\n')
        writer.writerow(GOLDEN_COLUMNS)
        for r in rows:
            writer.writerow([r.name, r.parameters, serialization.format_float(r.value),
                             serialization.format_float(r.error_bound), r.method])


def read_golden_table(path) -> List[GoldenRow]:
    with open(path, newline='') as fh:
        lines = [ln for ln in fh if not ln.startswith('#')]
    reader = csv.reader(lines, delimiter='\t')
    header = next(reader)
    if tuple(header) != GOLDEN_COLUMNS:
        raise ParameterError(f'unexpected golden-table header {header}')
    return [GoldenRow(n, p, float(v), float(e), m) for n, p, v, e, m in reader]
