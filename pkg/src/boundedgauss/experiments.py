"""Privacy curves over the location and the synthetic mean-estimation sweep.

Mean estimation: draw n points from N(mu 1_d, I_d), clip them to [-1, 1]^d,
average, and release the average coordinatewise through a mechanism. Each
record reports the utility (squared error), the data-dependent (2, eps)-RDP
of the release, and per-example FIL.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from boundedgauss import fil, rdp, serialization
from boundedgauss.errors import ParameterError
from boundedgauss.mechanisms import (MechanismKind, MechanismSpec, SupportBox,
                                     make_rng, sample_vector)

DEFAULT_SIGMAS = (0.05, 0.1, 0.2, 0.4, 0.8)
DEFAULT_HALF_WIDTHS = (0.25, 0.5, 1.0, 2.0)
DEFAULT_MUS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
ACCOUNTING_ALPHA = 2.0


@dataclasses.dataclass(frozen=True)
class MeanEstimationConfig:
    """One cell of the sweep.

    ``sigma_noise`` and ``half_width`` are in the units of the averaged
    query; ``data_clip`` bounds each datum to [-data_clip, data_clip].
    """

    n: int = 900
    d: int = 100
    mu: float = 0.0
    sigma_noise: float = 0.1
    half_width: float = 1.0
    data_clip: float = 1.0
    trials: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.trials < 1:
            raise ParameterError('n, d and trials must be >= 1')
        for name in ('sigma_noise', 'half_width', 'data_clip'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f'{name} must be finite and > 0, got {value}')
        if not math.isfinite(self.mu):
            raise ParameterError('mu must be finite')
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError('seed must be a 64-bit unsigned integer')

    @property
    def sensitivity(self) -> float:
        """Per-coordinate shift of the average when one datum is replaced."""
        return 2.0 * self.data_clip / self.n

    def spec(self, kind) -> MechanismSpec:
        kind = MechanismKind(kind)
        if kind.bounded:
            return MechanismSpec(kind, self.sigma_noise, SupportBox(self.half_width))
        return MechanismSpec(kind, self.sigma_noise)


@dataclasses.dataclass(frozen=True)
class TradeoffRecord:
    mechanism_kind: MechanismKind
    mse: float
    rdp2_epsilon: float
    max_fil: float
    median_fil: float
    biasedness: float


def _check_spec_matches(cfg: MeanEstimationConfig, spec: MechanismSpec):
    if spec.sigma != cfg.sigma_noise:
        raise ParameterError('spec sigma differs from cfg.sigma_noise')
    if spec.kind.bounded:
        if not isinstance(spec.support, SupportBox):
            raise ParameterError('bounded mechanisms need a SupportBox')
        if spec.support.half_width != cfg.half_width:
            raise ParameterError('spec support differs from cfg.half_width')


def run_mean_estimation(cfg: MeanEstimationConfig, spec: MechanismSpec) -> TradeoffRecord:
    """Runs all trials of one cell.

    Trial t draws its data and its noise from the stream ``(cfg.seed, t)``,
    so two mechanisms run on the same config see identical data (and the
    rectified release is exactly the clamped Gaussian release).

    ``mse`` is the squared L2 error of the released mean, averaged over
    trials; ``rdp2_epsilon`` is the largest per-trial total; FIL values pool
    all examples of all trials.
    """
    _check_spec_matches(cfg, spec)
    truth = np.full(cfg.d, cfg.mu)
    errors, epsilons, fils = [], [], []
    for t in range(cfg.trials):
        rng = make_rng(cfg.seed, t)
        raw = cfg.mu + rng.standard_normal((cfg.n, cfg.d))
        data = np.clip(raw, -cfg.data_clip, cfg.data_clip)
        average = data.mean(axis=0)
        release = sample_vector(spec, average, rng)
        errors.append(float(np.sum((release - truth) ** 2)))
        epsilons.append(rdp.per_instance_rdp_vector(spec, ACCOUNTING_ALPHA, average,
                                                    cfg.sensitivity))
        # Each datum enters the average with weight 1/n, except where clipping
        # saturated (zero derivative).
        etas = np.atleast_1d(fil.eta_for(spec, average))
        active = np.abs(raw) < cfg.data_clip
        fils.append(np.where(active, etas[None, :], 0.0).max(axis=1) / cfg.n)
    pooled = np.concatenate(fils)
    return TradeoffRecord(spec.kind, math.fsum(errors) / cfg.trials, max(epsilons),
                          float(pooled.max()), float(np.median(pooled)), abs(cfg.mu))


# --- sweep ------------------------------------------------------------------

SWEEP_COLUMNS = ('mechanism', 'sigma', 'half_width', 'mu', 'trials', 'mse', 'eps_alpha2',
                 'eps_ratio_vs_gaussian', 'mse_rel_change_vs_gaussian', 'max_fil', 'median_fil')


@dataclasses.dataclass(frozen=True)
class SweepRow:
    mechanism: str
    sigma: float
    half_width: float
    mu: float
    trials: int
    mse: float
    eps_alpha2: float
    eps_ratio_vs_gaussian: float
    mse_rel_change_vs_gaussian: float
    max_fil: float
    median_fil: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def run_sweep(n: int = 900, d: int = 100, mus: Sequence[float] = (0.0,),
              sigmas: Sequence[float] = DEFAULT_SIGMAS,
              half_widths: Sequence[float] = DEFAULT_HALF_WIDTHS,
              trials: int = 5, seed: int = 0,
              kinds: Sequence[str] = ('rectified', 'truncated')) -> List[SweepRow]:
    """Evaluates every (mu, sigma) Gaussian baseline and every (kind, a) cell.

    Gaussian rows carry ``half_width = inf`` and ratio 1. Ratios and MSE
    changes compare against the Gaussian run on the same data and noise.
    """
    rows: List[SweepRow] = []
    for mu in mus:
        for sigma in sigmas:
            base_cfg = MeanEstimationConfig(n, d, mu, sigma, 1.0, 1.0, trials, seed)
            base = run_mean_estimation(base_cfg, base_cfg.spec('gaussian'))
            rows.append(SweepRow('gaussian', sigma, math.inf, mu, trials, base.mse,
                                 base.rdp2_epsilon, 1.0, 0.0, base.max_fil, base.median_fil))
            for kind in kinds:
                for a in half_widths:
                    cfg = dataclasses.replace(base_cfg, half_width=a)
                    rec = run_mean_estimation(cfg, cfg.spec(kind))
                    rows.append(SweepRow(
                        MechanismKind(kind).value, sigma, a, mu, trials, rec.mse,
                        rec.rdp2_epsilon, rec.rdp2_epsilon / base.rdp2_epsilon,
                        (rec.mse - base.mse) / base.mse, rec.max_fil, rec.median_fil))
    return rows


def best_ratio(rows: Iterable[SweepRow], kind: str = 'rectified', mse_tolerance: float = 0.005,
               mu: Optional[float] = None) -> Optional[SweepRow]:
    """Cell with the smallest epsilon ratio whose |MSE change| is within tolerance.

    Returns None when no cell qualifies.
    """
    best = None
    for row in rows:
        if row.mechanism != kind or (mu is not None and row.mu != mu):
            continue
        if abs(row.mse_rel_change_vs_gaussian) > mse_tolerance:
            continue
        if best is None or row.eps_ratio_vs_gaussian < best.eps_ratio_vs_gaussian:
            best = row
    return best


def sweep_to_csv(rows: Iterable[SweepRow]) -> str:
    return serialization.dumps_csv(SWEEP_COLUMNS, (r.as_tuple() for r in rows))


# --- privacy curves -----------------------------------------------------------

CURVE_COLUMNS = ('mechanism', 'sigma', 'half_width', 'theta', 'eta', 'epsilon')


def privacy_curve(specs: Sequence[MechanismSpec], theta_grid: Sequence[float], c: float,
                  alpha: float, worst_case: bool = False) -> List[tuple]:
    """(mechanism, sigma, half_width, theta, eta, epsilon) rows.

    eta is the closed-form FIL per unit Jacobian. epsilon is
    D_alpha(P_theta || P_{theta + c}); with ``worst_case`` it is instead the
    per-instance value maximized over shift directions and argument orders.
    Unbounded kinds report half_width = inf.
    """
    specs = list(specs)
    thetas = np.asarray(list(theta_grid), dtype=float)
    if not specs or thetas.size == 0:
        raise ParameterError('need at least one mechanism and one theta')
    if not (math.isfinite(c) and c >= 0):
        raise ParameterError(f'c must be finite and >= 0, got {c}')
    rows = []
    for spec in specs:
        etas = np.broadcast_to(np.asarray(fil.eta_for(spec, thetas), dtype=float), thetas.shape)
        if worst_case:
            eps = rdp.per_instance_rdp_scalar(spec, alpha, thetas, c)
        else:
            eps = rdp.renyi_divergence(spec, alpha, thetas, c)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), thetas.shape)
        width = spec.half_width if spec.kind.bounded else math.inf
        for th, e, p in zip(thetas.tolist(), etas.tolist(), eps.tolist()):
            rows.append((spec.kind.value, float(spec.sigma), width, th, e, p))
    return rows


def curve_to_csv(rows: Iterable[tuple]) -> str:
    return serialization.dumps_csv(CURVE_COLUMNS, rows)


def curve_to_json(rows: Iterable[tuple]) -> str:
    return serialization.dumps_json({'columns': list(CURVE_COLUMNS),
                                     'rows': [list(r) for r in rows]})
