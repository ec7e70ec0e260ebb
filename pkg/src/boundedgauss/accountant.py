"""Per-step RDP and FIL accounting for a noised sum of clipped gradients.

One step: clip per-example gradients to [-C, C] per coordinate, sum them,
and release the sum through a coordinatewise mechanism. The accountant
evaluates per-instance epsilon and eta at the true sum, so results depend
on the data and are recorded together with the shortcuts they rely on.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from boundedgauss import fil, rdp, serialization
from boundedgauss.errors import ParameterError, PreconditionError, ShapeError
from boundedgauss.mechanisms import MechanismKind, MechanismSpec, SupportBox

# Assumption flags written into reports.
DIRECTION_MAX = 'direction-max: per-coordinate max over shifts +C/-C and both divergence orders'
RECTIFIED_ENDPOINT_SHIFT = 'rectified-endpoint-shift: only |shift| = C evaluated for the rectified kind'
RECTIFIED_SHIFT_SCAN = 'rectified-shift-scan: {m} shift magnitudes in (0, C] evaluated'
SUM_QUERY_JACOBIAN = 'sum-query-jacobian: per-example Jacobian taken as identity masked by clip saturation'
SUPPLIED_JACOBIAN = 'supplied-jacobian-trust: per-example Jacobians taken as given'


@dataclasses.dataclass(frozen=True)
class GradientBatch:
    """Clipped per-example gradients.

    Attributes:
      per_example: n x d matrix, every entry in [-clip_bound, clip_bound].
      clip_bound: The L-inf clip bound C (also the per-coordinate sensitivity).
      saturated: n x d mask of entries the clip changed (zero derivative there).
      per_example_jacobians: Optional list of n matrices, each d x k.
    """

    per_example: np.ndarray
    clip_bound: float
    saturated: Optional[np.ndarray] = None
    per_example_jacobians: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        g = np.asarray(self.per_example, dtype=float)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ShapeError(f'per_example must be a non-empty n x d matrix, got shape {g.shape}')
        if not (math.isfinite(self.clip_bound) and self.clip_bound > 0):
            raise ParameterError(f'clip bound must be finite and > 0, got {self.clip_bound}')
        if not np.all(np.isfinite(g)):
            raise ParameterError('gradients must be finite')
        object.__setattr__(self, 'per_example', g)
        mask = np.zeros(g.shape, bool) if self.saturated is None else np.asarray(self.saturated, bool)
        if mask.shape != g.shape:
            raise ShapeError('saturation mask must match the gradient matrix')
        object.__setattr__(self, 'saturated', mask)
        if self.per_example_jacobians is not None:
            jacs = tuple(np.atleast_2d(np.asarray(j, dtype=float)) for j in self.per_example_jacobians)
            if len(jacs) != g.shape[0] or any(j.shape[0] != g.shape[1] for j in jacs):
                raise ShapeError('need one d x k Jacobian per example')
            object.__setattr__(self, 'per_example_jacobians', jacs)

    @property
    def n(self) -> int:
        return self.per_example.shape[0]

    @property
    def d(self) -> int:
        return self.per_example.shape[1]

    @property
    def sensitivity(self) -> rdp.Sensitivity:
        return rdp.Sensitivity(self.clip_bound)

    def summed(self) -> np.ndarray:
        """Column sums, each exactly rounded."""
        return np.array([math.fsum(col) for col in self.per_example.T.tolist()])


def clip_linf(raw, clip_bound: float, per_example_jacobians=None) -> GradientBatch:
    """Clamps every entry to [-C, C] and records which entries saturated."""
    if not (math.isfinite(clip_bound) and clip_bound > 0):
        raise ParameterError(f'clip bound must be finite and > 0, got {clip_bound}')
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    clipped = np.clip(raw, -clip_bound, clip_bound)
    return GradientBatch(clipped, float(clip_bound), np.abs(raw) > clip_bound,
                         per_example_jacobians)


@dataclasses.dataclass(frozen=True)
class AccountingReport:
    """Result of one or more accounted steps.

    ``per_coordinate_epsilon`` is given at ``alpha`` (which lies on the grid);
    ``per_example_fil`` is the spectral-norm FIL and
    ``per_example_fil_squared`` the squared row-vector form.
    """

    rdp_curve: rdp.RdpCurve
    alpha: float
    per_coordinate_epsilon: np.ndarray
    per_example_fil: np.ndarray
    per_example_fil_squared: np.ndarray
    assumptions: Tuple[str, ...]
    step_count: int = 1

    @property
    def alpha_grid(self) -> tuple:
        return self.rdp_curve.alphas

    @property
    def total_epsilon(self) -> float:
        return self.rdp_curve.epsilon_at(self.alpha)

    def to_dict(self) -> dict:
        return {
            'alpha_grid': list(self.rdp_curve.alphas),
            'epsilon_per_alpha': list(self.rdp_curve.epsilons),
            'alpha': self.alpha,
            'per_coordinate_epsilon_at_alpha': [float(v) for v in self.per_coordinate_epsilon],
            'per_example_fil': [float(v) for v in self.per_example_fil],
            'per_example_fil_squared': [float(v) for v in self.per_example_fil_squared],
            'assumptions': list(self.assumptions),
            'step_count': int(self.step_count),
        }

    def to_json(self) -> str:
        return serialization.dumps_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> 'AccountingReport':
        try:
            curve = rdp.RdpCurve.from_arrays(data['alpha_grid'], data['epsilon_per_alpha'])
            return cls(curve, float(data['alpha']),
                       np.asarray(data['per_coordinate_epsilon_at_alpha'], float),
                       np.asarray(data['per_example_fil'], float),
                       np.asarray(data.get('per_example_fil_squared', []), float),
                       tuple(data.get('assumptions', ())), int(data.get('step_count', 1)))
        except (KeyError, TypeError) as exc:
            raise ParameterError(f'malformed report: {exc}') from exc


def _check_spec(spec: MechanismSpec):
    if spec.kind.bounded and not isinstance(spec.support, SupportBox):
        raise ParameterError('bounded mechanisms need a SupportBox for vector accounting')


def _fil_without_jacobians(etas, saturated):
    active = ~saturated
    weighted = np.where(active, etas[None, :], 0.0)
    spectral = weighted.max(axis=1) if weighted.shape[1] else np.zeros(weighted.shape[0])
    squared = np.array([math.fsum(row) for row in (weighted ** 2).tolist()])
    return spectral, squared


def account_step(batch: GradientBatch, spec: MechanismSpec,
                 alpha_grid: Sequence[float] = rdp.DEFAULT_ALPHAS, alpha: float = 2.0,
                 shift_scan: int = 1) -> AccountingReport:
    """Accounts one release of the clipped-gradient sum through `spec`.

    Args:
      batch: Clipped gradients; an entry beyond the clip bound is rejected.
      spec: Coordinatewise mechanism (bounded kinds need a SupportBox).
      alpha_grid: Strictly increasing Renyi orders.
      alpha: Order at which per-coordinate epsilons are reported; must be on
        the grid.
      shift_scan: Shift magnitudes tried for the rectified kind.

    Raises:
      PreconditionError: the batch holds an entry with |g| > C.
    """
    _check_spec(spec)
    grid = tuple(float(a) for a in alpha_grid)
    if alpha not in grid:
        raise ParameterError(f'alpha {alpha} must be on the grid {grid}')
    c = batch.clip_bound
    over = np.abs(batch.per_example) > c
    if np.any(over):
        i, j = np.argwhere(over)[0]
        raise PreconditionError(
            f'batch is not clipped: example {i}, coordinate {j} has |g| > C = {c}')
    theta = batch.summed()
    totals = []
    per_coord_at_alpha = None
    for a in grid:
        per_coord = rdp.per_coordinate_rdp(spec, a, theta, c, shift_scan)
        totals.append(rdp.exact_sum(per_coord))
        if a == alpha:
            per_coord_at_alpha = per_coord
    curve = rdp.RdpCurve.from_arrays(grid, totals)

    etas = np.atleast_1d(fil.eta_for(spec, theta)).astype(float)
    assumptions = [DIRECTION_MAX]
    if spec.kind is MechanismKind.RECTIFIED:
        assumptions.append(RECTIFIED_ENDPOINT_SHIFT if shift_scan == 1
                           else RECTIFIED_SHIFT_SCAN.format(m=shift_scan))
    if batch.per_example_jacobians is None:
        spectral, squared = _fil_without_jacobians(etas, batch.saturated)
        assumptions.append(SUM_QUERY_JACOBIAN)
    else:
        results = [fil.per_example_fil(etas, j) for j in batch.per_example_jacobians]
        spectral = np.array([r.spectral for r in results])
        squared = np.array([r.squared for r in results])
        assumptions.append(SUPPLIED_JACOBIAN)
    return AccountingReport(curve, float(alpha), per_coord_at_alpha, spectral, squared,
                            tuple(assumptions), 1)


def run_composition(reports: Sequence[AccountingReport]) -> AccountingReport:
    """Composes steps: epsilons add per alpha, Fisher information adds.

    The spectral per-example FIL combines as the square root of the summed
    squares; the squared form and per-coordinate epsilons add directly.
    """
    reports = list(reports)
    if not reports:
        raise ParameterError('need at least one report')
    first = reports[0]
    for r in reports[1:]:
        if r.alpha_grid != first.alpha_grid or r.alpha != first.alpha:
            raise ShapeError('reports use different alpha grids')
        if (r.per_coordinate_epsilon.shape != first.per_coordinate_epsilon.shape
                or r.per_example_fil.shape != first.per_example_fil.shape):
            raise ShapeError('reports have different dimensions or example counts')
    if len(reports) == 1:
        return first
    curve = rdp.compose_rdp([r.rdp_curve for r in reports])

    def column_sums(arrays):
        stacked = np.stack(arrays)
        return np.array([rdp.exact_sum(col) for col in stacked.T.tolist()])

    per_coord = column_sums([r.per_coordinate_epsilon for r in reports])
    spectral = np.sqrt(column_sums([r.per_example_fil ** 2 for r in reports]))
    squared = column_sums([r.per_example_fil_squared for r in reports])
    assumptions = []
    for r in reports:
        for flag in r.assumptions:
            if flag not in assumptions:
                assumptions.append(flag)
    return AccountingReport(curve, first.alpha, per_coord, spectral, squared,
                            tuple(assumptions), sum(r.step_count for r in reports))


# --- gradient files -----------------------------------------------------------


class GradientFileError(ParameterError):
    """A gradient file is malformed; the message names the offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f'line {line}: {message}' if line is not None else message)
        self.line = line


@dataclasses.dataclass(frozen=True)
class GradientFile:
    gradients: np.ndarray
    clip_bound: float


def _parse_header(text: str, line: int):
    fields = {}
    for part in text.lstrip('#').replace(';', ',').split(','):
        part = part.strip()
        if not part:
            continue
        if '=' not in part:
            raise GradientFileError(f'header entry {part!r} is not key=value', line)
        key, value = (s.strip() for s in part.split('=', 1))
        fields[key] = value
    missing = {'d', 'n', 'C'} - set(fields)
    if missing:
        raise GradientFileError(f'header lacks {sorted(missing)}', line)
    try:
        d, n, c = int(fields['d']), int(fields['n']), float(fields['C'])
    except ValueError as exc:
        raise GradientFileError(f'bad header value ({exc})', line) from exc
    return d, n, c


def parse_gradient_text(text: str) -> GradientFile:
    """Parses a delimited gradient file.

    The first non-blank line is the header ``d=<int>, n=<int>, C=<float>``
    (a leading ``#`` is allowed); each later non-blank line is one example
    with d values separated by commas or whitespace.
    """
    lines = text.splitlines()
    header = None
    rows: List[List[float]] = []
    for number, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if header is None:
            header = _parse_header(stripped, number)
            continue
        if stripped.startswith('#'):
            continue
        cells = [c for c in stripped.replace(',', ' ').split()]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise GradientFileError(f'non-numeric entry in {stripped!r}', number) from None
        if len(values) != header[0]:
            raise GradientFileError(f'expected {header[0]} values, found {len(values)}', number)
        if not all(math.isfinite(v) for v in values):
            raise GradientFileError('non-finite gradient entry', number)
        rows.append(values)
    if header is None:
        raise GradientFileError('empty gradient file')
    d, n, c = header
    if len(rows) != n:
        raise GradientFileError(f'header declares n={n} examples, file has {len(rows)}')
    if not c > 0:
        raise GradientFileError(f'clip bound C must be > 0, got {c}', 1)
    return GradientFile(np.array(rows, dtype=float).reshape(n, d), c)


def parse_gradient_json(text: str) -> GradientFile:
    """Parses ``{"d": .., "n": .., "C": .., "gradients": [[...], ...]}``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GradientFileError(exc.msg, exc.lineno) from exc
    if not isinstance(data, dict):
        raise GradientFileError('top level must be an object')
    try:
        d, n, c = int(data['d']), int(data['n']), float(data['C'])
        grads = np.asarray(data['gradients'], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise GradientFileError(f'bad field: {exc}') from exc
    if grads.shape != (n, d):
        raise GradientFileError(f'gradients have shape {grads.shape}, header says ({n}, {d})')
    if not np.all(np.isfinite(grads)):
        raise GradientFileError('non-finite gradient entry')
    if not c > 0:
        raise GradientFileError(f'clip bound C must be > 0, got {c}')
    return GradientFile(grads, c)


def load_gradient_file(path) -> GradientFile:
    with open(path) as fh:
        text = fh.read()
    if str(path).lower().endswith('.json') or text.lstrip().startswith('{'):
        return parse_gradient_json(text)
    return parse_gradient_text(text)
