"""Command-line front end.

Exit codes: 0 success, 1 property or oracle violation, 2 usage or input
error. Diagnostics go to stderr; results go to --output or stdout.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from boundedgauss import accountant, experiments, fil, oracles, rdp, serialization
from boundedgauss.errors import (ConsistencyError, ConvergenceError, ParameterError,
                                 PreconditionError)
from boundedgauss.mechanisms import MechanismKind, MechanismSpec, SupportBox

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
MECHANISMS = [k.value for k in MechanismKind]


class UsageError(Exception):
    """Bad flags or unreadable input (exit code 2)."""


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}') from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f'must be finite and > 0: {text!r}')
    return value


def _nonnegative(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}') from None
    if not (math.isfinite(value) and value >= 0):
        raise argparse.ArgumentTypeError(f'must be finite and >= 0: {text!r}')
    return value


def _finite(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {text!r}') from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f'must be finite: {text!r}')
    return value


def _alpha(text: str) -> float:
    value = _finite(text)
    if not value > 1:
        raise argparse.ArgumentTypeError(f'alpha must be > 1: {text!r}')
    return value


def _float_list(kind):
    def parse(text: str) -> List[float]:
        parts = [p for p in text.replace(' ', '').split(',') if p]
        if not parts:
            raise argparse.ArgumentTypeError('empty list')
        return [kind(p) for p in parts]
    return parse


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'seed must be an integer: {text!r}') from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError('seed must fit in 64 unsigned bits')
    return value


def _spec(kind: str, sigma: float, half_width: float) -> MechanismSpec:
    kind = MechanismKind(kind)
    if kind.bounded:
        return MechanismSpec(kind, sigma, SupportBox(half_width))
    return MechanismSpec(kind, sigma)


def _emit(text: str, output: Optional[str]):
    if output in (None, '-'):
        sys.stdout.write(text)
    else:
        with open(output, 'w', newline='') as fh:
            fh.write(text)


def _theta_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        raise UsageError('--theta-max must be >= --theta-min')
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _add_common(p: argparse.ArgumentParser, mechanism_default, many: bool):
    p.add_argument('--sigma', type=_positive, default=1.0, help='noise scale (default 1)')
    p.add_argument('--half-width', type=_positive, default=1.0,
                   help='support half-width a of [-a, a] (default 1)')
    if many:
        p.add_argument('--mechanism', choices=MECHANISMS, action='append',
                       help='repeatable; default: all four')
    else:
        p.add_argument('--mechanism', choices=MECHANISMS, default=mechanism_default)
    p.add_argument('--output', '-o', help='output file (default stdout)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='boundedgauss',
        description='Per-instance RDP and FIL accounting for bounded Gaussian mechanisms.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('curves', help='eta and epsilon against the location theta')
    _add_common(p, None, many=True)
    p.add_argument('--sensitivity', type=_nonnegative, default=1.0)
    p.add_argument('--alpha', type=_alpha, default=2.0)
    p.add_argument('--theta-min', type=_finite, default=-3.0)
    p.add_argument('--theta-max', type=_finite, default=3.0)
    p.add_argument('--theta-step', type=_positive, default=0.25)
    p.add_argument('--worst-case', action='store_true',
                   help='epsilon maximized over shift directions and argument orders')
    p.add_argument('--format', choices=('csv', 'json'), default='csv')

    p = sub.add_parser('account', help='account one or more steps on a gradient file')
    p.add_argument('gradient_file')
    _add_common(p, 'truncated', many=False)
    p.add_argument('--clip-bound', type=_positive,
                   help='clip bound C (default: the file header)')
    p.add_argument('--alpha-grid', type=_float_list(_alpha), default=list(rdp.DEFAULT_ALPHAS))
    p.add_argument('--alpha', type=_alpha, default=2.0,
                   help='order for per-coordinate epsilons (must be on the grid)')
    p.add_argument('--steps', type=int, default=1, help='compose this many identical steps')
    p.add_argument('--shift-scan', type=int, default=1,
                   help='shift magnitudes tried for the rectified kind')
    p.add_argument('--auto-clip', action='store_true', help='clip entries beyond C')

    p = sub.add_parser('mean-est', help='synthetic mean-estimation sweep')
    p.add_argument('--n', type=int, default=900)
    p.add_argument('--d', type=int, default=100)
    p.add_argument('--mu', type=_float_list(_finite), default=[0.0],
                   help='comma-separated true means')
    p.add_argument('--sigma-grid', type=_float_list(_positive),
                   default=list(experiments.DEFAULT_SIGMAS))
    p.add_argument('--half-width-grid', type=_float_list(_positive),
                   default=list(experiments.DEFAULT_HALF_WIDTHS))
    p.add_argument('--trials', type=int, default=5)
    p.add_argument('--seed', type=_seed, default=0)
    p.add_argument('--mechanism', choices=('rectified', 'truncated'), action='append',
                   help='repeatable; default: rectified')
    p.add_argument('--output', '-o')

    p = sub.add_parser('convert', help='(epsilon, delta)-DP from an RDP curve file')
    p.add_argument('curve_file', help='report JSON, curve JSON, or CSV with alpha,epsilon')
    p.add_argument('--delta', type=_positive, required=True)
    p.add_argument('--format', choices=('csv', 'json'), default='json')
    p.add_argument('--output', '-o')

    p = sub.add_parser('oracle-check', help='compare closed forms with the numerical oracles')
    p.add_argument('--alpha', type=_alpha, action='append',
                   help='repeatable; default 1.5, 2, 4, 8, 32')
    p.add_argument('--theta-min', type=_finite, default=-3.0)
    p.add_argument('--theta-max', type=_finite, default=3.0)
    p.add_argument('--theta-step', type=_positive, default=0.25)
    p.add_argument('--sigma-grid', type=_float_list(_positive), default=[0.5, 1.0, 2.0])
    p.add_argument('--half-width-grid', type=_float_list(_positive), default=[0.5, 1.0, 2.0])
    p.add_argument('--sensitivity-grid', type=_float_list(_positive), default=[0.1, 0.5, 1.0])
    p.add_argument('--tolerance', type=_nonnegative,
                   help='override: allowed |closed - oracle| <= tol * max(1, |oracle|)')
    return parser


# --- subcommands --------------------------------------------------------------


def cmd_curves(args) -> int:
    kinds = args.mechanism or MECHANISMS
    specs = [_spec(k, args.sigma, args.half_width) for k in kinds]
    thetas = _theta_grid(args.theta_min, args.theta_max, args.theta_step)
    rows = experiments.privacy_curve(specs, thetas, args.sensitivity, args.alpha,
                                     worst_case=args.worst_case)
    text = (experiments.curve_to_json(rows) if args.format == 'json'
            else experiments.curve_to_csv(rows))
    _emit(text, args.output)
    return EXIT_OK


def cmd_account(args) -> int:
    try:
        grad = accountant.load_gradient_file(args.gradient_file)
    except OSError as exc:
        raise UsageError(f'cannot read {args.gradient_file}: {exc.strerror}') from exc
    c = args.clip_bound or grad.clip_bound
    over = np.abs(grad.gradients) > c
    if np.any(over):
        i, j = np.argwhere(over)[0]
        msg = (f'{int(over.sum())} entries exceed the clip bound C = {c} '
               f'(first: example {i}, coordinate {j})')
        if not args.auto_clip:
            raise UsageError(msg + '; pass --auto-clip to clip them')
        print(f'warning: {msg}; clipping', file=sys.stderr)
    if args.steps < 1 or args.shift_scan < 1:
        raise UsageError('--steps and --shift-scan must be >= 1')
    batch = accountant.clip_linf(grad.gradients, c)
    spec = _spec(args.mechanism, args.sigma, args.half_width)
    grid = sorted(set(args.alpha_grid))
    if args.alpha not in grid:
        raise UsageError(f'--alpha {args.alpha} is not on --alpha-grid')
    report = accountant.account_step(batch, spec, grid, args.alpha, args.shift_scan)
    report = accountant.run_composition([report] * args.steps)
    _emit(report.to_json(), args.output)
    return EXIT_OK


def cmd_mean_est(args) -> int:
    if args.n < 1 or args.d < 1 or args.trials < 1:
        raise UsageError('--n, --d and --trials must be >= 1')
    rows = experiments.run_sweep(args.n, args.d, args.mu, args.sigma_grid,
                                 args.half_width_grid, args.trials, args.seed,
                                 args.mechanism or ['rectified'])
    _emit(experiments.sweep_to_csv(rows), args.output)
    return EXIT_OK


def _load_curve(path: str) -> rdp.RdpCurve:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f'cannot read {path}: {exc.strerror}') from exc
    if text.lstrip().startswith('{'):
        try:
            data = serialization.loads_json(text)
            return rdp.RdpCurve.from_arrays(data['alpha_grid'], data['epsilon_per_alpha'])
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f'{path}: expected alpha_grid and epsilon_per_alpha ({exc})') from exc
    try:
        header, rows = serialization.loads_csv(text)
        ia, ie = header.index('alpha'), header.index('epsilon')
    except (StopIteration, ValueError):
        raise UsageError(f'{path}: CSV needs alpha and epsilon columns') from None
    for number, row in enumerate(rows, start=2):
        if len(row) != len(header) or not all(isinstance(row[k], float) for k in (ia, ie)):
            raise UsageError(f'{path}: line {number}: malformed row')
    return rdp.RdpCurve.from_arrays([r[ia] for r in rows], [r[ie] for r in rows])


def cmd_convert(args) -> int:
    if not args.delta < 1:
        raise UsageError('--delta must lie in (0, 1)')
    curve = _load_curve(args.curve_file)
    result = rdp.rdp_to_dp(curve, args.delta)
    if args.format == 'json':
        text = serialization.dumps_json({'epsilon': result.epsilon,
                                         'best_alpha': result.best_alpha,
                                         'delta': args.delta})
    else:
        text = serialization.dumps_csv(('epsilon', 'best_alpha', 'delta'),
                                       [(result.epsilon, result.best_alpha, args.delta)])
    _emit(text, args.output)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    alphas = args.alpha or [1.5, 2.0, 4.0, 8.0, 32.0]
    thetas = _theta_grid(args.theta_min, args.theta_max, args.theta_step)

    def allowed(ref, default):
        if args.tolerance is not None:
            return args.tolerance * max(1.0, abs(ref))
        return default(ref)

    worst = {}
    failures = []

    def record(name, dev, ok, params):
        if dev > worst.get(name, (-1.0, None))[0]:
            worst[name] = (dev, params)
        if not ok:
            failures.append((name, dev, params))

    closed_forms = {'renyi_rectified': rdp.renyi_rectified, 'renyi_truncated': rdp.renyi_truncated}
    for sigma in args.sigma_grid:
        for a in args.half_width_grid:
            for name, closed in closed_forms.items():
                kind = name.split('_')[1]
                spec = _spec(kind, sigma, a)
                for alpha in alphas:
                    for c in args.sensitivity_grid:
                        values = closed(alpha, thetas, c, sigma, a)
                        for theta, value in zip(thetas.tolist(), np.atleast_1d(values).tolist()):
                            ref = oracles.oracle_renyi(spec, theta, theta + c, alpha).value
                            dev = abs(value - ref)
                            ok = dev <= allowed(ref, lambda r: max(1e-8, 1e-6 * abs(r)))
                            record(name, dev, ok, dict(alpha=alpha, theta=theta, c=c,
                                                       sigma=sigma, a=a))
            for kind in ('truncated', 'rectified', 'sign'):
                spec = _spec(kind, sigma, a)
                etas = np.atleast_1d(fil.eta_for(spec, thetas))
                for theta, eta in zip(thetas.tolist(), etas.tolist()):
                    ref = oracles.oracle_fisher(spec, theta).value
                    dev = abs(eta * eta - ref)
                    ok = dev <= allowed(ref, lambda r: 1e-6 * abs(r))
                    record(f'eta_{kind}', dev, ok, dict(theta=theta, sigma=sigma, a=a))
    for name in sorted(worst):
        dev, params = worst[name]
        print(f'{name}: worst deviation {dev:.3e} at {params}')
    if failures:
        name, dev, params = failures[0]
        print(f'FAIL: {len(failures)} comparisons out of tolerance; first: {name} '
              f'deviation {dev:.3e} at {params}', file=sys.stderr)
        return EXIT_VIOLATION
    print('PASS')
    return EXIT_OK


COMMANDS = {'curves': cmd_curves, 'account': cmd_account, 'mean-est': cmd_mean_est,
            'convert': cmd_convert, 'oracle-check': cmd_oracle_check}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError, PreconditionError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    except (ConsistencyError, ConvergenceError) as exc:
        print(f'violation: {exc}', file=sys.stderr)
        return EXIT_VIOLATION


def entry_point():
    sys.exit(main())


if __name__ == '__main__':
    entry_point()
