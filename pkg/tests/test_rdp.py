import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundedgauss import oracles, rdp
from boundedgauss.errors import ConsistencyError, ParameterError, ShapeError
from boundedgauss.mechanisms import MechanismSpec, SupportBox

TRUNC_BOX = MechanismSpec.truncated(1.0, 1.0)
RECT_BOX = MechanismSpec.rectified(1.0, 1.0)

alphas = st.sampled_from([1.25, 1.5, 2.0, 4.0, 8.0, 32.0])
thetas = st.floats(-6, 6)
shifts = st.floats(0.01, 2.0)
sigmas = st.floats(0.3, 3.0)
widths = st.floats(0.2, 3.0)


def test_gaussian_closed_form():
    assert rdp.renyi_gaussian(2.0, 1.0, 1.0) == 1.0
    assert rdp.renyi_gaussian(2.0, 1.0, 2.0) == 0.25
    assert rdp.renyi_gaussian(2.0, 0.0, 1.0) == 0.0


@pytest.mark.parametrize('fn', [rdp.renyi_rectified, rdp.renyi_truncated])
def test_zero_shift_is_zero(fn):
    for theta in (-3.0, 0.0, 0.7, 50.0):
        assert fn(2.0, theta, 0.0, 1.0, 1.0) == 0.0


def test_rectified_golden(golden):
    row = golden('renyi_rectified', 'alpha=2;theta=0;c=1;sigma=1;a=1')
    assert rdp.renyi_rectified(2.0, 0.0, 1.0, 1.0, 1.0) == pytest.approx(row.value, rel=1e-8)


def test_truncated_golden(golden):
    row = golden('renyi_truncated', 'alpha=2;theta=0;c=0.5;sigma=1;a=1')
    assert rdp.renyi_truncated(2.0, 0.0, 0.5, 1.0, 1.0) == pytest.approx(row.value, rel=1e-8)


@pytest.mark.parametrize('theta', [-2.0, 0.0, 1.3])
@pytest.mark.parametrize('alpha', [1.5, 2.0, 8.0])
@pytest.mark.parametrize('fn', [rdp.renyi_rectified, rdp.renyi_truncated])
def test_large_support_recovers_gaussian(fn, alpha, theta):
    c, sigma = 1.0, 0.7
    a = 40 * sigma + abs(theta) + c
    assert fn(alpha, theta, c, sigma, a) == pytest.approx(rdp.renyi_gaussian(alpha, c, sigma),
                                                         rel=1e-9, abs=1e-9)


@given(alphas, thetas, shifts, sigmas, widths)
@settings(max_examples=300)
def test_amplification_and_nonnegativity(alpha, theta, c, sigma, a):
    gauss = rdp.renyi_gaussian(alpha, c, sigma)
    for fn in (rdp.renyi_rectified, rdp.renyi_truncated):
        value = fn(alpha, theta, c, sigma, a)
        assert -1e-12 <= value <= gauss + 1e-10


@given(alphas, thetas, sigmas, widths)
@settings(max_examples=100)
def test_truncated_monotone_in_shift(alpha, theta, sigma, a):
    values = rdp.renyi_truncated(alpha, theta, 0.0, sigma, a), *(
        rdp.renyi_truncated(alpha, theta, c, sigma, a) for c in np.linspace(0.05, 2, 40))
    assert all(b >= x - 1e-12 for x, b in zip(values, values[1:]))


def test_sign_matches_two_point_divergence():
    from scipy.stats import norm
    theta, c, alpha = 0.4, 1.0, 3.0
    p = np.array([norm.cdf(-theta), norm.cdf(theta)])
    q = np.array([norm.cdf(-theta - c), norm.cdf(theta + c)])
    ref = math.log(np.sum(p ** alpha * q ** (1 - alpha))) / (alpha - 1)
    assert rdp.renyi_sign(alpha, theta, c, 1.0) == pytest.approx(ref, rel=1e-12)


def test_array_theta_matches_scalar():
    grid = np.linspace(-3, 3, 13)
    vec = rdp.renyi_truncated(4.0, grid, 0.5, 1.0, 1.0)
    assert vec.shape == grid.shape
    for t, v in zip(grid, vec):
        assert v == rdp.renyi_truncated(4.0, float(t), 0.5, 1.0, 1.0)


def test_deep_tail_stays_finite():
    for theta in (-30.0, 30.0, 200.0):
        for fn in (rdp.renyi_rectified, rdp.renyi_truncated):
            v = fn(64.0, theta, 1.0, 0.5, 1.0)
            assert math.isfinite(v) and 0 <= v <= rdp.renyi_gaussian(64.0, 1.0, 0.5)


@pytest.mark.parametrize('bad', [dict(alpha=1.0), dict(alpha=math.nan), dict(c=-1.0),
                                 dict(sigma=0.0), dict(a=0.0), dict(theta=math.inf)])
def test_parameter_errors(bad):
    args = dict(alpha=2.0, theta=0.0, c=1.0, sigma=1.0, a=1.0)
    args.update(bad)
    with pytest.raises(ParameterError):
        rdp.renyi_truncated(args['alpha'], args['theta'], args['c'], args['sigma'], args['a'])


def test_floor_epsilon():
    assert rdp.floor_epsilon(-1e-13) == 0.0
    assert rdp.floor_epsilon(math.inf) == math.inf
    with pytest.raises(ConsistencyError):
        rdp.floor_epsilon(-1e-9)
    with pytest.raises(ConsistencyError):
        rdp.floor_epsilon(math.nan)


# --- per-instance ------------------------------------------------------------


@pytest.mark.parametrize('theta', [-5.0, 0.0, 2.5])
def test_per_instance_gaussian_location_invariant(theta):
    spec = MechanismSpec.gaussian(2.0)
    assert rdp.per_instance_rdp_scalar(spec, 3.0, theta, 1.0) == pytest.approx(3.0 / 8)


def test_per_instance_symmetric_point_branches_coincide():
    up = rdp.renyi_divergence(TRUNC_BOX, 2.0, 0.0, 0.5)
    down = rdp.renyi_divergence(TRUNC_BOX, 2.0, 0.0, -0.5)
    assert up == pytest.approx(down, rel=1e-14)
    up = rdp.renyi_divergence(RECT_BOX, 2.0, 0.0, 0.5)
    down = rdp.renyi_divergence(RECT_BOX, 2.0, 0.0, -0.5)
    assert up == pytest.approx(down, rel=1e-14)


def test_per_instance_golden_is_max_of_four(golden):
    row = golden('per_instance_truncated', 'alpha=2;theta=1.5;c=1;sigma=1;a=1')
    four = [rdp.renyi_divergence(TRUNC_BOX, 2.0, t, s)
            for t, s in ((1.5, 1.0), (1.5, -1.0), (2.5, -1.0), (0.5, 1.0))]
    got = rdp.per_instance_rdp_scalar(TRUNC_BOX, 2.0, 1.5, rdp.Sensitivity(1.0))
    assert got == max(four)
    assert got == pytest.approx(row.value, rel=1e-8)


def test_rectified_shift_scan_never_lowers():
    for theta in np.linspace(-3, 3, 13):
        base = rdp.per_instance_rdp_scalar(RECT_BOX, 2.0, theta, 1.0)
        scanned = rdp.per_instance_rdp_scalar(RECT_BOX, 2.0, theta, 1.0, shift_scan=8)
        assert scanned >= base


def test_vector_d1_equals_scalar():
    assert rdp.per_instance_rdp_vector(TRUNC_BOX, 2.0, [0.4], 0.5) == \
        rdp.per_instance_rdp_scalar(TRUNC_BOX, 2.0, 0.4, 0.5)


def test_vector_identical_coordinates():
    single = rdp.per_instance_rdp_scalar(RECT_BOX, 2.0, 0.0, 0.5)
    assert rdp.per_instance_rdp_vector(RECT_BOX, 2.0, [0.0, 0.0, 0.0], 0.5) == \
        pytest.approx(3 * single, rel=1e-15)


def test_vector_matches_tensor_oracle(golden):
    row = golden('per_instance_truncated_2d', 'alpha=2;theta=0.3,-1.1;c=0.5;sigma=1;a=1')
    got = rdp.per_instance_rdp_vector(TRUNC_BOX, 2.0, [0.3, -1.1], 0.5)
    assert got == pytest.approx(row.value, abs=1e-6)
    one_way = golden('renyi_truncated_2d', 'alpha=2;theta=0.3,-1.1;c=0.5;sigma=1;a=1')
    forward = math.fsum(rdp.renyi_divergence(TRUNC_BOX, 2.0, t, 0.5) for t in (0.3, -1.1))
    assert forward == pytest.approx(one_way.value, abs=1e-6)


def test_vector_coordinate_order_irrelevant():
    theta = np.random.default_rng(3).uniform(-2, 2, 50)
    a = rdp.per_instance_rdp_vector(RECT_BOX, 4.0, theta, 0.3)
    b = rdp.per_instance_rdp_vector(RECT_BOX, 4.0, theta[::-1], 0.3)
    assert a == b


def test_vector_needs_box():
    spec = MechanismSpec('truncated', 1.0, MechanismSpec.truncated(1.0, 1.0).interval)
    with pytest.raises(ParameterError):
        rdp.per_instance_rdp_vector(spec, 2.0, [0.0, 0.0], 0.5)
    with pytest.raises(ShapeError):
        rdp.per_instance_rdp_vector(TRUNC_BOX, 2.0, np.zeros((2, 2)), 0.5)


def test_exact_sum_propagates_inf():
    assert rdp.exact_sum([1.0, math.inf]) == math.inf
    assert rdp.exact_sum([1e16, 1.0, -1e16]) == 1.0


# --- curves ------------------------------------------------------------------


def curve(alphas, eps):
    return rdp.RdpCurve.from_arrays(alphas, eps)


def test_compose_examples():
    c1 = curve([2, 4], [0.5, 1.0])
    c2 = curve([2, 4], [0.1, 0.3])
    assert rdp.compose_rdp([c1]) == c1
    assert rdp.compose_rdp([c1] * 4).epsilons == (2.0, 4.0)
    assert rdp.compose_rdp([c1, c2]).epsilons == (0.6, 1.3)
    with pytest.raises(ShapeError):
        rdp.compose_rdp([c1, curve([2, 8], [0.5, 1.0])])
    assert rdp.compose_rdp([c1, curve([2, 4], [math.inf, 0])]).epsilon_at(2) == math.inf


def test_curve_grid_must_increase():
    with pytest.raises(ShapeError):
        curve([4, 2], [1, 1])
    with pytest.raises(ParameterError):
        curve([2], [1]).epsilon_at(3)


def test_rdp_to_dp_single_point():
    out = rdp.rdp_to_dp(curve([2], [1.0]), 1e-5)
    assert out.epsilon == pytest.approx(1 + math.log(1e5), rel=1e-15)
    assert out.best_alpha == 2
    assert out.epsilon == pytest.approx(12.512925464970229)


def test_rdp_to_dp_dominated_point():
    base = rdp.rdp_to_dp(curve([2], [1.0]), 1e-5)
    assert rdp.rdp_to_dp(curve([2, 3], [1.0, 20.0]), 1e-5) == base


def test_rdp_to_dp_hand_enumerated_grid():
    # eps = alpha / 2 on {2, 4, 8}; log(1e6) = 13.8155...
    # alpha=2: 1 + 13.8155 = 14.82; alpha=4: 2 + 4.605 = 6.61; alpha=8: 4 + 1.974 = 5.97
    out = rdp.rdp_to_dp(curve([2, 4, 8], [1.0, 2.0, 4.0]), 1e-6)
    assert out.best_alpha == 8
    assert out.epsilon == pytest.approx(4 + math.log(1e6) / 7, rel=1e-15)


def test_rdp_to_dp_ties_pick_smaller_alpha():
    # 1 + L/1 == (1 + L/2) + L/2 with L = log(1/delta)
    d = 1e-3
    L = math.log(1 / d)
    out = rdp.rdp_to_dp(curve([2, 3], [1.0, 1.0 + L - L / 2]), d)
    assert out.best_alpha == 2


@pytest.mark.parametrize('delta', [0.0, 1.0, -0.1])
def test_rdp_to_dp_errors(delta):
    with pytest.raises(ParameterError):
        rdp.rdp_to_dp(curve([2], [1.0]), delta)
    with pytest.raises(ParameterError):
        rdp.rdp_to_dp(rdp.RdpCurve(()), 0.5)


@pytest.mark.parametrize('case', [(2.0, 0.3, 0.5, 1.0, 1.0), (8.0, -2.0, 1.0, 0.5, 2.0),
                                  (1.5, 2.7, 0.1, 2.0, 0.5)])
def test_closed_forms_against_oracle_spot(case):
    alpha, theta, c, sigma, a = case
    for kind, fn in (('rectified', rdp.renyi_rectified), ('truncated', rdp.renyi_truncated)):
        spec = MechanismSpec(kind, sigma, SupportBox(a).interval)
        ref = oracles.oracle_renyi(spec, theta, theta + c, alpha)
        assert fn(alpha, theta, c, sigma, a) == pytest.approx(ref.value, rel=1e-6, abs=1e-8)
