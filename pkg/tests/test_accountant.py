import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from boundedgauss import accountant, rdp
from boundedgauss.accountant import GradientFileError
from boundedgauss.errors import ParameterError, PreconditionError, ShapeError
from boundedgauss.mechanisms import MechanismSpec, SupportInterval

GRID = (2.0, 4.0, 8.0)


def test_clip_within_bound_unchanged():
    raw = np.array([[0.1, -0.2], [0.5, -0.5]])
    batch = accountant.clip_linf(raw, 0.5)
    np.testing.assert_array_equal(batch.per_example, raw)
    assert not batch.saturated.any()


def test_clip_clamps_and_preserves_sign():
    raw = np.array([[1.5, -1.5, 0.2], [-3.0, 0.49, 7.0]])
    batch = accountant.clip_linf(raw, 0.5)
    assert batch.per_example[0, 0] == 0.5
    assert np.all(np.abs(batch.per_example) <= 0.5)
    assert np.all(np.sign(batch.per_example) == np.sign(raw))
    np.testing.assert_array_equal(batch.saturated, np.abs(raw) > 0.5)


def test_batch_validation():
    with pytest.raises(ShapeError):
        accountant.GradientBatch(np.zeros(3), 1.0)
    with pytest.raises(ParameterError):
        accountant.GradientBatch(np.zeros((2, 2)), 0.0)
    with pytest.raises(ShapeError):
        accountant.GradientBatch(np.zeros((2, 2)), 1.0, per_example_jacobians=[np.eye(2)])


def test_unclipped_batch_is_rejected():
    batch = accountant.GradientBatch(np.array([[0.2, 1.2]]), 1.0)
    with pytest.raises(PreconditionError, match='coordinate 1'):
        accountant.account_step(batch, MechanismSpec.gaussian(1.0), GRID)


@given(hnp.arrays(float, (4, 3), elements=st.floats(-5, 5)))
@settings(max_examples=25)
def test_gaussian_epsilon_independent_of_gradients(raw):
    c, sigma = 0.5, 2.0
    report = accountant.account_step(accountant.clip_linf(raw, c), MechanismSpec.gaussian(sigma), GRID)
    for a, eps in zip(report.alpha_grid, report.rdp_curve.epsilons):
        assert eps == pytest.approx(3 * a * c * c / (2 * sigma * sigma), rel=1e-14)


def test_zero_sum_branches_coincide():
    spec = MechanismSpec.rectified(1.0, 1.0)
    batch = accountant.clip_linf(np.array([[0.3, -0.2], [-0.3, 0.2]]), 0.5)
    report = accountant.account_step(batch, spec, GRID)
    single = rdp.renyi_divergence(spec, 2.0, 0.0, 0.5)
    assert single == pytest.approx(rdp.renyi_divergence(spec, 2.0, 0.0, -0.5), rel=1e-14)
    np.testing.assert_allclose(report.per_coordinate_epsilon,
                               rdp.per_instance_rdp_scalar(spec, 2.0, 0.0, 0.5), rtol=1e-15)


def test_two_coordinate_truncated_matches_golden(golden):
    spec = MechanismSpec.truncated(1.0, 1.0)
    raw = np.array([[0.3, -0.5], [0.0, -0.5], [0.0, -0.1]])
    report = accountant.account_step(accountant.clip_linf(raw, 0.5), spec, GRID)
    expected = sum(golden('per_instance_truncated', f'alpha=2;theta={t};c=0.5;sigma=1;a=1').value
                   for t in ('0.3', '-1.1'))
    assert report.total_epsilon == pytest.approx(expected, rel=1e-8)
    assert report.total_epsilon == pytest.approx(
        math.fsum(report.per_coordinate_epsilon), abs=1e-9)


@given(hnp.arrays(float, (5, 4), elements=st.floats(-1, 1)), st.sampled_from(['rectified', 'truncated']))
@settings(max_examples=25)
def test_bounded_never_worse_than_gaussian(raw, kind):
    spec = MechanismSpec(kind, 1.0, MechanismSpec.truncated(1.0, 1.5).support)
    batch = accountant.clip_linf(raw, 0.5)
    bounded = accountant.account_step(batch, spec, GRID)
    gauss = accountant.account_step(batch, MechanismSpec.gaussian(1.0), GRID)
    for b, g in zip(bounded.rdp_curve.epsilons, gauss.rdp_curve.epsilons):
        assert b <= g + 1e-10
    assert np.all(bounded.per_example_fil <= 1.0 + 1e-12)


def test_large_support_recovers_gaussian():
    spec = MechanismSpec.truncated(1.0, 100.0)
    batch = accountant.clip_linf(np.array([[0.2, -0.4], [0.1, 0.3]]), 0.5)
    bounded = accountant.account_step(batch, spec, GRID)
    gauss = accountant.account_step(batch, MechanismSpec.gaussian(1.0), GRID)
    np.testing.assert_allclose(bounded.rdp_curve.epsilons, gauss.rdp_curve.epsilons, rtol=1e-9)


def test_example_permutation_invariance():
    rng = np.random.default_rng(5)
    raw = rng.uniform(-1, 1, (30, 6))
    spec = MechanismSpec.rectified(1.0, 2.0)
    a = accountant.account_step(accountant.clip_linf(raw, 0.4), spec, GRID)
    b = accountant.account_step(accountant.clip_linf(raw[::-1], 0.4), spec, GRID)
    assert a.rdp_curve == b.rdp_curve
    np.testing.assert_array_equal(a.per_example_fil, b.per_example_fil[::-1])


def test_fil_default_jacobian_masks_saturation():
    spec = MechanismSpec.gaussian(2.0)
    batch = accountant.clip_linf(np.array([[0.1, 0.2], [5.0, 0.1], [5.0, -5.0]]), 1.0)
    report = accountant.account_step(batch, spec, GRID)
    np.testing.assert_allclose(report.per_example_fil, [0.5, 0.5, 0.0])
    np.testing.assert_allclose(report.per_example_fil_squared, [0.5, 0.25, 0.0])
    assert accountant.SUM_QUERY_JACOBIAN in report.assumptions


def test_supplied_jacobians():
    spec = MechanismSpec.gaussian(1.0)
    jacs = [np.array([[2.0], [0.0]]), np.array([[0.0], [0.5]])]
    batch = accountant.clip_linf(np.zeros((2, 2)), 1.0, jacs)
    report = accountant.account_step(batch, spec, GRID)
    np.testing.assert_allclose(report.per_example_fil, [2.0, 0.5])
    assert accountant.SUPPLIED_JACOBIAN in report.assumptions


def test_rectified_flags_shift_policy():
    spec = MechanismSpec.rectified(1.0, 1.0)
    batch = accountant.clip_linf(np.zeros((1, 1)), 1.0)
    assert accountant.RECTIFIED_ENDPOINT_SHIFT in accountant.account_step(batch, spec, GRID).assumptions
    scanned = accountant.account_step(batch, spec, GRID, shift_scan=4)
    assert any(f.startswith('rectified-shift-scan') for f in scanned.assumptions)


def test_alpha_must_be_on_grid():
    batch = accountant.clip_linf(np.zeros((1, 1)), 1.0)
    with pytest.raises(ParameterError):
        accountant.account_step(batch, MechanismSpec.gaussian(1.0), (4.0, 8.0), alpha=2.0)


def make_report(raw, spec=None):
    spec = spec or MechanismSpec.truncated(1.0, 1.0)
    return accountant.account_step(accountant.clip_linf(np.asarray(raw, float), 0.5), spec, GRID)


def test_composition_single_is_identity():
    r = make_report([[0.1, 0.2]])
    assert accountant.run_composition([r]) is r


def test_composition_identical_steps():
    r = make_report([[0.1, 0.2], [0.3, -0.4]])
    t = 7
    c = accountant.run_composition([r] * t)
    np.testing.assert_allclose(c.rdp_curve.epsilons, np.array(r.rdp_curve.epsilons) * t, rtol=1e-14)
    np.testing.assert_allclose(c.per_example_fil, r.per_example_fil * math.sqrt(t), rtol=1e-14)
    np.testing.assert_allclose(c.per_example_fil_squared, r.per_example_fil_squared * t, rtol=1e-14)
    assert c.step_count == t


def test_composition_heterogeneous_steps():
    r1 = make_report([[0.1, 0.2], [0.3, -0.4]])
    r2 = make_report([[-0.5, 0.5], [0.5, 0.5]], MechanismSpec.rectified(0.5, 1.0))
    c = accountant.run_composition([r1, r2])
    for i in range(len(GRID)):
        assert c.rdp_curve.epsilons[i] == r1.rdp_curve.epsilons[i] + r2.rdp_curve.epsilons[i]
    np.testing.assert_allclose(c.per_example_fil,
                               np.hypot(r1.per_example_fil, r2.per_example_fil), rtol=1e-15)
    assert set(c.assumptions) == set(r1.assumptions) | set(r2.assumptions)
    with pytest.raises(ShapeError):
        accountant.run_composition([r1, make_report([[0.1, 0.2, 0.3]])])


def test_report_json_round_trip():
    r = make_report([[0.1, 0.2], [0.3, -0.4]])
    text = r.to_json()
    data = json.loads(text)
    for key in ('alpha_grid', 'epsilon_per_alpha', 'per_coordinate_epsilon_at_alpha',
                'per_example_fil', 'assumptions', 'step_count'):
        assert key in data
    back = accountant.AccountingReport.from_dict(data)
    assert back.to_json() == text
    assert back.rdp_curve == r.rdp_curve


def test_parse_text_file():
    text = '# d=2, n=3, C=0.5\n0.1, 0.2\n0.3 -0.4\n\n-0.5,0.5\n'
    f = accountant.parse_gradient_text(text)
    assert f.clip_bound == 0.5
    np.testing.assert_array_equal(f.gradients, [[0.1, 0.2], [0.3, -0.4], [-0.5, 0.5]])


@pytest.mark.parametrize('text, line', [
    ('d=2,n=2,C=1\n0.1,0.2\n0.3,abc\n', 3),
    ('d=2,n=2,C=1\n0.1,0.2,0.3\n0.1,0.2\n', 2),
    ('d=2,n=1,C=1\nnan,0.1\n', 2),
    ('d=2,n=1\n0.1,0.2\n', 1),
    ('d=2,n=1,C=-1\n0.1,0.2\n', 1),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(GradientFileError) as info:
        accountant.parse_gradient_text(text)
    assert info.value.line == line
    assert f'line {line}' in str(info.value)


def test_parse_count_mismatch():
    with pytest.raises(GradientFileError, match='n=3'):
        accountant.parse_gradient_text('d=1,n=3,C=1\n0.1\n')


def test_parse_json_file(tmp_path):
    path = tmp_path / 'g.json'
    path.write_text(json.dumps({'d': 2, 'n': 1, 'C': 1.0, 'gradients': [[0.5, -0.5]]}))
    f = accountant.load_gradient_file(path)
    np.testing.assert_array_equal(f.gradients, [[0.5, -0.5]])
    with pytest.raises(GradientFileError):
        accountant.parse_gradient_json('{"d": 2, "n": 2, "C": 1, "gradients": [[1, 2]]}')
    with pytest.raises(GradientFileError) as info:
        accountant.parse_gradient_json('{\n"d": 2,\n oops}')
    assert info.value.line == 3
