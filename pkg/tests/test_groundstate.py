import math

import numpy as np
import pytest

from conftest import SOLITON_NORM_SQ
from core.groundstate import (BoundaryFailsError, GroundStateError, RadialProfile, SampleInsideUnitBallError,
                              SigmaTooSmallError, SubcriticalityError, barrier_certificate, barrier_exponent,
                              check_subcritical, critical_exponent, soliton_1d, solve_radial_ground_state,
                              sphere_area, sublinear_counterexample)


def test_critical_exponent():
    assert critical_exponent(1) == math.inf
    assert critical_exponent(2) == math.inf
    assert critical_exponent(3) == 3.0
    assert critical_exponent(4) == 2.0


def test_subcriticality_check():
    check_subcritical(3, 2.0)
    with pytest.raises(SubcriticalityError):
        check_subcritical(3, 3.0)
    with pytest.raises(SubcriticalityError):
        check_subcritical(1, 1.0)
    with pytest.raises(GroundStateError):
        check_subcritical(0, 2.0)


@pytest.mark.parametrize('N, area', [(1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi)])
def test_sphere_area(N, area):
    assert sphere_area(N) == pytest.approx(area)


def test_1d_profile_matches_closed_form(profile_1d):
    assert profile_1d.center_value == pytest.approx(math.sqrt(2.0), rel=1e-8)
    assert profile_1d.norm_sq == pytest.approx(SOLITON_NORM_SQ, rel=1e-5)
    assert profile_1d.nehari_residual < 1e-6

    x = np.linspace(-12.0, 12.0, 481)
    np.testing.assert_allclose(profile_1d.evaluate(x), soliton_1d(x, 2.0), atol=1e-6)


@pytest.mark.parametrize('N, p', [(1, 2.0), (2, 2.0), (3, 1.5), (4, 1.4)])
def test_profile_satisfies_nehari_identity(N, p):
    profile = solve_radial_ground_state(N, p)
    assert profile.nehari_residual < 1e-6
    assert profile.norm_sq == pytest.approx(profile.l2p_norm_pow, rel=1e-6)


def test_profile_beyond_table_uses_decaying_tail(profile_1d):
    far = np.array([45.0, 50.0])
    values = profile_1d.evaluate(far)
    assert np.all(values > 0)
    assert values[1] < values[0]
    assert profile_1d.derivative(far)[0] < 0


def test_soliton_1d_general_exponent():
    x = np.linspace(-3.0, 3.0, 7)
    u = soliton_1d(x, 3.0)
    assert u[3] == pytest.approx(3.0 ** 0.25)
    np.testing.assert_allclose(u, u[::-1])


def test_2d_and_3d_center_values(profile_2d, profile_3d):
    assert profile_2d.center_value == pytest.approx(2.2062, rel=1e-4)
    assert profile_3d.center_value == pytest.approx(4.3374, rel=1e-3)
    assert profile_2d.nehari_residual < 1e-4
    assert profile_3d.nehari_residual < 1e-4


def test_profile_save_and_load(tmp_path, profile_1d):
    path = profile_1d.save(tmp_path / 'omega.txt')
    loaded = RadialProfile.load(path)
    assert loaded.dimension == 1
    assert loaded.norm_sq == profile_1d.norm_sq
    r = np.linspace(0.0, 10.0, 11)
    np.testing.assert_allclose(loaded.evaluate(r), profile_1d.evaluate(r), rtol=1e-12)


def test_profile_rejects_non_monotone_samples():
    with pytest.raises(GroundStateError):
        RadialProfile(dimension=1, exponent=2.0, radii=[0.0, 1.0, 2.0], values=[1.0, 2.0, 0.5],
                      slopes=[0.0, 0.0, 0.0], norm_sq=1.0, l2p_norm_pow=1.0, center_value=1.0,
                      tail_start=2.0, tail_order=-0.5)


def test_barrier_exponent():
    assert barrier_exponent(2.0, 0.5, 3) == pytest.approx(-0.25)
    assert barrier_exponent(4.0, 0.5, 1) == pytest.approx(0.25)


def test_barrier_certificate_on_soliton():
    x = np.linspace(0.0, 20.0, 2001)
    w = soliton_1d(x, 2.0)
    certificate = barrier_certificate(x, w, 1.0, w ** 3, mu=0.5, delta=2.0, rho=2.0, C=23.0)
    assert certificate.passed
    assert certificate.first_violation is None
    assert certificate.epsilon == pytest.approx(0.75)
    assert certificate.source_envelope_ok
    assert certificate.margin_ok
    assert not certificate.passes_with(x, w, 1e-6)
    assert certificate.to_dict()['pass'] is True


def test_barrier_certificate_near_true_decay_rate():
    x = np.linspace(0.0, 40.0, 4001)
    w = soliton_1d(x, 2.0)
    certificate = barrier_certificate(x, w, lambda r: np.ones_like(r), w ** 3, mu=0.9, delta=1.0, rho=2.0, C=23.0)
    assert certificate.passed
    assert certificate.source_envelope_ok
    assert certificate.passes_with(x, w, 2.0 * certificate.t)


def test_barrier_certificate_for_zero_solution():
    x = np.linspace(0.0, 20.0, 201)
    zero = np.zeros_like(x)
    certificate = barrier_certificate(x, zero, 1.0, zero, mu=0.5, delta=1.0, rho=2.0, C=1.0)
    assert certificate.passed
    assert certificate.t > 0
    assert certificate.passes_with(x, zero, 1e-12)


def test_barrier_certificate_rejects_power_decay():
    data = sublinear_counterexample(np.linspace(1.01, 100.0, 5000))
    source = data.c * np.sqrt(data.w)
    certificate = barrier_certificate(data.xs, data.w, 1.0, source, mu=0.5, delta=1.0, rho=2.0, C=1.0)
    assert not certificate.passed
    assert not certificate.source_envelope_ok
    assert certificate.first_violation is not None
    r, value = certificate.first_violation
    assert r >= 2.0
    assert value > certificate.t * math.exp(-0.5 * r)
    assert certificate.to_dict()['pass'] is False


def test_barrier_certificate_fails_when_source_leaves_envelope():
    x = np.linspace(0.0, 20.0, 2001)
    w = soliton_1d(x, 2.0)
    certificate = barrier_certificate(x, w, 1.0, w ** 3, mu=0.5, delta=2.0, rho=2.0, C=1e-3)
    assert certificate.first_violation is None
    assert not certificate.source_envelope_ok
    assert not certificate.passed


def test_barrier_certificate_needs_positive_envelope_constant():
    x = np.linspace(0.0, 20.0, 201)
    w = soliton_1d(x, 2.0)
    with pytest.raises(GroundStateError):
        barrier_certificate(x, w, 1.0, w ** 3, mu=0.5, delta=2.0, rho=2.0, C=0.0)


def test_barrier_certificate_rejects_small_sigma():
    x = np.linspace(0.0, 20.0, 201)
    w = soliton_1d(x, 2.0)
    with pytest.raises(SigmaTooSmallError):
        barrier_certificate(x, w, 1.0, w ** 3, mu=1.0, delta=2.0, rho=2.0, C=23.0)


def test_barrier_certificate_needs_exterior_samples():
    x = np.linspace(0.0, 5.0, 51)
    w = soliton_1d(x, 2.0)
    with pytest.raises(BoundaryFailsError):
        barrier_certificate(x, w, 1.0, w ** 3, mu=0.5, delta=2.0, rho=10.0, C=23.0)


def test_sublinear_counterexample_solves_equation():
    xs = np.concatenate([-np.linspace(1.5, 100.0, 50), np.linspace(1.5, 100.0, 50)])
    samples = sublinear_counterexample(xs)
    assert np.max(np.abs(samples.residual())) < 1e-12
    frame = samples.to_frame()
    assert list(frame.columns) == ['x', 'w', 'c', 'residual']
    assert len(samples.pairs()) == xs.size


def test_sublinear_counterexample_rejects_unit_ball():
    with pytest.raises(SampleInsideUnitBallError):
        sublinear_counterexample([2.0, 0.5])
