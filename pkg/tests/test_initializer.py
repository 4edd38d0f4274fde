import math

import numpy as np
import pytest

from dcphase.initializer import (
    UNINFORMED_INIT,
    InitMethod,
    gao_xu_weights,
    initialize,
    spectral_init,
    start_point,
    weighted_spectral_init,
)
from dcphase.model import FieldTag, MeasurementEnsemble, dist_up_to_phase, measure, power_link, sample_gaussian_ensemble

from conftest import make_instance


def test_diagonal_example():
    ens = MeasurementEnsemble(FieldTag.REAL, np.eye(2), [1.0, 0.0])
    x = spectral_init(ens, seed=3)
    np.testing.assert_allclose(np.abs(x.data), [math.sqrt(0.5), 0.0], atol=1e-10)


def test_zero_values_give_zero_signal():
    ens = sample_gaussian_ensemble(4, 10, seed=0).with_values(np.zeros(10))
    assert not np.any(spectral_init(ens).data)
    assert not np.any(weighted_spectral_init(ens).data)


def test_custom_link_is_uninformed():
    ens = measure(sample_gaussian_ensemble(4, 10, link=power_link(3.0), seed=0), np.ones(4))
    x, flags = initialize(ens, seed=1)
    assert flags == [UNINFORMED_INIT]
    assert np.linalg.norm(x.data) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        weighted_spectral_init(ens)


@pytest.mark.parametrize("field", [FieldTag.REAL, FieldTag.COMPLEX])
def test_direction_matches_dense_eigenvector(field):
    _, ens, _ = make_instance(10, 80, field, seed=2)
    jr, ji = ens.jacobians
    b = ens.values
    Y = jr.T @ (b[:, None] * jr)
    if ji is not None:
        Y += ji.T @ (b[:, None] * ji)
    w, V = np.linalg.eigh(Y / ens.m)
    v = V[:, -1]
    x = spectral_init(ens, seed=5).data
    scale = math.sqrt(b.mean() / field.factor)
    assert np.linalg.norm(x) == pytest.approx(scale, rel=1e-12)
    if field is FieldTag.REAL:
        assert abs(abs(x @ v) / scale - 1) <= 1e-8
    else:
        # complex eigenvectors come in phase pairs; x must lie in the top eigenspace
        top = V[:, w >= w[-1] * (1 - 1e-9)]
        assert np.linalg.norm(top.T @ x) / scale == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("field", [FieldTag.REAL, FieldTag.COMPLEX])
def test_scale_equivariance(field):
    truth, ens, _ = make_instance(12, 60, field, seed=7)
    doubled = measure(ens, 2.0 * truth.data)
    np.testing.assert_allclose(doubled.values, 4 * ens.values, rtol=1e-14)
    a = np.linalg.norm(spectral_init(ens, seed=1).data)
    b = np.linalg.norm(spectral_init(doubled, seed=1).data)
    assert abs(b - 2 * a) <= 1e-10
    a = np.linalg.norm(weighted_spectral_init(ens).data)
    b = np.linalg.norm(weighted_spectral_init(doubled).data)
    assert abs(b - 2 * a) <= 1e-10


def test_determinism():
    _, ens, _ = make_instance(12, 60, seed=7)
    np.testing.assert_array_equal(spectral_init(ens, seed=4).data, spectral_init(ens, seed=4).data)


def test_unit_weights_reduce_to_plain_method():
    _, ens, _ = make_instance(9, 70, seed=3)
    x = spectral_init(ens, seed=0).data
    w = weighted_spectral_init(ens, weights=ens.values).data
    assert min(np.linalg.norm(x - w), np.linalg.norm(x + w)) <= 1e-7


def test_gao_xu_weights():
    b = np.array([0.0, 1.0, 2.0, 5.0])
    np.testing.assert_allclose(gao_xu_weights(b), 0.5 - np.exp(-b / 2.0))


def test_start_point_dispatch():
    _, ens, _ = make_instance(9, 40, seed=3)
    x, flags = start_point(ens, InitMethod.GAO_XU)
    np.testing.assert_array_equal(x.data, weighted_spectral_init(ens).data)
    y, _ = start_point(ens, "spectral", seed=2)
    np.testing.assert_array_equal(y.data, spectral_init(ens, seed=2).data)


def _closeness(init, trials=100, n=128, ratio=5):
    hits = []
    for t in range(trials):
        truth, ens, _ = make_instance(n, ratio * n, seed=50_000 + t)
        hits.append(dist_up_to_phase(init(ens), truth) <= 0.5)
    return sum(hits)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="plain spectral start is not within 0.5 at m = 5n for n = 128 (median about 0.8)")
def test_plain_spectral_closeness_at_5n():
    assert _closeness(lambda e: spectral_init(e, seed=1)) >= 95


@pytest.mark.slow
def test_weighted_start_beats_plain_at_5n():
    plain = [dist_up_to_phase(spectral_init(e, 1), t) for t, e, _ in
             (make_instance(128, 640, seed=60_000 + k) for k in range(20))]
    weighted = [dist_up_to_phase(weighted_spectral_init(e), t) for t, e, _ in
                (make_instance(128, 640, seed=60_000 + k) for k in range(20))]
    assert np.median(weighted) < np.median(plain)
