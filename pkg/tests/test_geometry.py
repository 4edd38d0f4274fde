import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dcphase.dc import DcConfig, run_dc
from dcphase.geometry import certify_minimizer_hessian, rank_one_degree_bound
from dcphase.initializer import spectral_init
from dcphase.inner import InnerConfig
from dcphase.model import FieldTag, dist_up_to_phase, measure, power_link, sample_gaussian_ensemble
from dcphase.objective import SplitObjective

from conftest import make_instance, scalar_objective


def test_degree_examples():
    assert rank_one_degree_bound(1) == 1
    assert rank_one_degree_bound(2) == 2
    assert rank_one_degree_bound(4) == 20
    with pytest.raises(ValueError):
        rank_one_degree_bound(0)


@given(st.integers(1, 300))
def test_degree_is_central_binomial(n):
    assert rank_one_degree_bound(n) == math.comb(2 * n - 2, n - 1)


def test_real_recovered_minimizer_is_positive_definite():
    truth, ens, obj = make_instance(8, 32, seed=41)
    x, _ = run_dc(obj, spectral_init(ens), DcConfig(inner=InnerConfig(max_iters=1000)))
    assert dist_up_to_phase(x, truth) <= 1e-5
    rep = certify_minimizer_hessian(obj, x, 200, seed=1)
    assert rep.min_quadratic_form > 0
    assert not rep.negative_curvature
    assert rep.null_direction_residual is None and rep.directions == 200


def test_complex_minimizer_has_flat_phase_direction(complex_instance):
    truth, ens, obj = complex_instance
    rep = certify_minimizer_hessian(obj, truth, 50)
    scale = np.linalg.norm(truth.data) ** 4
    assert abs(rep.null_direction_residual) <= 1e-8 * (1 + scale)
    assert rep.min_quadratic_form >= -1e-10


def test_origin_is_flagged_as_negative_curvature():
    rep = certify_minimizer_hessian(scalar_objective(b=2.0), np.array([0.0]), 10)
    assert rep.min_quadratic_form == pytest.approx(-8.0)
    assert rep.negative_curvature


def test_null_residual_scales_quartically():
    _, ens, _ = make_instance(5, 20, FieldTag.COMPLEX, seed=6)
    # a non-interpolating point so the residual is nonzero
    z = np.random.default_rng(2).normal(size=10)
    one = SplitObjective(ens)
    two = SplitObjective(ens.with_values(4.0 * ens.values))
    r1 = certify_minimizer_hessian(one, z, 1).null_direction_residual
    r2 = certify_minimizer_hessian(two, 2 * z, 1).null_direction_residual
    assert r1 != 0
    assert r2 == pytest.approx(16 * r1, rel=1e-10)


def test_custom_link_rejected():
    ens = measure(sample_gaussian_ensemble(3, 9, link=power_link(3.0), seed=0), np.ones(3))
    with pytest.raises(ValueError):
        certify_minimizer_hessian(SplitObjective(ens), np.ones(3))
