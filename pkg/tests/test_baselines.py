import numpy as np
import pytest

from dcphase.baselines import gauss_newton_step, residual_jacobian, run_gauss_newton
from dcphase.dc import DcConfig
from dcphase.harness import ExperimentConfig, SolverKind, run_trial
from dcphase.initializer import weighted_spectral_init
from dcphase.model import FieldTag, dist_up_to_phase, measure, power_link, sample_gaussian_ensemble
from dcphase.objective import SplitObjective

from conftest import make_instance, scalar_objective


def test_scalar_steps():
    assert gauss_newton_step(scalar_objective(), np.array([2.0]))[0] == pytest.approx(1.25)
    assert gauss_newton_step(scalar_objective(), np.array([1.0]))[0] == pytest.approx(1.0)


@pytest.mark.parametrize("field", [FieldTag.REAL, FieldTag.COMPLEX])
def test_residual_jacobian_matches_finite_differences(field):
    _, ens, obj = make_instance(4, 12, field, seed=3)
    x = np.random.default_rng(0).normal(size=ens.d)
    r, J = residual_jacobian(obj, x)
    np.testing.assert_allclose(r, obj.ensemble.link.value(ens.inner(x)) - ens.values)
    h = 1e-6
    for j in range(ens.d):
        e = np.zeros(ens.d)
        e[j] = h
        fd = (residual_jacobian(obj, x + e)[0] - residual_jacobian(obj, x - e)[0]) / (2 * h)
        np.testing.assert_allclose(J[:, j], fd, rtol=1e-6, atol=1e-6)


def test_quadratic_local_convergence():
    truth, ens, obj = make_instance(8, 32, seed=4)
    x = truth.data + 1e-2 * np.random.default_rng(1).normal(size=8)
    errs = [dist_up_to_phase(x, truth)]
    for _ in range(3):
        x = gauss_newton_step(obj, x, damping=0.0)
        errs.append(dist_up_to_phase(x, truth))
    logs = np.log(errs)
    assert errs[2] < errs[1] < errs[0]
    # log e_{k+1} / log e_k approaches 2 for quadratic convergence
    assert (logs[2] / logs[1]) == pytest.approx(2.0, abs=0.35)


def test_start_at_truth(real_instance):
    truth, _, obj = real_instance
    x, trace = run_gauss_newton(obj, truth)
    assert trace.converged and trace.iterations == 0
    assert dist_up_to_phase(x, truth) == 0.0


def test_zero_start_raises_and_is_a_failed_trial():
    _, _, obj = make_instance(4, 12, seed=1)
    with pytest.raises(ValueError):
        run_gauss_newton(obj, np.zeros(4))
    cfg = ExperimentConfig(n=4, ratios=(3.0,), trials=1, solver=SolverKind.GN)
    rep = run_trial(cfg, (0, 0), 0, x1=np.zeros(4))
    assert not rep.success
    assert any(f.startswith("solver_error") for f in rep.flags)


def test_complex_needs_damping(complex_instance):
    truth, ens, obj = complex_instance
    x = truth.data + 0.01
    with pytest.raises(np.linalg.LinAlgError):
        gauss_newton_step(obj, x, damping=0.0)
    y, trace = run_gauss_newton(obj, x)
    assert dist_up_to_phase(y, truth) <= 1e-5


def test_custom_link_rejected():
    ens = measure(sample_gaussian_ensemble(3, 9, link=power_link(3.0), seed=0), np.ones(3))
    with pytest.raises(ValueError):
        gauss_newton_step(SplitObjective(ens), np.ones(3))


@pytest.mark.parametrize("seed", range(5))
def test_residual_never_grows(seed):
    truth, ens, obj = make_instance(10, 25, seed=100 + seed)
    x1 = weighted_spectral_init(ens)
    x, trace = run_gauss_newton(obj, x1, DcConfig(max_outer=100))
    F = trace.F
    assert np.all(np.diff(F) <= 0)
    assert F[-1] <= F[0]
    if trace.converged and F[-1] <= 1e-20:
        assert dist_up_to_phase(x, truth) <= 1e-5
