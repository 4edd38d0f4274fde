import sys

import numpy as np
import pytest

from dcphase.model import FieldTag, MeasurementEnsemble, Signal, measure, sample_gaussian_ensemble
from dcphase.objective import SplitObjective
from dcphase.rng import make_rng, standard_normal


def make_instance(n, m, field=FieldTag.REAL, seed=0):
    """Unit-norm Gaussian truth, Gaussian ensemble, clean values."""
    field = FieldTag.parse(field)
    v = standard_normal(make_rng(seed + 10_000), n * field.factor)
    truth = Signal(field, v / np.linalg.norm(v))
    ens = measure(sample_gaussian_ensemble(n, m, field, seed=seed), truth)
    return truth, ens, SplitObjective(ens)


def scalar_objective(a=1.0, b=1.0):
    """The 1-D square-modulus problem with one measurement."""
    ens = MeasurementEnsemble(FieldTag.REAL, [[a]], [b])
    return SplitObjective(ens)


class QuadraticProblem:
    """``G(x) = 0.5 x^T H x - c^T x`` with the interface the inner solvers use."""

    def __init__(self, H, c=None, anchor_value=0.0):
        self.H = np.asarray(H, dtype=float)
        self.c = np.zeros(len(self.H)) if c is None else np.asarray(c, dtype=float)
        self.anchor_value = anchor_value
        self.minimizer = np.linalg.solve(self.H, self.c)

    def delta(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x - self.c @ x)

    def grad(self, x):
        return self.H @ np.asarray(x, dtype=float) - self.c

    def delta_and_grad(self, x):
        return self.delta(x), self.grad(x)

    def value(self, x):
        return self.anchor_value + self.delta(x)


@pytest.fixture
def real_instance():
    return make_instance(8, 32, FieldTag.REAL, seed=3)


@pytest.fixture
def complex_instance():
    return make_instance(6, 36, FieldTag.COMPLEX, seed=4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[k])
