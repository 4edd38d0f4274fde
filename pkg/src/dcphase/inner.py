"""Convex inner solvers for the DC surrogate.

At an outer iterate ``x_k`` the surrogate is

    G(x) = F1(x) - <grad F2(x_k), x - x_k>,

which is convex because F1 is.  Three solvers are provided: fixed-step
gradient descent with backtracking, Nesterov's accelerated gradient for
strongly convex functions, and a hybrid that takes Barzilai-Borwein steps
inside the Nesterov two-sequence recursion.  Every solver returns the best
iterate it visited, so ``G(x_out) <= G(x0)`` always holds.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .model import coords
from .objective import SplitObjective


class InnerMethod(str, enum.Enum):
    GD = "gd"
    NESTEROV = "nesterov"
    BB_NESTEROV = "bb_nesterov"


@dataclass(frozen=True)
class InnerConfig:
    """Inner solver settings.

    ``grad_tol=None`` means the default ``1e-9 * (1 + |G(x0)|)``.  ``q=None``
    derives the momentum from ``(step_L, nu)``; for the BB hybrid without a
    positive ``nu`` the momentum is zero.  ``nonmonotone_window=None`` turns
    off the BB acceptance test, leaving only the curvature clamp.
    """

    method: InnerMethod = InnerMethod.BB_NESTEROV
    max_iters: int = 100
    grad_tol: Optional[float] = None
    step_L: float = 1.0
    nu: float = 0.0
    bb_clamp: Tuple[float, float] = (1e-8, 1e8)
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    q: Optional[float] = None
    nonmonotone_window: Optional[int] = 10

    def __post_init__(self):
        object.__setattr__(self, "method", InnerMethod(self.method))
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step_L > 0:
            raise ValueError("step_L must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        lo, hi = self.bb_clamp
        if not 0 < lo <= hi:
            raise ValueError("bb_clamp needs 0 < beta_min <= beta_max")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.nonmonotone_window is not None and self.nonmonotone_window < 1:
            raise ValueError("nonmonotone_window must be >= 1 or None")
        if self.q is not None and not 0 <= self.q < 1:
            raise ValueError("momentum q must lie in [0, 1)")

    def with_(self, **changes) -> "InnerConfig":
        return replace(self, **changes)


@dataclass
class InnerProblem:
    """Surrogate G anchored at an outer iterate.

    The solvers work with :meth:`delta`, which is ``G(x) - G(anchor)``
    evaluated without cancellation against the size of F1; near a solution
    the useful decrease of G is far below the rounding error of F1 itself.
    """

    objective: SplitObjective
    anchor: np.ndarray
    anchor_grad_F2: np.ndarray

    def __post_init__(self):
        self.anchor = np.asarray(coords(self.anchor), dtype=float)
        self._state = self.objective.anchor_state(self.anchor)
        self._F1_anchor = None

    @classmethod
    def at(cls, objective: SplitObjective, anchor) -> "InnerProblem":
        anchor = np.array(coords(anchor), dtype=float)
        return cls(objective, anchor, objective.grad_F2(anchor))

    @property
    def anchor_value(self) -> float:
        """``G(anchor) = F1(anchor)``."""
        if self._F1_anchor is None:
            self._F1_anchor = self.objective.eval_F1(self.anchor)
        return self._F1_anchor

    def value(self, x) -> float:
        return self.anchor_value + self.delta(x)

    def grad(self, x) -> np.ndarray:
        return self.objective.grad_F1(x) - self.anchor_grad_F2

    def delta(self, x) -> float:
        d = coords(x) - self.anchor
        return self.objective.F1_increment(self._state, d) - float(self.anchor_grad_F2 @ d)

    def delta_and_grad(self, x):
        d = coords(x) - self.anchor
        inc, g1 = self.objective.F1_increment(self._state, d, with_grad=True)
        return inc - float(self.anchor_grad_F2 @ d), g1 - self.anchor_grad_F2

    def value_and_grad(self, x):
        dv, g = self.delta_and_grad(x)
        return self.anchor_value + dv, g


@dataclass
class InnerResult:
    x: np.ndarray
    iters: int
    grad_norm: float
    value: float
    history: List[float] = field(default_factory=list)  # best G - G(anchor) per iteration
    backtracks: int = 0
    converged: bool = False

    def __iter__(self):
        # unpacks as (x, iters, grad_norm)
        return iter((self.x, self.iters, self.grad_norm))


def nesterov_momentum_coeff(L: float, nu: float) -> float:
    """``(sqrt(L/nu) - 1) / (sqrt(L/nu) + 1)``."""
    if not nu > 0:
        raise ValueError("strong convexity nu must be positive")
    if L < nu:
        raise ValueError("Lipschitz constant L must be >= nu")
    r = math.sqrt(L / nu)
    return (r - 1.0) / (r + 1.0)


def bb_step_size(s, y, clamp: Tuple[float, float] = (1e-8, 1e8)) -> float:
    """Barzilai-Borwein curvature ``s.y / ||s||^2`` clamped to ``clamp``.

    Nonpositive curvature maps to the lower clamp.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    ss = float(s @ s)
    if ss == 0.0:
        raise ValueError("zero displacement: BB step undefined")
    raw = float(s @ y) / ss
    lo, hi = clamp
    if not raw > 0:
        return lo
    return min(max(raw, lo), hi)


def _slack(v: float) -> float:
    # rounding allowance for value comparisons; near convergence the true
    # decrease of G drops below the resolution of G itself
    return 8.0 * np.finfo(float).eps * abs(v)


def _tolerance(cfg: InnerConfig, problem: InnerProblem, delta0: float) -> float:
    if cfg.grad_tol is not None:
        return cfg.grad_tol
    return 1e-9 * (1.0 + abs(problem.anchor_value + delta0))


class _Best:
    __slots__ = ("x", "value", "history")

    def __init__(self, x, value):
        self.x, self.value, self.history = x, value, [value]

    def offer(self, x, value):
        if value < self.value:
            self.x, self.value = x, value
        self.history.append(self.value)


def _finish(problem, best, x0_value, iters, tol, backtracks, candidate=None):
    if candidate is not None:
        cx, cv, cg = candidate
        if cv <= x0_value:
            return InnerResult(cx, iters, cg, problem.anchor_value + cv, best.history, backtracks, True)
    value, grad = problem.delta_and_grad(best.x)
    gn = float(np.linalg.norm(grad))
    return InnerResult(best.x, iters, gn, problem.anchor_value + value, best.history, backtracks, gn <= tol)


def solve_inner_gd(problem: InnerProblem, x0, cfg: InnerConfig) -> InnerResult:
    """Gradient descent with step ``1/(2 step_L)`` and Armijo halving."""
    z = np.array(coords(x0), dtype=float)
    Gz, g = problem.delta_and_grad(z)
    tol = _tolerance(cfg, problem, Gz)
    best = _Best(z, Gz)
    h = 1.0 / (2.0 * cfg.step_L)
    backtracks = 0
    for j in range(cfg.max_iters):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return _finish(problem, best, best.history[0], j, tol, backtracks, (z, Gz, gn))
        gg = gn * gn
        while True:
            trial = z - h * g
            Gt = problem.delta(trial)
            if Gt <= Gz - cfg.sufficient_decrease * h * gg + _slack(Gz):
                break
            h *= cfg.backtrack_factor
            backtracks += 1
            if h * gn <= 1e-16 * (1.0 + np.linalg.norm(z)):
                return _finish(problem, best, best.history[0], j, tol, backtracks)
        z = trial
        Gz, g = problem.delta_and_grad(z)
        best.offer(z, Gz)
    gn = float(np.linalg.norm(g))
    return _finish(problem, best, best.history[0], cfg.max_iters, tol, backtracks, (z, Gz, gn) if gn <= tol else None)


def _momentum(cfg: InnerConfig, L: float) -> float:
    if cfg.q is not None:
        return cfg.q
    if cfg.nu > 0:
        return nesterov_momentum_coeff(max(L, cfg.nu), cfg.nu)
    return 0.0


def solve_inner_nesterov(problem: InnerProblem, x0, cfg: InnerConfig) -> InnerResult:
    """Accelerated gradient with step ``1/L`` and constant momentum q.

    ``z+ = u - grad G(u) / L`` and ``u+ = z+ + q (z+ - z)``.  If a step raises
    G the momentum is reset and L doubled.
    """
    if cfg.q is None and not cfg.step_L >= cfg.nu > 0:
        raise ValueError("Nesterov needs step_L >= nu > 0 (or an explicit q)")
    L = cfg.step_L
    q = _momentum(cfg, L)
    z = np.array(coords(x0), dtype=float)
    u = z
    Gz = problem.delta(z)
    tol = _tolerance(cfg, problem, Gz)
    best = _Best(z, Gz)
    backtracks = 0
    for j in range(cfg.max_iters):
        Gu, gu = problem.delta_and_grad(u)
        gn = float(np.linalg.norm(gu))
        if gn <= tol:
            return _finish(problem, best, best.history[0], j, tol, backtracks, (u, Gu, gn))
        z_new = u - gu / L
        G_new = problem.delta(z_new)
        if not G_new <= Gz + _slack(Gz):
            if u is z:
                L /= cfg.backtrack_factor
                q = _momentum(cfg, L)
            u = z
            backtracks += 1
            best.offer(z, Gz)
            continue
        u = z_new + q * (z_new - z)
        z, Gz = z_new, G_new
        best.offer(z, Gz)
    return _finish(problem, best, best.history[0], cfg.max_iters, tol, backtracks)


def solve_inner_bb_nesterov(problem: InnerProblem, x0, cfg: InnerConfig) -> InnerResult:
    """BB steps inside the Nesterov recursion.

    The first step uses curvature ``step_L``; afterwards ``beta_j`` is the
    clamped BB quotient of the last two z iterates and
    ``z+ = u - grad G(u) / beta_j``, ``u+ = z+ + q (z+ - z)``.  A step whose
    value exceeds the maximum over the last few accepted values is retried
    from ``z`` with doubled curvature.
    """
    q = _momentum(cfg, cfg.step_L)
    lo, hi = cfg.bb_clamp
    z = np.array(coords(x0), dtype=float)
    Gz, gz = problem.delta_and_grad(z)
    tol = _tolerance(cfg, problem, Gz)
    best = _Best(z, Gz)
    window = cfg.nonmonotone_window
    recent = deque([Gz], maxlen=max(1, window or 1))
    beta = min(max(cfg.step_L, lo), hi)
    u, Gu, gu = z, Gz, gz
    backtracks = 0
    for j in range(cfg.max_iters):
        gn = float(np.linalg.norm(gu))
        if gn <= tol:
            return _finish(problem, best, best.history[0], j, tol, backtracks, (u, Gu, gn))
        z_new = u - gu / beta
        G_new, g_new = problem.delta_and_grad(z_new)
        accept = np.isfinite(G_new) and (window is None or G_new <= max(recent) + _slack(Gz))
        if not accept:
            backtracks += 1
            beta = min(2.0 * beta, hi) if beta < hi else hi
            u, Gu, gu = z, Gz, gz
            best.offer(z, Gz)
            if beta >= hi and not np.isfinite(G_new):
                break
            continue
        s = z_new - z
        if not np.any(s):
            break
        beta = bb_step_size(s, g_new - gz, cfg.bb_clamp)
        if q:
            u = z_new + q * s
            Gu, gu = problem.delta_and_grad(u)
        else:
            u, Gu, gu = z_new, G_new, g_new
        z, Gz, gz = z_new, G_new, g_new
        recent.append(Gz)
        best.offer(z, Gz)
    gn = float(np.linalg.norm(gu))
    candidate = (u, Gu, gn) if gn <= tol else None
    return _finish(problem, best, best.history[0], cfg.max_iters, tol, backtracks, candidate)


SOLVERS = {
    InnerMethod.GD: solve_inner_gd,
    InnerMethod.NESTEROV: solve_inner_nesterov,
    InnerMethod.BB_NESTEROV: solve_inner_bb_nesterov,
}


def solve_inner(problem: InnerProblem, x0, cfg: InnerConfig) -> InnerResult:
    return SOLVERS[cfg.method](problem, x0, cfg)
