"""Least-squares objective and its convex split.

``F(x) = sum_i (f(<a_i,x>) - b_i)^2 = F1(x) - F2(x)`` with

``F1(x) = sum_i f(<a_i,x>)^2 + b_i^2``  and  ``F2(x) = sum_i 2 b_i f(<a_i,x>)``.

Both parts are convex whenever every ``b_i >= 0``.  All derivatives are
computed in the real embedding by the chain rule through the inner products
``t_i = <a_i, x>``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .model import MeasurementEnsemble, coords
from .rng import make_rng, standard_normal

LIPSCHITZ_FLOOR = 1e-12
LIPSCHITZ_SAFETY = 1.1
_DIRECTION_SEED = 0x5EED_11


def _apply_hess(h, dt, is_complex: bool):
    """Second-derivative tensor of the link applied to the inner-product perturbation."""
    if not is_complex:
        return h * dt
    hrr, hri, hii = h
    return (hrr * dt.real + hri * dt.imag) + 1j * (hri * dt.real + hii * dt.imag)


def _pair_dot(u, v, is_complex: bool):
    """Real dot product of per-row partial pairs."""
    if not is_complex:
        return u * v
    return u.real * v.real + u.imag * v.imag


def _power_iteration(apply, d: int, rng, tol: float = 1e-8, max_iter: int = 300) -> float:
    """Largest eigenvalue of a PSD operator given by ``apply``."""
    v = standard_normal(rng, d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = apply(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return max(lam, float(v @ apply(v)))


class SplitObjective:
    """Evaluator for F, F1, F2, their gradients and Hessian actions.

    Parameters
    ----------
    ensemble : MeasurementEnsemble
        Measurement vectors with populated values.

    Attributes
    ----------
    lipschitz_F1 : float or None
        Last estimate returned by :meth:`estimate_lipschitz_F1`.
    strong_convexity : float or None
        Last estimate returned by :meth:`strong_convexity_F2`.
    """

    def __init__(self, ensemble: MeasurementEnsemble):
        self.ensemble = ensemble
        self.b = ensemble.require_values()
        self.link = ensemble.link
        self.is_complex = ensemble.is_complex
        self.d = ensemble.d
        self._b2 = float(np.sum(self.b * self.b))
        self.lipschitz_F1 = None
        self.strong_convexity = None
        self._lip_cache = {}
        self._sc_cache = None

    @property
    def has_negative_values(self) -> bool:
        return self.ensemble.has_negative_values

    def _check(self, x) -> np.ndarray:
        self.ensemble.check_signal(x)
        return coords(x)

    # values ---------------------------------------------------------------

    def components(self, x):
        """``(F, F1, F2)`` from a single pass over the inner products."""
        fv = self.link.value(self.ensemble.inner(self._check(x)))
        r = fv - self.b
        return float(np.sum(r * r)), float(np.sum(fv * fv)) + self._b2, float(np.sum(2.0 * self.b * fv))

    def eval_F(self, x) -> float:
        fv = self.link.value(self.ensemble.inner(self._check(x)))
        r = fv - self.b
        return float(np.sum(r * r))

    def eval_split(self, x):
        _, f1, f2 = self.components(x)
        return f1, f2

    def eval_F1(self, x) -> float:
        fv = self.link.value(self.ensemble.inner(self._check(x)))
        return float(np.sum(fv * fv)) + self._b2

    def eval_F2(self, x) -> float:
        fv = self.link.value(self.ensemble.inner(self._check(x)))
        return float(np.sum(2.0 * self.b * fv))

    # gradients ------------------------------------------------------------

    def _first_order(self, x):
        t = self.ensemble.inner(self._check(x))
        return t, self.link.value(t), self.link.grad(t)

    def grad_F1(self, x) -> np.ndarray:
        _, fv, g = self._first_order(x)
        return self.ensemble.pullback(2.0 * fv * g)

    def grad_F2(self, x) -> np.ndarray:
        _, _, g = self._first_order(x)
        return self.ensemble.pullback(2.0 * self.b * g)

    def grad_F(self, x) -> np.ndarray:
        return self.grad_F1(x) - self.grad_F2(x)

    def grads(self, x):
        """``(grad F1, grad F2)`` sharing one evaluation of the inner products."""
        _, fv, g = self._first_order(x)
        return self.ensemble.pullback(2.0 * fv * g), self.ensemble.pullback(2.0 * self.b * g)

    def F1_and_grad(self, x):
        _, fv, g = self._first_order(x)
        return float(np.sum(fv * fv)) + self._b2, self.ensemble.pullback(2.0 * fv * g)

    def anchor_state(self, x0):
        """Inner products and link values at ``x0``, for :meth:`F1_increment`."""
        t0 = self.ensemble.inner(self._check(x0))
        return t0, self.link.value(t0)

    def F1_increment(self, state, d, with_grad: bool = False):
        """``F1(x0 + d) - F1(x0)`` (and optionally ``grad F1(x0 + d)``).

        The link increment is formed from ``<a_i, d>`` directly, so the
        difference keeps full relative precision even when it is many orders
        of magnitude below F1 itself.
        """
        t0, f0 = state
        dt = self.ensemble.inner(d)
        t = t0 + dt
        if self.link.is_square_modulus:
            if self.is_complex:
                df = 2.0 * (dt.real * t0.real + dt.imag * t0.imag) + dt.real * dt.real + dt.imag * dt.imag
            else:
                df = dt * (2.0 * t0 + dt)
        else:
            df = self.link.value(t) - f0
        inc = float(np.sum(df * (2.0 * f0 + df)))
        if not with_grad:
            return inc
        return inc, self.ensemble.pullback(2.0 * (f0 + df) * self.link.grad(t))

    # second order ---------------------------------------------------------

    def _second_order(self, x, y):
        t = self.ensemble.inner(self._check(x))
        dt = self.ensemble.inner(self._check(y))
        return self.link.value(t), self.link.grad(t), self.link.hess(t), dt

    def hvp_F1(self, x, y) -> np.ndarray:
        fv, g, h, dt = self._second_order(x, y)
        c = self.is_complex
        w = 2.0 * g * _pair_dot(g, dt, c) + 2.0 * fv * _apply_hess(h, dt, c)
        return self.ensemble.pullback(w)

    def hvp_F2(self, x, y) -> np.ndarray:
        _, _, h, dt = self._second_order(x, y)
        return self.ensemble.pullback(2.0 * self.b * _apply_hess(h, dt, self.is_complex))

    def hessian_quadratic_form(self, x, y) -> float:
        """``y^T H_F(x) y`` with the full Hessian of F.

        Per measurement this is ``2 (f'(t).dt)^2 + 2 (f(t) - b) dt^T f''(t) dt``
        with ``dt = <a, y>``; the second term vanishes at exact interpolation.
        """
        fv, g, h, dt = self._second_order(x, y)
        c = self.is_complex
        gd = _pair_dot(g, dt, c)
        curv = _pair_dot(dt, _apply_hess(h, dt, c), c)
        return float(np.sum(2.0 * gd * gd + 2.0 * (fv - self.b) * curv))

    def weighted_gram(self, wrr, wri=None, wii=None) -> np.ndarray:
        """Dense ``sum_i J_i^T W_i J_i`` over the inner-product Jacobians.

        For real ensembles only ``wrr`` is used and the result is
        ``A^T diag(wrr) A``; complex ensembles take the 2x2 blocks
        ``[[wrr, wri], [wri, wii]]`` per measurement.
        """
        jr, ji = self.ensemble.jacobians
        out = jr.T @ (wrr[:, None] * jr)
        if ji is None:
            return out
        out += ji.T @ (wii[:, None] * ji)
        if wri is not None and np.any(wri):
            cross = jr.T @ (wri[:, None] * ji)
            out += cross + cross.T
        return out

    def hessian_F2(self, x) -> np.ndarray:
        h = self.link.hess(self.ensemble.inner(self._check(x)))
        w = 2.0 * self.b
        if self.is_complex:
            return self.weighted_gram(w * h[0], w * h[1], w * h[2])
        return self.weighted_gram(w * h)

    # curvature estimates ----------------------------------------------------

    def estimate_lipschitz_F1(self, x, radius: float, samples: int = 8) -> float:
        """Sampled upper estimate of the largest Hessian eigenvalue of F1.

        The Hessian is probed by power iteration at ``x`` and at ``samples``
        points on the sphere of the given radius around it (fixed seeded
        directions), and the maximum is inflated by 1.1.  Re-querying the
        same centre never returns less than an earlier query with a smaller
        radius.
        """
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        x = self._check(x).astype(float)
        rng = make_rng(_DIRECTION_SEED)
        dirs = standard_normal(rng, (samples, self.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        points = [x] if radius == 0 else [x] + [x + radius * u for u in dirs]
        lam = 0.0
        for p in points:
            lam = max(lam, _power_iteration(lambda v, p=p: self.hvp_F1(p, v), self.d, rng))
        est = max(LIPSCHITZ_SAFETY * lam, LIPSCHITZ_FLOOR)
        key = x.tobytes()
        history = self._lip_cache.setdefault(key, [])
        est = max([est] + [e for r, e in history if r <= radius])
        history.append((radius, est))
        self.lipschitz_F1 = est
        return est

    def strong_convexity_F2(self, x=None, tol: float = 1e-8, max_iter: int = 500) -> float:
        """Smallest eigenvalue of the Hessian of F2 by inverse power iteration.

        Returns 0 when that Hessian is singular or not positive definite
        (F2 is then at best merely convex).  For the square-modulus link the
        Hessian ``4 sum b_i a_i a_i^T`` does not depend on ``x`` and the
        value is cached.
        """
        if self.link.is_square_modulus and self._sc_cache is not None:
            self.strong_convexity = self._sc_cache
            return self._sc_cache
        if x is None:
            x = np.zeros(self.d)
        H = self.hessian_F2(x)
        value = _min_eigenvalue(H, tol, max_iter)
        if self.link.is_square_modulus:
            self._sc_cache = value
        self.strong_convexity = value
        return value


def _min_eigenvalue(H: np.ndarray, tol: float, max_iter: int) -> float:
    scale = float(np.max(np.abs(H))) if H.size else 0.0
    if scale == 0.0:
        return 0.0
    try:
        factor = cho_factor(H, lower=True, check_finite=False)
    except LinAlgError:
        return 0.0
    if np.min(np.abs(np.diag(factor[0]))) <= 1e-14 * np.sqrt(scale):
        return 0.0
    v = standard_normal(make_rng(_DIRECTION_SEED), H.shape[0])
    v /= np.linalg.norm(v)
    mu = float(v @ H @ v)
    for _ in range(max_iter):
        w = cho_solve(factor, v, check_finite=False)
        v = w / np.linalg.norm(w)
        new = float(v @ H @ v)
        if abs(new - mu) <= tol * abs(new):
            mu = new
            break
        mu = new
    return max(mu, 0.0)
