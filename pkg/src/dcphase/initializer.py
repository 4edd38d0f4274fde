"""Spectral initialization, plain and weighted."""

from __future__ import annotations

import enum

import numpy as np
from scipy.linalg import eigh

from .model import FieldTag, MeasurementEnsemble, Signal
from .rng import make_rng, standard_normal

UNINFORMED_INIT = "uninformed_init"


def initialize(ensemble: MeasurementEnsemble, seed: int = 0, tol: float = 1e-10, max_iter: int = 5000):
    """Spectral start plus any warning flags raised while computing it.

    Returns ``(signal, flags)``.  The direction is the leading eigenvector of
    ``Y = (1/m) sum_i b_i a_i a_i^*`` found by power iteration from a seeded
    random start; it is scaled to the norm implied by the mean measurement,
    ``sqrt(mean b)`` for real designs and ``sqrt(mean b / 2)`` for complex
    Gaussian designs, whose rows carry unit variance in both the real and the
    imaginary part.
    """
    b = ensemble.require_values()
    flags = []
    rng = make_rng(seed)
    if not ensemble.link.is_square_modulus:
        v = standard_normal(rng, ensemble.d)
        flags.append(UNINFORMED_INIT)
        return Signal(ensemble.field, v / np.linalg.norm(v)), flags
    if not np.any(b):
        return Signal.zeros(ensemble.n, ensemble.field), flags

    m = ensemble.m
    v = standard_normal(rng, ensemble.d)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = ensemble.pullback(b * ensemble.inner(v)) / m
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        w /= nw
        done = np.linalg.norm(w - v) <= tol
        v = w
        if done:
            break

    mean_b = max(float(np.mean(b)), 0.0)
    if ensemble.field is FieldTag.COMPLEX:
        mean_b /= 2.0
    return Signal(ensemble.field, np.sqrt(mean_b) * v), flags


def spectral_init(ensemble: MeasurementEnsemble, seed: int = 0) -> Signal:
    """Scaled leading eigenvector of the b-weighted second-moment matrix."""
    return initialize(ensemble, seed)[0]


class InitMethod(str, enum.Enum):
    SPECTRAL = "spectral"
    GAO_XU = "gao_xu"


def gao_xu_weights(b: np.ndarray) -> np.ndarray:
    """``1/2 - exp(-b_i / mean b)``: damps the few huge measurements."""
    return 0.5 - np.exp(-b / np.mean(b))


def weighted_spectral_init(ensemble: MeasurementEnsemble, weights=None) -> Signal:
    """Leading eigenvector of ``(1/m) sum_i w_i a_i a_i^*``, scaled as in :func:`initialize`.

    ``weights=None`` uses :func:`gao_xu_weights`.  The matrix is formed
    densely and diagonalized, since the weights may make it indefinite.
    """
    b = ensemble.require_values()
    if not ensemble.link.is_square_modulus:
        raise ValueError("weighted spectral start needs the square-modulus link")
    if not np.any(b):
        return Signal.zeros(ensemble.n, ensemble.field)
    w = gao_xu_weights(b) if weights is None else np.asarray(weights, dtype=float)
    jr, ji = ensemble.jacobians
    Y = jr.T @ (w[:, None] * jr)
    if ji is not None:
        Y += ji.T @ (w[:, None] * ji)
    d = Y.shape[0]
    _, V = eigh(Y / ensemble.m, subset_by_index=[d - 1, d - 1])
    v = V[:, 0]
    mean_b = max(float(np.mean(b)), 0.0)
    if ensemble.field is FieldTag.COMPLEX:
        mean_b /= 2.0
    return Signal(ensemble.field, np.sqrt(mean_b) * v)


def start_point(ensemble: MeasurementEnsemble, method="spectral", seed: int = 0):
    """``(signal, flags)`` for the named initializer."""
    method = InitMethod(method)
    if method is InitMethod.GAO_XU and ensemble.link.is_square_modulus:
        return weighted_spectral_init(ensemble), []
    return initialize(ensemble, seed)
