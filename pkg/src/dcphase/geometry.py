"""Counting and curvature checks for phase retrieval landscapes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import FieldTag, coords
from .objective import SplitObjective
from .rng import make_rng, standard_normal


def rank_one_degree_bound(n: int) -> int:
    """Exact ``prod_{i=0}^{n-2} (n+i)/(1+i)``, i.e. ``C(2n-2, n-1)``.

    Evaluated as a running binomial: after factor ``i`` the partial product
    is ``C(n+i, i+1)``, so every intermediate division is exact.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    out = 1
    for i in range(n - 1):
        out = out * (n + i) // (1 + i)
    return out


@dataclass(frozen=True)
class HessianCertificate:
    min_quadratic_form: float
    null_direction_residual: Optional[float] = None
    directions: int = 0
    negative_curvature: bool = False


def certify_minimizer_hessian(obj: SplitObjective, x_star, directions: int = 200, seed: int = 0) -> HessianCertificate:
    """Sample the Hessian quadratic form of F at ``x_star``.

    Reports the minimum over ``directions`` random unit directions.  For
    complex signals the form along the global-phase direction ``i z*``
    (embedding ``[-y*; x*]``, left unnormalized) is reported separately; it
    vanishes at an exact interpolating solution.
    """
    if not obj.link.is_square_modulus:
        raise ValueError("Hessian certificate supports only the square-modulus link")
    if directions < 1:
        raise ValueError("directions must be >= 1")
    x = np.array(coords(x_star), dtype=float)
    rng = make_rng(seed)
    best = np.inf
    for _ in range(directions):
        v = standard_normal(rng, x.size)
        v /= np.linalg.norm(v)
        best = min(best, obj.hessian_quadratic_form(x, v))
    null = None
    if obj.ensemble.field is FieldTag.COMPLEX:
        n = x.size // 2
        null = obj.hessian_quadratic_form(x, np.concatenate([-x[n:], x[:n]]))
    return HessianCertificate(float(best), null, directions, bool(best < 0))
