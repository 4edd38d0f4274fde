"""Signals, Gaussian measurement ensembles, link functions and noise.

Complex vectors ``z = x + i y`` are stored in the real embedding
``[x; y]`` of length ``2n``.  A complex measurement vector ``a = a_R + i a_I``
is stored as the row ``[a_R, a_I]`` and its inner product with ``z`` is the
bilinear ``a^T z``::

    Re = a_R . x - a_I . y
    Im = a_I . x + a_R . y

which gives ``|a^T z|^2 = (a_R.x - a_I.y)^2 + (a_I.x + a_R.y)^2``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Union
import warnings

import numpy as np

from .rng import make_rng, standard_normal, uniform_symmetric


class FieldTag(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"

    @property
    def factor(self) -> int:
        """Embedding dimension per ambient coordinate."""
        return 1 if self is FieldTag.REAL else 2

    @classmethod
    def parse(cls, value: Union[str, "FieldTag"]) -> "FieldTag":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown field {value!r}; expected 'real' or 'complex'") from None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Signal:
    """A real or complex vector held in its real embedding."""

    field: FieldTag
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "field", FieldTag.parse(self.field))
        data = _readonly(np.ravel(self.data))
        if data.size == 0 or data.size % self.field.factor:
            raise ValueError(f"embedded length {data.size} invalid for a {self.field.value} signal")
        if not np.all(np.isfinite(data)):
            raise ValueError("signal coordinates must be finite")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.size // self.field.factor

    @classmethod
    def from_complex(cls, z) -> "Signal":
        z = np.asarray(z, dtype=complex).ravel()
        return cls(FieldTag.COMPLEX, np.concatenate([z.real, z.imag]))

    @classmethod
    def zeros(cls, n: int, field: FieldTag = FieldTag.REAL) -> "Signal":
        field = FieldTag.parse(field)
        return cls(field, np.zeros(n * field.factor))

    def to_complex(self) -> np.ndarray:
        return to_complex(self.data, self.field)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    def __len__(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Signal(field={self.field.value}, n={self.n})"


def to_complex(x: np.ndarray, field: FieldTag) -> np.ndarray:
    """Ambient-space view of an embedded vector (complex for Complex signals)."""
    x = np.asarray(x, dtype=float)
    if field is FieldTag.REAL:
        return x
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def embed(z: np.ndarray) -> np.ndarray:
    """Real embedding ``[Re z; Im z]`` of a complex vector (real input passes through)."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return np.concatenate([z.real, z.imag], axis=-1)
    return z.astype(float, copy=False)


def coords(x) -> np.ndarray:
    """Embedded coordinates of a Signal or array-like."""
    if isinstance(x, Signal):
        return x.data
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# link functions


class LinkKind(str, enum.Enum):
    SQUARE_MODULUS = "square_modulus"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LinkFunction:
    """Convex, nonnegative, coercive scalar map applied to each inner product.

    All three callables take an array of inner products ``t``: real for real
    ensembles, complex for complex ones.  For complex ``t`` the derivative
    callables act on the real pair ``(Re t, Im t)``:

    ``grad(t)``
        ``df/dRe + 1j * df/dIm`` (a plain real ``f'`` in the real case).
    ``hess(t)``
        the tuple ``(f_RR, f_RI, f_II)`` of second partials (a plain real
        ``f''`` in the real case).
    """

    kind: LinkKind
    name: str
    value: Callable[[np.ndarray], np.ndarray] = dc_field(repr=False)
    grad: Callable[[np.ndarray], np.ndarray] = dc_field(repr=False)
    hess: Callable[[np.ndarray], object] = dc_field(repr=False)

    @property
    def is_square_modulus(self) -> bool:
        return self.kind is LinkKind.SQUARE_MODULUS


def _sq_value(t):
    if np.iscomplexobj(t):
        return t.real * t.real + t.imag * t.imag
    return t * t


def _sq_grad(t):
    return 2.0 * t


def _sq_hess(t):
    if np.iscomplexobj(t):
        two = np.full(t.shape, 2.0)
        return two, np.zeros(t.shape), two
    return np.full(np.shape(t), 2.0)


SQUARE_MODULUS = LinkFunction(LinkKind.SQUARE_MODULUS, "square_modulus", _sq_value, _sq_grad, _sq_hess)


def make_link(value, grad, hess, name: str = "custom") -> LinkFunction:
    """Wrap user callables as a custom link (analytic derivatives required)."""
    return LinkFunction(LinkKind.CUSTOM, name, value, grad, hess)


def power_link(p: float) -> LinkFunction:
    """``f(t) = |t|**p`` for ``p >= 2``: convex, nonnegative and coercive."""
    p = float(p)
    if p < 2.0:
        raise ValueError("power link needs p >= 2 for a twice differentiable convex map")

    def value(t):
        return np.abs(t) ** p

    def grad(t):
        return p * np.abs(t) ** (p - 2.0) * t

    def hess(t):
        r = np.abs(t)
        if not np.iscomplexobj(t):
            return p * (p - 1.0) * r ** (p - 2.0)
        base = p * r ** (p - 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r > 0, (p - 2.0) * p * r ** (p - 2.0) / np.where(r > 0, r * r, 1.0), 0.0)
        return base + w * t.real ** 2, w * t.real * t.imag, base + w * t.imag ** 2

    return LinkFunction(LinkKind.CUSTOM, f"power_{p:g}", value, grad, hess)


# --------------------------------------------------------------------------
# ensembles


class NoiseModel(str, enum.Enum):
    NONE = "none"
    ADDITIVE = "additive"
    INSIDE_OUTSIDE = "inside_outside"


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform noise on ``[-u, u]``.

    ``ADDITIVE`` perturbs each value by ``eps``; ``INSIDE_OUTSIDE`` evaluates
    the link at ``<a, x> + delta`` and then adds ``eps``.
    """

    model: NoiseModel = NoiseModel.NONE
    u: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", NoiseModel(self.model))
        if not self.u >= 0:
            raise ValueError("noise half-width u must be nonnegative")


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """Measurement vectors (embedded rows), observed values and the link."""

    field: FieldTag
    vectors: np.ndarray
    values: Optional[np.ndarray] = None
    link: LinkFunction = SQUARE_MODULUS

    def __post_init__(self):
        object.__setattr__(self, "field", FieldTag.parse(self.field))
        vectors = _readonly(np.atleast_2d(self.vectors))
        m, d = vectors.shape
        if m < 1 or d < 1 or d % self.field.factor:
            raise ValueError(f"vector matrix of shape {vectors.shape} invalid for a {self.field.value} ensemble")
        object.__setattr__(self, "vectors", vectors)
        if self.values is not None:
            values = _readonly(np.ravel(self.values))
            if values.size != m:
                raise ValueError(f"{values.size} values for {m} measurement vectors")
            object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.d // self.field.factor

    @property
    def is_complex(self) -> bool:
        return self.field is FieldTag.COMPLEX

    @cached_property
    def matrix(self) -> np.ndarray:
        """The m-by-n measurement matrix in ambient form (complex for Complex)."""
        return to_complex(self.vectors, self.field)

    @cached_property
    def jacobians(self):
        """Rows of ``d(Re t)/dx`` and ``d(Im t)/dx`` in the embedding (second is None for real)."""
        if not self.is_complex:
            return self.vectors, None
        n = self.n
        ar, ai = self.vectors[:, :n], self.vectors[:, n:]
        return np.hstack([ar, -ai]), np.hstack([ai, ar])

    @cached_property
    def has_negative_values(self) -> bool:
        return self.values is not None and bool(np.any(self.values < 0))

    def inner(self, x) -> np.ndarray:
        """Inner products ``<a_i, x>`` for an embedded vector x."""
        x = coords(x)
        if x.shape[-1] != self.d:
            raise ValueError(f"vector of length {x.shape[-1]} does not match embedding dimension {self.d}")
        if self.is_complex:
            return self.matrix @ to_complex(x, self.field)
        return self.vectors @ x

    def pullback(self, w: np.ndarray) -> np.ndarray:
        """Map per-measurement weights back to the embedding.

        For real ensembles this is ``A^T w``.  For complex ones ``w`` packs the
        partials with respect to ``(Re t_i, Im t_i)`` as ``w_R + 1j w_I`` and
        the result is ``embed(A^H w)``, the chain rule through ``t = A z``.
        """
        if self.is_complex:
            return embed(self.matrix.conj().T @ w)
        return self.vectors.T @ w

    def with_values(self, values) -> "MeasurementEnsemble":
        return MeasurementEnsemble(self.field, self.vectors, values, self.link)

    def require_values(self) -> np.ndarray:
        if self.values is None:
            raise ValueError("ensemble has no measurement values; call measure() first")
        return self.values

    def check_signal(self, x) -> None:
        if isinstance(x, Signal):
            if x.field is not self.field:
                raise ValueError(f"{x.field.value} signal used with a {self.field.value} ensemble")
            if x.n != self.n:
                raise ValueError(f"signal dimension {x.n} does not match ensemble dimension {self.n}")
        elif np.shape(x)[-1] != self.d:
            raise ValueError(f"vector of length {np.shape(x)[-1]} does not match embedding dimension {self.d}")


def sample_gaussian_ensemble(
    n: int, m: int, field: FieldTag = FieldTag.REAL, link: LinkFunction = SQUARE_MODULUS, seed: int = 0
) -> MeasurementEnsemble:
    """Draw m i.i.d. standard Gaussian measurement vectors in dimension n.

    Complex vectors get independent standard normal real and imaginary parts.
    """
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    field = FieldTag.parse(field)
    vectors = standard_normal(make_rng(seed), (m, n * field.factor))
    return MeasurementEnsemble(field, vectors, None, link)


def measure(ensemble: MeasurementEnsemble, truth, noise: Optional[NoiseSpec] = None) -> MeasurementEnsemble:
    """Populate values ``b_i = f(<a_i, truth>)`` plus the selected noise."""
    if not isinstance(truth, Signal):
        truth = Signal(ensemble.field, truth)
    ensemble.check_signal(truth)
    noise = noise or NoiseSpec()
    t = ensemble.inner(truth)
    if noise.model is NoiseModel.NONE:
        return ensemble.with_values(ensemble.link.value(t))
    rng = make_rng(noise.seed)
    if noise.model is NoiseModel.INSIDE_OUTSIDE:
        t = t + uniform_symmetric(rng, noise.u, ensemble.m)
    values = ensemble.link.value(t) + uniform_symmetric(rng, noise.u, ensemble.m)
    if np.any(values < 0):
        warnings.warn("noisy measurements contain negative values; F2 is no longer convex", RuntimeWarning, stacklevel=2)
    return ensemble.with_values(values)


def dist_up_to_phase(x, y) -> float:
    """``min_{|c|=1} ||x - c y||`` for two signals of the same field."""
    if isinstance(x, Signal) and isinstance(y, Signal):
        if x.field is not y.field or x.n != y.n:
            raise ValueError("signals differ in field or dimension")
        field = x.field
    elif isinstance(x, Signal) or isinstance(y, Signal):
        field = (x if isinstance(x, Signal) else y).field
    else:
        field = FieldTag.REAL
    xa, ya = coords(x), coords(y)
    if xa.shape != ya.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    if field is FieldTag.REAL:
        return float(min(np.linalg.norm(xa - ya), np.linalg.norm(xa + ya)))
    zx, zy = to_complex(xa, field), to_complex(ya, field)
    sq = float(xa @ xa + ya @ ya - 2.0 * abs(np.vdot(zx, zy)))
    return float(np.sqrt(max(sq, 0.0)))


# --------------------------------------------------------------------------
# CSV persistence
#
# Layout:   field,n,m
#           <field>,<n>,<m>
#           b,c0,c1,...,c{d-1}
#           one row per measurement (b empty when unset)
# A Signal is written the same way with m = 1 and an empty b column.


def _write_rows(path, field: FieldTag, n: int, rows, values) -> None:
    d = n * field.factor
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field", "n", "m"])
        w.writerow([field.value, n, len(rows)])
        w.writerow(["b"] + [f"c{j}" for j in range(d)])
        for i, row in enumerate(rows):
            b = "" if values is None else repr(float(values[i]))
            w.writerow([b] + [repr(float(v)) for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or [c.strip() for c in rows[0][:3]] != ["field", "n", "m"]:
        raise ValueError(f"{path}: not an ensemble/signal CSV (missing 'field,n,m' header)")
    field = FieldTag.parse(rows[1][0])
    n, m = int(rows[1][1]), int(rows[1][2])
    body = rows[3:]
    if len(body) != m:
        raise ValueError(f"{path}: header declares m={m} but {len(body)} rows follow")
    coords_ = np.array([[float(v) for v in r[1:]] for r in body], dtype=float).reshape(m, -1)
    if coords_.shape[1] != n * field.factor:
        raise ValueError(f"{path}: rows have {coords_.shape[1]} coordinates, expected {n * field.factor}")
    bcol = [r[0] for r in body]
    values = None if all(b == "" for b in bcol) else np.array([float(b) for b in bcol])
    return field, n, coords_, values


def save_ensemble_csv(path: Union[str, Path], ensemble: MeasurementEnsemble) -> None:
    _write_rows(path, ensemble.field, ensemble.n, ensemble.vectors, ensemble.values)


def load_ensemble_csv(path: Union[str, Path], link: LinkFunction = SQUARE_MODULUS) -> MeasurementEnsemble:
    field, _, vectors, values = _read_rows(path)
    return MeasurementEnsemble(field, vectors, values, link)


def save_signal_csv(path: Union[str, Path], signal: Signal) -> None:
    _write_rows(path, signal.field, signal.n, [signal.data], None)


def load_signal_csv(path: Union[str, Path]) -> Signal:
    field, _, rows, _ = _read_rows(path)
    if rows.shape[0] != 1:
        raise ValueError(f"{path}: a signal file holds exactly one row")
    return Signal(field, rows[0])
