"""Monte-Carlo success-rate experiments.

A grid cell is a pair (ratio index, sparsity index).  Every trial derives its
own seed from ``(base_seed, ratio index, sparsity index, trial index)`` and
from that seed the truth, the ensemble, the noise and the start, so any
single trial can be rerun in isolation and results do not depend on how
trials are scheduled.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from dataclasses import field as dc_field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .baselines import run_gauss_newton
from .dc import DcConfig, run_dc
from .initializer import InitMethod, start_point
from .inner import InnerConfig
from .model import (
    FieldTag,
    NoiseModel,
    NoiseSpec,
    Signal,
    dist_up_to_phase,
    measure,
    sample_gaussian_ensemble,
)
from .objective import SplitObjective
from .rng import derive_seed, make_rng, standard_normal
from .sparse import SparseConfig, hard_threshold_project, run_l1_dc, run_l1_dc_hard

TABLE_COLUMNS = ("ratio", "s", "successes", "trials")
SOLVER_ERROR = "solver_error"

# sub-stream indices under a trial seed
_TRUTH, _ENSEMBLE, _NOISE, _START = range(4)


class SolverKind(str, enum.Enum):
    DC = "dc"
    L1DC = "l1dc"
    L1DC_HARD = "l1dc_hard"
    GN = "gn"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid.

    ``sparsities`` holds ``None`` for dense truths.  ``m`` for a ratio r is
    ``floor(r * n)``, with a 1e-9 guard so that e.g. ``2.3 * 100`` gives 230.
    """

    n: int = 128
    field: FieldTag = FieldTag.REAL
    ratios: Tuple[float, ...] = (2.0,)
    trials: int = 100
    solver: SolverKind = SolverKind.DC
    dc: DcConfig = dc_field(default_factory=DcConfig)
    sparse: SparseConfig = dc_field(default_factory=SparseConfig)
    noise: NoiseSpec = dc_field(default_factory=NoiseSpec)
    sparsities: Tuple[Optional[int], ...] = (None,)
    success_threshold: float = 1e-5
    base_seed: int = 0
    init: InitMethod = InitMethod.SPECTRAL
    gn_damping: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "field", FieldTag.parse(self.field))
        object.__setattr__(self, "solver", SolverKind(self.solver))
        object.__setattr__(self, "init", InitMethod(self.init))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "sparsities", tuple(None if s is None else int(s) for s in self.sparsities))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.ratios:
            raise ValueError("at least one ratio is required")
        if not self.sparsities:
            raise ValueError("at least one sparsity entry is required (None for dense)")
        for r in self.ratios:
            if measurement_count(r, self.n) < 1:
                raise ValueError(f"ratio {r} gives no measurements at n={self.n}")
        for s in self.sparsities:
            if s is not None and not 1 <= s <= self.n:
                raise ValueError(f"sparsity {s} out of range 1..{self.n}")
        if self.solver is SolverKind.L1DC_HARD and None in self.sparsities:
            raise ValueError("the hard-thresholded solver needs explicit sparsities")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    @property
    def cells(self) -> List[Tuple[int, int]]:
        return [(ri, si) for ri in range(len(self.ratios)) for si in range(len(self.sparsities))]

    def digest(self) -> str:
        """Short hash identifying everything that affects the results."""
        text = json.dumps(asdict(self), sort_keys=True, default=_jsonable)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return str(v)


def measurement_count(ratio: float, n: int) -> int:
    return int(math.floor(ratio * n + 1e-9))


def trial_seed(base_seed: int, ratio_idx: int, sparsity_idx: int, trial_idx: int) -> int:
    return derive_seed(base_seed, ratio_idx, sparsity_idx, trial_idx)


def sample_truth(n: int, field: FieldTag, s: Optional[int], seed: int) -> Signal:
    """Unit-norm Gaussian truth; with ``s`` the Gaussian entries sit on a uniform random support."""
    rng = make_rng(seed)
    k = field.factor
    if s is None or s >= n:
        v = standard_normal(rng, n * k)
    else:
        support = np.sort(rng.choice(n, size=s, replace=False))
        vals = standard_normal(rng, s * k)
        v = np.zeros(n * k)
        for j in range(k):
            v[j * n + support] = vals[j * s:(j + 1) * s]
    return Signal(field, v / np.linalg.norm(v))


@dataclass(frozen=True)
class TrialReport:
    ratio: float
    s: Optional[int]
    trial: int
    seed: int
    success: bool
    final_distance: float
    iterations: int
    flags: Tuple[str, ...] = ()
    wall_time: float = dc_field(default=0.0, compare=False)


def _solve(cfg: ExperimentConfig, obj: SplitObjective, x1, s: Optional[int]):
    if cfg.solver is SolverKind.DC:
        return run_dc(obj, x1, cfg.dc)
    if cfg.solver is SolverKind.GN:
        return run_gauss_newton(obj, x1, cfg.dc, cfg.gn_damping)
    if cfg.solver is SolverKind.L1DC:
        return run_l1_dc(obj, x1, cfg.sparse.with_(sparsity_s=None))
    return run_l1_dc_hard(obj, x1, cfg.sparse.with_(sparsity_s=s))


@dataclass
class TrialSetup:
    """Everything a solver run needs, reproducible from the trial seed."""

    seed: int
    ratio: float
    s: Optional[int]
    truth: Signal
    objective: SplitObjective
    x1: Signal
    flags: List[str]


def prepare_trial(cfg: ExperimentConfig, cell: Tuple[int, int], trial_index: int, truth=None, x1=None) -> TrialSetup:
    """Sample truth and ensemble, measure with noise and build the start."""
    ri, si = cell
    ratio, s = cfg.ratios[ri], cfg.sparsities[si]
    seed = trial_seed(cfg.base_seed, ri, si, trial_index)
    n, fld = cfg.n, cfg.field
    flags: List[str] = []
    if truth is None:
        truth = sample_truth(n, fld, s, derive_seed(seed, _TRUTH))
    elif not isinstance(truth, Signal):
        truth = Signal(fld, truth)
    ens = sample_gaussian_ensemble(n, measurement_count(ratio, n), fld, seed=derive_seed(seed, _ENSEMBLE))
    noise = cfg.noise
    if noise.model is not NoiseModel.NONE:
        noise = replace(noise, seed=derive_seed(seed, _NOISE))
    with warnings.catch_warnings():
        # negative values are reported through the solver flags instead
        warnings.simplefilter("ignore", RuntimeWarning)
        ens = measure(ens, truth, noise)
    obj = SplitObjective(ens)
    if x1 is None:
        x1, init_flags = start_point(ens, cfg.init, derive_seed(seed, _START))
        flags.extend(init_flags)
        if s is not None and cfg.solver in (SolverKind.L1DC, SolverKind.L1DC_HARD):
            x1 = hard_threshold_project(x1, s)
    elif not isinstance(x1, Signal):
        x1 = Signal(fld, x1)
    return TrialSetup(seed, ratio, s, truth, obj, x1, flags)


def solve_trial(cfg: ExperimentConfig, setup: TrialSetup):
    """``(x_final, trace)`` from the configured solver."""
    return _solve(cfg, setup.objective, setup.x1, setup.s)


def relative_distance(x, truth: Signal) -> float:
    d = dist_up_to_phase(x, truth) / float(np.linalg.norm(truth.data))
    return d if math.isfinite(d) else math.inf


def run_trial(cfg: ExperimentConfig, cell: Tuple[int, int], trial_index: int, truth=None, x1=None) -> TrialReport:
    """Run one seeded trial; solver failures become failed trials with a flag."""
    t0 = time.perf_counter()
    setup = prepare_trial(cfg, cell, trial_index, truth, x1)
    flags = list(setup.flags)
    iterations = 0
    try:
        x, trace = solve_trial(cfg, setup)
        flags.extend(trace.flags)
        iterations = trace.iterations
        dist = relative_distance(x, setup.truth)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        flags.append(f"{SOLVER_ERROR}: {type(exc).__name__}: {exc}")
        dist = math.inf
    return TrialReport(
        setup.ratio, setup.s, trial_index, setup.seed, bool(dist <= cfg.success_threshold), float(dist),
        iterations, tuple(flags), time.perf_counter() - t0,
    )


@dataclass
class SuccessTable:
    """Success counts per (ratio, sparsity) cell, in config order."""

    ratios: Tuple[float, ...]
    sparsities: Tuple[Optional[int], ...]
    successes: Dict[Tuple[int, int], int]
    trials: Dict[Tuple[int, int], int]
    config_digest: str = ""
    base_seed: int = 0
    complete: bool = True
    reports: List[TrialReport] = dc_field(default_factory=list, repr=False, compare=False)

    def count(self, ratio: float, s: Optional[int] = None) -> Tuple[int, int]:
        key = (self.ratios.index(float(ratio)), self.sparsities.index(s))
        return self.successes[key], self.trials[key]

    def rate(self, ratio: float, s: Optional[int] = None) -> float:
        k, t = self.count(ratio, s)
        return k / t if t else math.nan

    def rows(self):
        for ri, r in enumerate(self.ratios):
            for si, s in enumerate(self.sparsities):
                yield r, s, self.successes[(ri, si)], self.trials[(ri, si)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r, s, k, t in self.rows():
            w.writerow([repr(r), "" if s is None else s, k, t])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _work(args):
    cfg, cell, t = args
    return run_trial(cfg, cell, t)


def _load_checkpoint(path, digest: str) -> Dict[Tuple[int, int, int], dict]:
    done = {}
    if not path or not os.path.exists(path):
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line after an interruption
            if rec.get("config") == digest:
                done[(rec["ri"], rec["si"], rec["trial"])] = rec
    return done


def _report_record(digest, ri, si, rep: TrialReport) -> dict:
    d = asdict(rep)
    d["flags"] = list(rep.flags)
    d["final_distance"] = rep.final_distance if math.isfinite(rep.final_distance) else "inf"
    d.update(config=digest, ri=ri, si=si)
    return d


def _report_from_record(rec: dict) -> TrialReport:
    dist = rec["final_distance"]
    return TrialReport(
        rec["ratio"], rec["s"], rec["trial"], rec["seed"], rec["success"],
        math.inf if dist == "inf" else float(dist), rec["iterations"], tuple(rec["flags"]), rec["wall_time"],
    )


def run_table(cfg: ExperimentConfig, jobs: int = 1, checkpoint: Optional[str] = None, progress=None) -> SuccessTable:
    """Run every trial of every cell and aggregate success counts.

    ``jobs > 1`` spreads trials over worker processes; the table is the same
    for any ``jobs``.  With ``checkpoint`` each finished trial is appended
    to that JSON-lines file as it completes, and trials already recorded
    there for the same config are skipped, so an interrupted run resumes
    where it stopped.  ``progress`` is called with each new report.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    digest = cfg.digest()
    done = _load_checkpoint(checkpoint, digest)
    items = [(ri, si, t) for ri, si in cfg.cells for t in range(cfg.trials)]
    todo = [it for it in items if it not in done]
    results: Dict[Tuple[int, int, int], TrialReport] = {k: _report_from_record(v) for k, v in done.items()}
    sink = open(checkpoint, "a") if checkpoint else None
    complete = False
    try:
        args = [(cfg, (ri, si), t) for ri, si, t in todo]
        if jobs == 1 or len(args) <= 1:
            stream = map(_work, args)
            pool = None
        else:
            pool = ProcessPoolExecutor(max_workers=jobs)
            stream = pool.map(_work, args, chunksize=max(1, len(args) // (8 * jobs)))
        try:
            for key, rep in zip(todo, stream):
                results[key] = rep
                if sink:
                    sink.write(json.dumps(_report_record(digest, key[0], key[1], rep)) + "\n")
                    sink.flush()
                if progress:
                    progress(rep)
            complete = True
        finally:
            if pool is not None:
                pool.shutdown(wait=complete, cancel_futures=not complete)
    finally:
        if sink:
            sink.close()

    successes = {c: 0 for c in cfg.cells}
    trials = {c: 0 for c in cfg.cells}
    reports = []
    for ri, si, t in items:
        rep = results.get((ri, si, t))
        if rep is None:
            continue
        successes[(ri, si)] += int(rep.success)
        trials[(ri, si)] += 1
        reports.append(rep)
    return SuccessTable(cfg.ratios, cfg.sparsities, successes, trials, digest, cfg.base_seed, complete, reports)


# ---------------------------------------------------------------------------
# presets

def _sixteenths(lo: int, hi: int) -> Tuple[float, ...]:
    return tuple(k / 16 for k in range(lo, hi + 1))


def _tenths(lo: int, hi: int) -> Tuple[float, ...]:
    return tuple(round(k / 10, 10) for k in range(lo, hi + 1))


# Inexact inner solves (two Barzilai-Borwein steps, no momentum) and a
# weighted spectral start; see README for how these were chosen.
BENCH_DC = DcConfig(inner=InnerConfig(max_iters=2, q=0.0), max_outer=3000)
BENCH_SPARSE = SparseConfig(lam=1e-5, max_iters=5000, alpha=4.0, K=100)

PRESETS = {
    "table1": dict(n=128, ratios=_sixteenths(22, 35), trials=1000),
    "table2": dict(n=128, ratios=_sixteenths(37, 50), trials=1000),
    "table3": dict(n=128, field=FieldTag.COMPLEX, ratios=_sixteenths(41, 50), trials=100),
    "table4": dict(n=100, ratios=_tenths(15, 25), trials=100, solver=SolverKind.L1DC),
    "table5": dict(n=100, ratios=_tenths(11, 20), trials=100, solver=SolverKind.L1DC_HARD,
                   sparsities=(1, 5, 10, 20, 30, 40)),
    "table6": dict(n=100, ratios=(1.0, 0.9, 0.8, 0.7, 0.6, 0.5), trials=100, solver=SolverKind.L1DC_HARD,
                   sparsities=(1, 2, 4, 5, 10)),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    """Named grid with benchmark solver settings; keyword overrides win."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    kw = dict(dc=BENCH_DC, sparse=BENCH_SPARSE, init=InitMethod.GAO_XU)
    kw.update(PRESETS[name])
    kw.update(overrides)
    return ExperimentConfig(**kw)


def _row(ratios, counts, s=None):
    return {(r, s): c for r, c in zip(ratios, counts)}


# Published success counts: {preset: {solver: {(ratio, s): count}}} and trials per cell.
REFERENCE_TRIALS = {"table1": 1000, "table2": 1000, "table3": 100, "table4": 100, "table5": 100, "table6": 100}
REFERENCE = {
    "table1": {SolverKind.DC: _row(_sixteenths(22, 35),
                                   (20, 48, 107, 150, 239, 284, 446, 511, 588, 650, 708, 771, 844, 882))},
    "table2": {
        SolverKind.GN: _row(_sixteenths(37, 50), (560, 672, 708, 776, 831, 882, 912, 939, 950, 960, 980, 986, 987, 991)),
        SolverKind.DC: _row(_sixteenths(37, 50), (937, 957, 961, 967, 991, 991, 989, 995, 994, 995, 1000, 1000, 998, 998)),
    },
    "table3": {
        SolverKind.GN: _row(_sixteenths(41, 50), (7, 21, 21, 37, 56, 60, 75, 72, 84, 88)),
        SolverKind.DC: _row(_sixteenths(41, 50), (0, 0, 0, 3, 19, 52, 78, 80, 94, 99)),
    },
    "table4": {SolverKind.L1DC: _row(_tenths(15, 25), (0, 0, 2, 8, 28, 57, 72, 91, 93, 93, 99))},
    "table5": {SolverKind.L1DC_HARD: {
        **_row(_tenths(11, 20), (75, 83, 86, 80, 88, 82, 83, 87, 86, 94), 1),
        **_row(_tenths(11, 20), (54, 61, 72, 63, 80, 80, 74, 85, 83, 87), 5),
        **_row(_tenths(11, 20), (40, 37, 54, 46, 54, 70, 64, 72, 79, 80), 10),
        **_row(_tenths(11, 20), (15, 16, 22, 27, 36, 45, 42, 47, 59, 57), 20),
        **_row(_tenths(11, 20), (0, 3, 3, 10, 15, 22, 33, 36, 39, 44), 30),
        **_row(_tenths(11, 20), (0, 0, 0, 0, 6, 10, 11, 17, 30, 39), 40),
    }},
    "table6": {SolverKind.L1DC_HARD: {
        **_row((1.0, 0.9, 0.8, 0.7, 0.6, 0.5), (83, 80, 66, 66, 58, 52), 1),
        **_row((1.0, 0.9, 0.8, 0.7, 0.6, 0.5), (80, 64, 73, 57, 53, 45), 2),
        **_row((1.0, 0.9, 0.8, 0.7, 0.6, 0.5), (59, 60, 47, 43, 30, 18), 4),
        **_row((1.0, 0.9, 0.8, 0.7, 0.6, 0.5), (56, 44, 38, 26, 11, 7), 5),
        **_row((1.0, 0.9, 0.8, 0.7, 0.6, 0.5), (23, 14, 4, 0, 0, 0), 10),
    }},
}


def reference_rate(name: str, solver, ratio: float, s: Optional[int] = None) -> float:
    counts = REFERENCE[name][SolverKind(solver)]
    return counts[(float(ratio), s)] / REFERENCE_TRIALS[name]


def acceptance_band(p: float, trials: int) -> Tuple[float, float]:
    """``p -/+ max(0.10, 3 sqrt(p(1-p)/trials))``."""
    half = max(0.10, 3.0 * math.sqrt(p * (1.0 - p) / trials))
    return p - half, p + half


def within_band(observed: float, p: float, trials: int) -> bool:
    lo, hi = acceptance_band(p, trials)
    return lo - 1e-12 <= observed <= hi + 1e-12
