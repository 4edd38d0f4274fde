"""Command line entry point: ``dcphase {solve,bench,trace,certify}``.

Every flag can also be given in a flat ``key = value`` config file passed
with ``--config``; keys are the flag names without leading dashes (dashes
or underscores both work).  Flags on the command line override the file.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional

from .geometry import certify_minimizer_hessian
from .harness import (
    PRESETS,
    REFERENCE,
    ExperimentConfig,
    SolverKind,
    acceptance_band,
    prepare_trial,
    preset,
    reference_rate,
    relative_distance,
    run_table,
    solve_trial,
)
from .initializer import InitMethod
from .inner import InnerMethod
from .model import FieldTag, NoiseModel, NoiseSpec

CONFIG_ERROR = 2


class ConfigError(Exception):
    pass


def _float_list(text: str) -> List[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _sparsity_list(text: str) -> List[Optional[int]]:
    out = []
    for t in text.replace(",", " ").split():
        out.append(None if t.lower() in ("none", "dense", "-") else int(t))
    return out


def _add_common(p: argparse.ArgumentParser, single: bool) -> None:
    p.add_argument("--config", help="flat key = value file with defaults for any flag")
    p.add_argument("--n", type=int, help="signal length")
    p.add_argument("--field", choices=[f.value for f in FieldTag])
    p.add_argument("--solver", choices=[k.value for k in SolverKind])
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--init", choices=[k.value for k in InitMethod])
    p.add_argument("--noise-model", choices=[k.value for k in NoiseModel])
    p.add_argument("--noise-u", type=float, help="uniform noise half-width")
    p.add_argument("--lam", type=float, help="l1 weight")
    p.add_argument("--alpha", type=float, help="momentum parameter (> 3)")
    p.add_argument("--K", type=int, help="momentum freeze iteration")
    p.add_argument("--max-iters", type=int, help="iteration cap for the l1 solvers")
    p.add_argument("--max-outer", type=int, help="outer iteration cap for DC and GN")
    p.add_argument("--step-tol", type=float, help="stop when the step norm falls below this")
    p.add_argument("--inner-method", choices=[k.value for k in InnerMethod])
    p.add_argument("--inner-iters", type=int, help="inner iteration cap T")
    p.add_argument("--inner-q", type=float, help="fixed inner momentum")
    p.add_argument("--threshold", type=float, help="relative success distance")
    if single:
        p.add_argument("--m", type=int, help="number of measurements")
        p.add_argument("--ratio", type=float, help="m/n when --m is absent")
        p.add_argument("--s", type=int, help="sparsity of the truth")
        p.add_argument("--trial", type=int, help="trial index within the seed stream")
    else:
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--ratios", type=_float_list, help="comma separated m/n values")
        p.add_argument("--sparsities", type=_sparsity_list, help="comma separated s values ('none' for dense)")
        p.add_argument("--trials", type=int)
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--checkpoint", help="JSON-lines file for resumable runs")
        p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one random instance")
    _add_common(p, single=True)
    p = sub.add_parser("trace", help="solve one instance and write the per-iteration CSV")
    _add_common(p, single=True)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p = sub.add_parser("certify", help="solve one instance and sample the Hessian at the result")
    _add_common(p, single=True)
    p.add_argument("--directions", type=int, help="random directions to sample")
    p = sub.add_parser("bench", help="Monte-Carlo success table")
    _add_common(p, single=False)
    p.add_argument("--out", help="CSV path for the success table")
    return parser


def read_config(path: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, _, value = line.partition(" ")
            key = key.strip().lstrip("-").replace("-", "_")
            if not key:
                raise ConfigError(f"{path}:{no}: missing key")
            out[key] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} for '{args.command}'")
        if action.nargs == 0:
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
            continue
        try:
            value = action.type(text) if action.type else text
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"bad value for {key}: {text!r} (choose from {', '.join(map(str, action.choices))})")
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _pick(args, name, default):
    v = getattr(args, name, None)
    return default if v is None else v


def experiment_from_args(args) -> ExperimentConfig:
    """Merge preset (if any), explicit flags and defaults into one config."""
    name = getattr(args, "preset", None)
    base = preset(name) if name else preset("table1").with_(ratios=(2.0,), trials=100)
    dc, sp, inner = base.dc, base.sparse, base.dc.inner
    inner = inner.with_(
        method=_pick(args, "inner_method", inner.method),
        max_iters=_pick(args, "inner_iters", inner.max_iters),
        q=_pick(args, "inner_q", inner.q),
    )
    dc = dc.with_(inner=inner, max_outer=_pick(args, "max_outer", dc.max_outer), step_tol=_pick(args, "step_tol", dc.step_tol))
    sp = sp.with_(
        lam=_pick(args, "lam", sp.lam), alpha=_pick(args, "alpha", sp.alpha), K=_pick(args, "K", sp.K),
        max_iters=_pick(args, "max_iters", sp.max_iters),
    )
    u = _pick(args, "noise_u", 0.0)
    model = _pick(args, "noise_model", NoiseModel.ADDITIVE.value if u > 0 else NoiseModel.NONE.value)
    n = _pick(args, "n", base.n)
    kw = dict(
        n=n, field=_pick(args, "field", base.field), solver=_pick(args, "solver", base.solver), dc=dc, sparse=sp,
        noise=NoiseSpec(model, u), success_threshold=_pick(args, "threshold", base.success_threshold),
        base_seed=_pick(args, "seed", base.base_seed), init=_pick(args, "init", base.init),
    )
    if hasattr(args, "preset"):
        kw.update(ratios=_pick(args, "ratios", base.ratios), sparsities=_pick(args, "sparsities", base.sparsities),
                  trials=_pick(args, "trials", base.trials))
        if kw["solver"] == SolverKind.L1DC_HARD.value and None in kw["sparsities"]:
            raise ConfigError("solver l1dc_hard needs --sparsities")
    else:
        if args.m is not None:
            ratio = args.m / n
        else:
            ratio = _pick(args, "ratio", 2.0)
        s = args.s
        if s is None and kw["solver"] == SolverKind.L1DC_HARD.value:
            raise ConfigError("solver l1dc_hard needs --s")
        kw.update(ratios=(ratio,), sparsities=(s,), trials=1)
    return base.with_(**kw)


def _single(cfg: ExperimentConfig, args):
    setup = prepare_trial(cfg, (0, 0), _pick(args, "trial", 0))
    x, trace = solve_trial(cfg, setup)
    return setup, x, trace


def cmd_solve(cfg, args, out) -> int:
    setup, x, trace = _single(cfg, args)
    dist = relative_distance(x, setup.truth)
    last = trace.records[-1]
    print(f"n={cfg.n} m={setup.objective.ensemble.m} field={cfg.field.value} solver={cfg.solver.value} seed={setup.seed}", file=out)
    print(f"distance={dist:.6e} success={dist <= cfg.success_threshold}", file=out)
    print(f"iterations={trace.iterations} stop={trace.stop_reason} objective={last.F:.6e}", file=out)
    if trace.flags:
        print("flags=" + ",".join(trace.flags), file=out)
    return 0


def cmd_trace(cfg, args, out) -> int:
    _, _, trace = _single(cfg, args)
    text = trace.to_csv(args.out)
    if not args.out:
        out.write(text)
    return 0


def cmd_certify(cfg, args, out) -> int:
    setup, x, trace = _single(cfg, args)
    rep = certify_minimizer_hessian(setup.objective, x, _pick(args, "directions", 200), seed=setup.seed)
    print(f"distance={relative_distance(x, setup.truth):.6e} grad_norm={trace.records[-1].grad_norm:.3e}", file=out)
    print(f"min_quadratic_form={rep.min_quadratic_form:.6e} directions={rep.directions}", file=out)
    if rep.null_direction_residual is not None:
        print(f"null_direction_residual={rep.null_direction_residual:.6e}", file=out)
    if rep.negative_curvature:
        print("warning: negative curvature found; the point is not a local minimizer", file=out)
    return 0


def cmd_bench(cfg, args, out) -> int:
    jobs = _pick(args, "jobs", 1)
    progress = None
    if not args.quiet:
        def progress(rep):
            print(f"ratio={rep.ratio} s={rep.s} trial={rep.trial} success={rep.success} dist={rep.final_distance:.2e}",
                  file=sys.stderr)
    table = run_table(cfg, jobs=jobs, checkpoint=args.checkpoint, progress=progress)
    text = table.to_csv(args.out)
    out.write(text)
    ref = REFERENCE.get(args.preset or "", {}).get(cfg.solver)
    if ref and cfg.n == preset(args.preset).n:
        for r, s, k, t in table.rows():
            if (r, s) in ref and t:
                p = reference_rate(args.preset, cfg.solver, r, s)
                lo, hi = acceptance_band(p, t)
                verdict = "in band" if lo <= k / t <= hi else "OUT of band"
                print(f"# ratio={r} s={s}: {k}/{t} = {k / t:.3f}; reference {p:.3f} band [{max(lo, 0):.3f}, {min(hi, 1):.3f}] {verdict}",
                      file=sys.stderr)
    return 0


COMMANDS = {"solve": cmd_solve, "trace": cmd_trace, "certify": cmd_certify, "bench": cmd_bench}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    try:
        args = _apply_config(parser, args, argv)
        cfg = experiment_from_args(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"dcphase: config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        return COMMANDS[args.command](cfg, args, out)
    except KeyboardInterrupt:
        if getattr(args, "checkpoint", None):
            print(f"interrupted; rerun with --checkpoint {args.checkpoint} to resume", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
