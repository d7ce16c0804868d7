"""``netmpc`` command line: moments, run, sweep, reproduce, inspect.

Exit codes: 0 success, 1 usage or invalid configuration, 2 data mismatch
(moments file for another model, missing moments), 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import presets
from .config import ConfigError, ExperimentConfig, format_config, load_config
from .policy import VARIANTS
from .simulation import (SWEEP_PARAMS, TIMING_COLUMNS, aggregate, ensure_moments,
                         rows_to_csv, run_paths, sweep, trace_rows, variant_config)
from .synthesis import MAGIC, OfflineMoments, estimate_moments, moments_key

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

PRESET_NAMES = ("four-state", "three-state", "three-state-unconstrained", "gilbert-elliott") + presets.FIGURES


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _preset_config(name: str, paths: int | None, seed: int | None) -> ExperimentConfig:
    kw = {"seed": 2024 if seed is None else seed}
    if name == "four-state":
        cfg = presets.base_config(paths or 1000, **kw)
    elif name == "three-state":
        cfg = presets.three_state_config(3, True, paths or 500, **kw)
    elif name == "three-state-unconstrained":
        cfg = presets.three_state_config(1, False, paths or 500, **kw)
    elif name == "gilbert-elliott":
        cfg = presets.base_config(paths or 1000, **kw).with_(
            sensor=presets.ge_channel(0.8), control=presets.ge_channel(0.8))
    elif name in presets.FIGURES:
        # for fig12 this is the drift-constrained configuration
        cfg = presets.figure_preset(name, paths, kw["seed"])[-1 if name == "fig12" else 0].base
    else:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return ExperimentConfig.from_sim_config(cfg)


def _experiment(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise UsageError("give exactly one of --config or --preset")
    if args.config:
        try:
            exp = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    else:
        exp = _preset_config(args.preset, None, None)
    env_seed = os.environ.get("NETMPC_SEED")
    if env_seed is not None:
        try:
            exp.seed = int(env_seed)
        except ValueError:
            raise UsageError(f"NETMPC_SEED must be an integer, got {env_seed!r}") from None
    if getattr(args, "seed", None) is not None:
        exp.seed = args.seed
    if getattr(args, "paths", None) is not None:
        exp.paths = args.paths
    if getattr(args, "steps", None) is not None:
        exp.T = args.steps
    if getattr(args, "threads", None) is not None:
        exp.threads = args.threads
    if getattr(args, "umax", None) is not None:
        exp.model = exp.model.replace(u_max=args.umax)
    if getattr(args, "no_stability", False):
        exp.stability = False
    for name in ("paths", "T", "threads"):
        if getattr(exp, name) < 1:
            raise UsageError(f"--{'steps' if name == 'T' else name} must be at least 1")
    return exp


def _moments(exp: ExperimentConfig, args) -> OfflineMoments:
    """Load the configured moments file, or generate when asked to."""
    override = getattr(args, "moments", None)
    path = override or exp.moments_path
    if getattr(args, "generate_moments", False) or path == "generate":
        return ensure_moments(exp.sim_config())
    if not Path(path).exists():
        raise DataError(f"moments file {path!r} not found (use --generate-moments)")
    mom = OfflineMoments.load(path)
    key = moments_key(exp.model, exp.sensor, exp.control, exp.sat)
    if mom.model_hash != key:
        raise DataError(f"moments file {path!r} was computed for a different model/channels "
                        f"(hash {mom.model_hash[:12]} != {key[:12]})")
    return mom


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _timing_path(out: str | None) -> str | None:
    if out is None or out == "-":
        return None
    p = Path(out)
    return str(p.with_name(p.stem + ".timing.csv"))


def _policies(text: str | None, default) -> list[str]:
    if not text:
        return list(default)
    out = [v.strip() for v in text.split(",") if v.strip()]
    for v in out:
        base = v[:-7] if v.endswith("-nostab") else v
        if base not in VARIANTS:
            raise UsageError(f"unknown policy {v!r}; choose from {', '.join(VARIANTS)}")
    return out


# -- subcommands

def cmd_moments(args) -> int:
    exp = _experiment(args)
    if args.samples is not None:
        exp.moment_samples = args.samples
    if args.moment_seed is not None:
        exp.moment_seed = args.moment_seed
    seed = exp.seed if exp.moment_seed is None else exp.moment_seed
    try:
        mom = estimate_moments(exp.model, exp.sensor, exp.control, exp.sat, exp.moment_samples, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mom.save(args.out)
    print(f"wrote {args.out} (samples={mom.sample_count}, seed={mom.seed}, "
          f"model={mom.model_hash[:12]})", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    exp = _experiment(args)
    variant = _policies(args.policy, [exp.variant])
    if len(variant) != 1:
        raise UsageError("run takes a single --policy")
    mom = _moments(exp, args)
    cfg = variant_config(exp.sim_config(moments=mom), variant[0])
    res = run_paths(cfg)
    agg = aggregate(res)
    row = {"param": "u_max", "value": cfg.model.u_max, "variant": variant[0],
           "msb": agg.empirical_msb, "msb_se": agg.msb_se, "ensemble_msb": agg.ensemble_msb,
           "mae": agg.mae_per_stage, "mae_se": agg.mae_se,
           "mean_solver_time": agg.solver_time_mean, "fallback_rate": agg.fallback_rate}
    _write(rows_to_csv([row]), args.out)
    timing = _timing_path(args.out)
    if timing:
        _write(rows_to_csv([row], TIMING_COLUMNS), timing)
    if args.emit_traces:
        _write(rows_to_csv(trace_rows(res), ("t", "mean_norm", "mean_sq_norm", "mean_u_sq")),
               args.emit_traces)
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SWEEP_PARAMS)}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError("--values must be a comma-separated list of numbers") from None
    if not values:
        raise UsageError("--values is empty")
    variants = _policies(args.policy, ("full", "diagonal", "zero"))
    cfg = exp.sim_config()
    given = args.moments or exp.moments_path
    if not args.generate_moments and given != "generate":
        if args.param == "u_max":
            cfg = cfg.with_(moments=_moments(exp, args))  # the input bound does not enter the moments
        else:
            print("note: channel sweeps estimate moments per value; the moments file is not used",
                  file=sys.stderr)
    try:
        rows, _ = sweep(cfg, args.param, values, variants,
                        progress=lambda r: print(f"  {r['param']}={r['value']:g} {r['variant']}: "
                                                 f"msb={r['msb']:.4g} mae={r['mae']:.4g}",
                                                 file=sys.stderr))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(rows_to_csv(rows), args.out)
    timing = _timing_path(args.out)
    if timing:
        _write(rows_to_csv(rows, TIMING_COLUMNS), timing)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.figure not in presets.FIGURES:
        raise UsageError(f"unknown figure id {args.figure!r}; choose from {', '.join(presets.FIGURES)}")
    seed = args.seed
    if seed is None and os.environ.get("NETMPC_SEED") is not None:
        seed = int(os.environ["NETMPC_SEED"])
    rep = presets.reproduce(args.figure, args.paths, 2024 if seed is None else seed,
                            args.threads or 1,
                            progress=lambda r: print(f"  done: {r}", file=sys.stderr))
    out = Path(args.out or f"reproduce_{args.figure}")
    out.mkdir(parents=True, exist_ok=True)
    for name, text in rep.csvs.items():
        (out / name).write_text(text, encoding="utf-8")
    table = presets.format_comparison(rep.comparison)
    (out / "comparison.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    print(f"\nwrote {len(rep.csvs)} CSV file(s) to {out}/ (published values are Monte-Carlo "
          "targets, not exact oracles)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.file)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw.startswith(MAGIC):
        mom = OfflineMoments.from_bytes(raw)
        np.set_printoptions(precision=4, suppress=True, linewidth=120)
        print(f"moments file {path}")
        print(f"  model hash   {mom.model_hash}")
        print(f"  samples      {mom.sample_count}")
        print(f"  seed         {mom.seed}")
        for k, v in sorted(mom.meta.items()):
            print(f"  {k:<12} {v}")
        for name in ("mu_G", "Sigma_G", "mu_S", "Sigma_S", "Sigma_GS"):
            print(f"{name}:\n{getattr(mom, name)}")
        for name in ("Sigma_psi", "Sigma_psiw", "Sigma_epsi"):
            M = getattr(mom, name)
            print(f"{name}: shape {M.shape}, max |entry| {np.max(np.abs(M), initial=0.0):.4g}")
        return EXIT_OK
    exp = load_config(path)
    from .model import decompose, validate_model
    rep = validate_model(exp.model)
    print(f"config {path}: d={exp.model.d} m={exp.model.m} q={exp.model.q} "
          f"N={exp.model.N} N_r={exp.model.N_r} u_max={exp.model.u_max:g}")
    for chk in rep.checks:
        print(f"  {'ok  ' if chk.passed else 'FAIL'} {chk.name}: {chk.detail}")
    try:
        dec = decompose(exp.model, exp.model.orthogonal_dim)
        print(f"  orthogonal part d_o={dec.d_o}, reachability index {dec.kappa}")
    except ValueError as exc:
        print(f"  decomposition: {exc}")
    print(f"  model fingerprint {exp.model.fingerprint()}")
    return EXIT_OK


def cmd_config(args) -> int:
    exp = _preset_config(args.preset, args.paths, args.seed)
    _write(format_config(exp), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netmpc", description="Networked stochastic MPC with dropout channels.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def source(sp):
        sp.add_argument("--config", help="experiment configuration file")
        sp.add_argument("--preset", help=f"built-in setup: {', '.join(PRESET_NAMES)}")

    def sim_flags(sp):
        sp.add_argument("--policy", help="policy variant(s): full, diagonal, zero, fallback "
                                         "(comma-separated for sweep; '-nostab' suffix drops drift rows)")
        sp.add_argument("--no-stability", action="store_true", help="omit the drift constraints")
        sp.add_argument("--paths", type=int, help="number of sample paths")
        sp.add_argument("--steps", type=int, help="simulation length T")
        sp.add_argument("--seed", type=int, help="base seed (overrides NETMPC_SEED and the config)")
        sp.add_argument("--threads", type=int, help="worker threads for path batches")
        sp.add_argument("--umax", type=float, help="override the input bound")
        sp.add_argument("--moments", help="moments file (overrides the config's [moments] path)")
        sp.add_argument("--generate-moments", action="store_true",
                        help="estimate moments now instead of reading a file")
        sp.add_argument("--out", help="CSV output path (default stdout); wall-clock columns go "
                                      "to <out>.timing.csv")

    sp = sub.add_parser("moments", help="estimate offline moments and write them to a file")
    source(sp)
    sp.add_argument("--out", required=True, help="moments file to write")
    sp.add_argument("--samples", type=int, help="Monte-Carlo sample count (default from config)")
    sp.add_argument("--seed", type=int, help="base seed")
    sp.add_argument("--moment-seed", type=int, help="seed for the moment streams")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("run", help="closed-loop Monte-Carlo run, one CSV row")
    source(sp)
    sim_flags(sp)
    sp.add_argument("--emit-traces", help="write per-step mean traces to this CSV")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep one parameter over several policy variants")
    source(sp)
    sim_flags(sp)
    sp.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("reproduce", help="rerun a published figure and compare")
    sp.add_argument("figure", help=f"one of {', '.join(presets.FIGURES)}")
    sp.add_argument("--paths", type=int, help="sample paths per point (default as published)")
    sp.add_argument("--seed", type=int, help="base seed")
    sp.add_argument("--threads", type=int, help="worker threads")
    sp.add_argument("--out", help="output directory (default reproduce_<figure>)")
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("inspect", help="summarise a moments file or a configuration file")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("config", help="write a preset as an editable configuration file")
    sp.add_argument("--preset", required=True, help=f"one of {', '.join(PRESET_NAMES)}")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"netmpc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"netmpc: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"netmpc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001 - last-resort report with a distinct exit code
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
