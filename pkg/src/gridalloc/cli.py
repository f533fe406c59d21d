"""Command-line front end for steady-state solves, learning runs, game
enumeration, robustness margins, and exact-chain diagnostics.

All tabular output is CSV with 9-significant-digit floats; summaries are JSON.
``--out -`` streams the CSV to standard output (summaries then go to standard
error so the streams stay separable). Exit codes: 0 ok, 2 input validation,
3 infeasible steady state under ``--strict``, 4 size guard.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .network import (
    DampingParams,
    ParseError,
    ValidationError,
    config_from_string,
    config_to_string,
    load_document,
    paper6_fixture,
)
from .steady_state import PowerBalanceError, solve
from .game import (
    ENUMERATION_GUARD,
    GameContext,
    RecoveryError,
    SizeGuardError,
    enumerate_game,
)
from .learning import TemperatureSchedule, batch_run, run
from .oracle import build_chain, potential_maximizer_states, total_variation
from .robustness import (
    PAPER6_ALPHA_FLOOR_REFERENCE,
    PAPER6_NETWORK_MARGIN_REFERENCE,
    consistency_check,
    robustness_report,
)

ALL_MACHINES = "M"


def _load(args, need_targets: bool):
    if args.network == "paper6":
        net, dp, targets = paper6_fixture()
    else:
        net, dp, targets = load_document(Path(args.network).read_text())
    dm = getattr(args, "dm", None)
    dc = getattr(args, "dc", None)
    if dm is not None or dc is not None:
        if dp is None and (dm is None or dc is None):
            raise ValidationError("need both --dm and --dc when the document has no damping")
        dp = DampingParams(
            d_m=dm if dm is not None else dp.d_m,
            d_c=dc if dc is not None else dp.d_c,
        )
    if dp is None:
        raise ValidationError("network document has no damping; pass --dm and --dc")
    if need_targets and targets is None:
        raise ValidationError("network document has no target angles")
    return net, dp, targets


def _out_stream(path: str):
    """Returns (stream, close_after, aux_stream): aux carries summaries."""
    if path == "-":
        return sys.stdout, False, sys.stderr
    return open(path, "w"), True, sys.stdout


def _write(path: str, emit) -> None:
    fh, close, _ = _out_stream(path)
    try:
        emit(fh)
    finally:
        if close:
            fh.close()


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _dump_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2, default=_json_default)
    fh.write("\n")


# -- solve --------------------------------------------------------------------

def cmd_solve(args) -> int:
    net, dp, _ = _load(args, need_targets=False)
    cfg = config_from_string(args.config, net.n)
    ss = solve(net, cfg, dp, args.delta)
    report = {
        "config": config_to_string(cfg),
        "delta": ss.delta,
        "omega0": ss.omega0,
        "injections": ss.injections.tolist(),
        "edge_flows": ss.edge_flows.tolist(),
        "sine_diffs": ss.sine_diffs.tolist(),
        "angle_diffs": None if ss.angle_diffs is None else ss.angle_diffs.tolist(),
        "feasible": ss.feasible,
        "cohesiveness": None if not ss.feasible else ss.cohesiveness,
    }
    _write(args.out, lambda fh: _dump_json(report, fh))
    if args.strict and not ss.feasible:
        print("error: steady state infeasible under --strict", file=sys.stderr)
        return 3
    return 0


# -- learn ---------------------------------------------------------------------

def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, _, hi = text.partition("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok]


def _first_hit_or_steps(trace, steps: int) -> int:
    hit = trace.first_hit()
    return steps if hit is None else hit


def cmd_learn(args) -> int:
    net, dp, targets = _load(args, need_targets=True)
    ctx = GameContext(net=net, dp=dp, targets=targets, delta=args.delta)
    schedule = TemperatureSchedule.parse(args.schedule)
    initial = config_from_string(args.init * net.n if len(args.init) == 1 else args.init, net.n)
    can_enumerate = net.n <= ENUMERATION_GUARD

    if args.seeds is not None:
        seeds = _parse_seeds(args.seeds)
        summary_batch = batch_run(ctx, initial, schedule, args.steps, seeds)
        per_seed = [
            {
                "seed": tr.seed,
                "final_cfg": config_to_string(tr.final_cfg),
                "final_potential": tr.final_potential,
                "first_hit": tr.first_hit(),
            }
            for tr in summary_batch.traces
        ]
        if args.out != "-":
            def emit(fh):
                fh.write("seed,final_cfg,final_potential,first_hit\n")
                for row in per_seed:
                    hit = "" if row["first_hit"] is None else row["first_hit"]
                    fh.write(
                        f"{row['seed']},{row['final_cfg']},"
                        f"{row['final_potential']:.9g},{hit}\n"
                    )
            _write(args.out, emit)
        summary = {
            "schedule": schedule.label(),
            "steps": args.steps,
            "delta": args.delta,
            "seeds": len(seeds),
            "success_rate": summary_batch.success_rate,
            "mean_final_potential": summary_batch.mean_final_potential,
            "mean_first_hit_censored": float(
                np.mean([_first_hit_or_steps(tr, args.steps) for tr in summary_batch.traces])
            ),
        }
        _dump_json(summary, sys.stdout if args.out != "-" else sys.stderr)
        return 0

    trace = run(ctx, initial, schedule, args.steps, args.seed)
    _write(args.out, trace.write_csv)
    success = None
    if can_enumerate:
        report = enumerate_game(ctx)
        success = report.record_for(trace.final_cfg).is_maximizer
    summary = {
        "seed": args.seed,
        "schedule": schedule.label(),
        "steps": args.steps,
        "delta": args.delta,
        "final_cfg": config_to_string(trace.final_cfg),
        "final_potential": trace.final_potential,
        "first_hit": trace.first_hit(),
        "success": success,
    }
    _, _, aux = _out_stream(args.out) if args.out == "-" else (None, None, sys.stdout)
    _dump_json(summary, aux)
    return 0


# -- enumerate -------------------------------------------------------------------

def cmd_enumerate(args) -> int:
    net, dp, targets = _load(args, need_targets=True)
    ctx = GameContext(net=net, dp=dp, targets=targets, delta=args.delta)
    report = enumerate_game(ctx)
    _write(args.out, report.write_csv)
    maximizers = report.maximizers()
    aux = sys.stderr if args.out == "-" else sys.stdout
    print(
        f"maximizers: {len(maximizers)}  nash: {len(report.nash_configs())}  "
        f"max_potential: {report.max_potential:.9g}",
        file=aux,
    )
    print("maximizer set: " + " ".join(config_to_string(c) for c in maximizers), file=aux)
    return 0


# -- margin ----------------------------------------------------------------------

def cmd_margin(args) -> int:
    net, dp, targets = _load(args, need_targets=True)
    ctx0 = GameContext(net=net, dp=dp, targets=targets, delta=0.0)
    report = robustness_report(ctx0, args.alpha)
    if args.alpha <= report.calibrated_alpha_floor:
        print(
            f"warning: alpha={args.alpha} below calibrated floor "
            f"{report.calibrated_alpha_floor:.9g}",
            file=sys.stderr,
        )
    _write(args.out, report.write_csv)
    consistency = consistency_check(ctx0, args.alpha)
    summary = {
        "alpha": args.alpha,
        "calibrated_alpha_floor": report.calibrated_alpha_floor,
        "network_margin": report.network_margin,
        "network_margin_exact": report.network_margin_exact,
        "min_effective_margin": min(rec.effective_margin for rec in report.records),
        "alpha_below_floor": args.alpha <= report.calibrated_alpha_floor,
        "consistency": consistency,
    }
    if args.network == "paper6":
        summary["reference"] = {
            "alpha_floor": PAPER6_ALPHA_FLOOR_REFERENCE,
            "network_margin": PAPER6_NETWORK_MARGIN_REFERENCE,
        }
    aux = sys.stderr if args.out == "-" else sys.stdout
    _dump_json(summary, aux)
    return 0


# -- gibbs -----------------------------------------------------------------------

def cmd_gibbs(args) -> int:
    net, dp, targets = _load(args, need_targets=True)
    ctx = GameContext(net=net, dp=dp, targets=targets, delta=args.delta)
    etas = [float(tok) for tok in args.etas.split(",") if tok]
    if not etas:
        raise ValidationError("need at least one eta")
    maximizers = potential_maximizer_states(ctx)
    chains = [build_chain(ctx, eta) for eta in etas]

    def emit(fh):
        multi = len(chains) > 1
        header = "state_index,cfg_string,stationary_prob,gibbs_prob"
        fh.write(("eta," + header if multi else header) + "\n")
        for chain in chains:
            for x in range(1 << chain.n):
                from .network import bits_to_config
                cfg = config_to_string(bits_to_config(x, chain.n))
                row = f"{x},{cfg},{chain.stationary[x]:.9g},{chain.gibbs[x]:.9g}"
                fh.write((f"{chain.eta:.9g}," + row if multi else row) + "\n")

    _write(args.out, emit)
    results = []
    for chain in chains:
        mode = int(np.argmax(chain.stationary))
        results.append(
            {
                "eta": chain.eta,
                "total_variation": total_variation(chain.stationary, chain.gibbs),
                "maximizer_mass": chain.maximizer_mass(maximizers),
                "stationary_mode": config_to_string(
                    __import__("gridalloc.network", fromlist=["bits_to_config"]).bits_to_config(
                        mode, chain.n
                    )
                ),
                "mode_is_maximizer": bool(mode in set(maximizers.tolist())),
            }
        )
    summary = {
        "delta": args.delta,
        "maximizer_set": [
            config_to_string(
                __import__("gridalloc.network", fromlist=["bits_to_config"]).bits_to_config(
                    int(x), net.n
                )
            )
            for x in maximizers
        ],
        "results": results,
    }
    aux = sys.stderr if args.out == "-" else sys.stdout
    _dump_json(summary, aux)
    return 0


# -- parser ------------------------------------------------------------------------

def _add_common(sub, targets_cmds=True):
    sub.add_argument("--network", required=True, help="path to a network JSON, or 'paper6'")
    sub.add_argument("--delta", type=float, default=0.0, help="uniform susceptance drop")
    sub.add_argument("--out", default="-", help="output path, or '-' for stdout")
    sub.add_argument("--dm", type=float, default=None, help="override machine damping")
    sub.add_argument("--dc", type=float, default=None, help="override converter damping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridalloc",
        description="Optimal machine/converter allocation on radial networks.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("solve", help="steady state for one configuration")
    _add_common(p)
    p.add_argument("--config", required=True, help="configuration string, e.g. MCCCCM")
    p.add_argument("--strict", action="store_true", help="exit 3 when infeasible")
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("learn", help="run the log-linear learning chain")
    _add_common(p)
    p.add_argument("--schedule", required=True, help="linear:<c> | const-eta:<v> | const-tau:<v>")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", default=None, help="batch mode: '0..99' or comma list")
    p.add_argument("--init", default="M", help="initial configuration (default all machines)")
    p.set_defaults(func=cmd_learn)

    p = subs.add_parser("enumerate", help="exhaustive game table")
    _add_common(p)
    p.set_defaults(func=cmd_enumerate)

    p = subs.add_parser("margin", help="robustness margins and alpha calibration")
    _add_common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=cmd_margin)

    p = subs.add_parser("gibbs", help="exact chain distributions and concentration")
    _add_common(p)
    p.add_argument("--etas", default="0,1,5,20", help="comma-separated inverse temperatures")
    p.set_defaults(func=cmd_gibbs)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SizeGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ParseError, ValidationError, PowerBalanceError, RecoveryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
