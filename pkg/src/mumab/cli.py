"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 degenerate matrix, 4 I/O error.
A protocol fault during a run is reported in the summary and still exits 0.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .agent import ProtocolParams
from .config import ConfigError, load, load_matrix_file
from .harness import EpisodeResult, SweepResult, run_episode, run_sweep, theoretical_bound
from .matching import DegenerateMatrix, EnumerationLimit, gap_oracle
from .plot import read_curve, render_svg

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("mumab")


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def write_trace(result: EpisodeResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "epoch", "phase", "instant_regret", "cum_regret", "collisions"])
        for t, ell, phase, inst, cum, coll in result.trace.rows():
            w.writerow([t, ell, phase, repr(inst), repr(cum), coll])


def write_curve(sweep: SweepResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean_cum_regret", "stderr"])
        for t, mu, se in zip(sweep.grid.tolist(), sweep.mean.tolist(), sweep.stderr.tolist()):
            w.writerow([t, repr(mu), repr(se)])


def run_summary(cfg: dict, result: EpisodeResult) -> dict:
    stats = result.stats.to_dict()
    steps = len(result.trace)
    return {
        "version": __version__,
        "config": cfg,
        "seed": result.seed,
        "effective_params": result.params.to_dict(),
        "oracle": result.gap.to_dict(),
        "k_equals_m": result.params.k == result.params.m,
        "steps": steps,
        "ell_f": stats.pop("ell_f"),
        "regret": {**result.trace.stage_totals, "total": result.trace.total},
        "theoretical_bound_at_end": theoretical_bound(result.params, steps) if steps > 1 else None,
        **stats,
    }


def sweep_summary(cfg: dict, sweep: SweepResult) -> dict:
    faults = sum(ep.stats.fault_count for ep in sweep.episodes)
    return {
        "version": __version__,
        "config": cfg,
        "seeds": sweep.seeds,
        "effective_params": sweep.params.to_dict(),
        "oracle": sweep.gap.to_dict(),
        "k_equals_m": sweep.params.k == sweep.params.m,
        "grid_steps": len(sweep.mean),
        "final_mean_regret": float(sweep.mean[-1]),
        "fixing_success_rate": sweep.fixing_success_rate(),
        "protocol_fault": faults > 0,
        "fault_count": faults,
        "epoch_boundaries": sweep.boundary_table(),
        "epoch_rates": sweep.epoch_rates(),
        "log_shape_fit": sweep.log_shape(),
        "per_seed": [
            {"seed": ep.seed, "ell_f": ep.stats.ell_f, "boundaries": [list(b) for b in ep.boundaries]}
            for ep in sweep.episodes
        ],
    }


def cmd_oracle(args) -> int:
    matrix = load_matrix_file(args.matrix)
    gap = gap_oracle(matrix)
    print(json.dumps({"k": matrix.k, "m": matrix.m, **gap.to_dict()}, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, run_cfg = load(args.config, args.allow_zero_atom)
    gap = run_cfg.oracle()
    params = run_cfg.params(gap)
    print(json.dumps({"valid": True, "effective_params": params.to_dict(),
                      "oracle": gap.to_dict(), "config": cfg}, indent=2))
    return EXIT_OK


def _out_dir(args, config_path: str) -> Path:
    return Path(args.out_dir) if args.out_dir else Path(config_path).parent


def cmd_run(args) -> int:
    cfg, run_cfg = load(args.config, args.allow_zero_atom)
    result = run_episode(run_cfg, args.seed)
    out = _out_dir(args, args.config)
    write_trace(result, out / cfg["output"]["trace"])
    summary = run_summary(cfg, result)
    _dump(summary, out / cfg["output"]["summary"])
    if cfg["system"]["k"] == cfg["system"]["m"]:
        log.warning("k == m: outside the k < m regime the analysis assumes")
    print(f"total regret {result.trace.total:.6g} over {len(result.trace)} steps; "
          f"R1={summary['regret']['R1']:.6g} R2={summary['regret']['R2']:.6g} "
          f"R3={summary['regret']['R3']:.6g}; ell_f={summary['ell_f']}"
          + ("; PROTOCOL FAULT" if summary["protocol_fault"] else ""))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, run_cfg = load(args.config, args.allow_zero_atom)
    if args.seed_list:
        cfg["sweep"]["seeds"] = [int(s) for s in args.seed_list.split(",") if s.strip()]
    elif args.seeds:
        cfg["sweep"]["seeds"] = list(range(args.seeds))
    if args.workers:
        cfg["sweep"]["workers"] = args.workers
    sweep = run_sweep(run_cfg, cfg["sweep"]["seeds"], workers=cfg["sweep"]["workers"])
    # worker count does not affect results, so it is not part of the echo
    echo = {**cfg, "sweep": {"seeds": cfg["sweep"]["seeds"]}}
    out = _out_dir(args, args.config)
    write_curve(sweep, out / cfg["output"]["curve"])
    summary = sweep_summary(echo, sweep)
    _dump(summary, out / cfg["output"]["summary"])
    fit = summary["log_shape_fit"]
    print(f"{len(sweep.seeds)} seeds; mean final regret {summary['final_mean_regret']:.6g}; "
          f"fixing success {summary['fixing_success_rate']}"
          + (f"; affine fit max residual {fit['vs_epoch']['max_rel_residual']:.3g}" if fit else ""))
    return EXIT_OK


def cmd_plot(args) -> int:
    ts, ys = read_curve(args.curve)
    bound = None
    if args.overlay_bound:
        summary_path = Path(args.summary) if args.summary else Path(args.curve).with_name("summary.json")
        summary = json.loads(summary_path.read_text())
        params = ProtocolParams(**summary["effective_params"])
        bound = lambda t: theoretical_bound(params, t)  # noqa: E731
    out = Path(args.out) if args.out else Path(args.curve).with_suffix(".svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_svg(ts, ys, bound))
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mumab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="print J1, J2, delta and the optimal set of a matrix file")
    p.add_argument("matrix")
    p.set_defaults(func=cmd_oracle)

    def common(p, out=True):
        p.add_argument("--config", required=True)
        p.add_argument("--allow-zero-atom", action="store_true", default=None,
                       help="accept reward laws that can pay exactly 0 (voids the guarantees)")
        if out:
            p.add_argument("--out-dir", help="directory for outputs (default: next to the config)")

    p = sub.add_parser("validate-config", help="validate a config and print effective parameters")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate one episode")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over seeds")
    common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    group.add_argument("--seed-list", help="comma-separated seeds")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render a trace or curve CSV to SVG")
    p.add_argument("curve")
    p.add_argument("--out")
    p.add_argument("--overlay-bound", action="store_true")
    p.add_argument("--summary", help="summary JSON with effective_params (for --overlay-bound)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateMatrix as err:
        print(f"DegenerateMatrix: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, EnumerationLimit, json.JSONDecodeError, ValueError, KeyError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
