"""Command-line entry point: ``fedoc-sim <subcommand> [flags]``.

Exit status is 0 on success, 1 for configuration or I/O problems, and 2 when an
acceptance check (bound check, marker propagation, topology validation) fails.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.config import settings
from src.config.experiment import (
    ALGORITHMS,
    ExperimentConfig,
    TopologySpec,
    apply_overrides,
    config_from_dict,
    format_kappa,
    parse_config,
)
from src.config.log_config import configure_logging
from src.core.analysis import run_bound_check
from src.core.errors import ConfigError, FedOCError
from src.core.experiment import compare_algorithms, run_experiment, sweep_kappa
from src.core.protocol import completion_round, marker_propagation_check
from src.core.topology import build_topology, validate_topology

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("run", "sweep-kappa", "compare", "bound-check", "propagation-check", "validate")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CHECK_FAILED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedoc-sim", description="FedOC multi-server federated learning simulator")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="TOML config, or a run manifest JSON to replay")
    parser.add_argument("--algorithm", choices=ALGORITHMS)
    parser.add_argument("--kappa", help="cloud aggregation interval: positive integer or 'inf'")
    parser.add_argument("--seed", type=int, help="base seed for every random stream")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--desk-scale", action="store_true", help="cap dataset size and rounds")
    parser.add_argument("--record-trajectories", action="store_true", help="store every ES and client model")
    parser.add_argument("--workers", type=int, help="parallel experiments for sweep-kappa / compare")
    parser.add_argument("--repeats", type=int, help="seeds per setting for sweep-kappa / compare")
    parser.add_argument("--servers", type=int, help="chain length for propagation-check")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    # sweep-kappa varies kappa and sets the algorithm through the sweep section
    sweeping = args.subcommand == "sweep-kappa"
    return apply_overrides(
        cfg,
        algorithm=None if sweeping else args.algorithm,
        kappa=None if sweeping else args.kappa,
        seed=args.seed,
        output_dir=args.out,
        desk_scale=args.desk_scale,
        record_trajectories=args.record_trajectories,
    )


def _out_dir(cfg: ExperimentConfig, name: str) -> Path:
    return Path(cfg.output_dir) if cfg.output_dir else settings.OUTPUT_DIR / name


def _propagation_topology(num_servers: int):
    overlaps = [2] * (num_servers - 1)
    spec = TopologySpec(
        num_servers=num_servers,
        num_clients=2 * num_servers + sum(overlaps),
        overlap_sizes=overlaps,
    )
    return build_topology(spec, rng_seed=0)


def cmd_run(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    result = run_experiment(cfg, run_dir=_out_dir(cfg, cfg.algorithm))
    accuracy = result.final_accuracy
    print(
        f"{cfg.algorithm} kappa={format_kappa(cfg.kappa)}: {len(result.traces)} rounds, "
        f"{result.simulated_time:.1f} simulated s, final accuracy "
        f"{'n/a' if accuracy is None else f'{accuracy:.4f}'} ({result.stop_reason}) -> {result.run_dir}"
    )
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    frame = sweep_kappa(
        cfg, _out_dir(cfg, "sweep"),
        algorithm=args.algorithm, repeats=args.repeats, workers=args.workers,
    )
    print(frame[["kappa", "repeat", "time_to_target_s", "status", "final_accuracy"]].to_string(index=False))
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = _out_dir(cfg, "compare")
    frame = compare_algorithms(cfg, out_dir, repeats=args.repeats, workers=args.workers)
    final = frame.groupby(["algorithm", "repeat"], sort=False).tail(1)
    print(final[["algorithm", "repeat", "simulated_time_s", "accuracy"]].to_string(index=False))
    return EXIT_OK


def cmd_bound_check(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    report = run_bound_check(cfg, out_dir=_out_dir(cfg, "bound_check"))
    bound = report.bound
    print(f"divergence        {report.divergence:.6e}")
    print(f"eps_intra (exact) {bound.eps_intra:.6e}  closed {bound.eps_intra_closed:.6e}")
    print(f"eps_inter (exact) {bound.eps_inter:.6e}  closed {bound.eps_inter_closed:.6e}")
    print(f"rhs               {bound.rhs:.6e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_propagation(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.servers is not None:
        if args.servers < 1:
            raise ConfigError([("--servers", "must be >= 1")])
        topo = _propagation_topology(args.servers)
    else:
        topo = build_topology(cfg.topology, cfg.seeds.resolve()["topology"])
    L = topo.num_servers
    history = marker_propagation_check(topo, rounds=L)
    for r, tags in enumerate(history):
        print(f"round {r}: " + "  ".join(f"ES{l + 1}={{{','.join(str(t + 1) for t in sorted(s))}}}" for l, s in enumerate(tags)))
    done = completion_round(history, server=0)
    print(f"ES1 complete after round {done} (expected {L - 1})")
    if done != L - 1:
        logger.warning("Marker propagation completed at round %s, expected %d", done, L - 1)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    topo = build_topology(cfg.topology, cfg.seeds.resolve()["topology"])
    violations = validate_topology(topo)
    for v in violations:
        print(f"{v.invariant}: {v.detail} (clients {list(v.ids)})")
    if violations:
        return EXIT_CHECK_FAILED
    print(f"config valid; topology L={topo.num_servers} K={topo.num_clients} satisfies all chain invariants")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep-kappa": cmd_sweep,
    "compare": cmd_compare,
    "bound-check": cmd_bound_check,
    "propagation-check": cmd_propagation,
    "validate": cmd_validate,
}


def run_command(subcommand: str, cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    """Dispatch one subcommand and map failures to exit codes."""
    try:
        return COMMANDS[subcommand](cfg, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except (FedOCError, OSError) as exc:
        logger.error("%s failed: %s", subcommand, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level or settings.DEFAULT_LOG_LEVEL)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run_command(args.subcommand, cfg, args)


if __name__ == "__main__":
    sys.exit(main())
