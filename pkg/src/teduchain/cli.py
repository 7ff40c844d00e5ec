"""Command line: run a live node, simulate scenarios, verify/inspect ledgers."""

from __future__ import annotations

import argparse
import sys

from .canonical import canonical_json_bytes
from .ledger import parse_ledger_bytes, verify_ledger_bytes
from .node import NodeError, load_config
from .sim import NonQuiescent, ScenarioError, parse_scenario, run_simulation, write_outputs

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FILE_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teduchain",
        description="Crowdfunded education contracts on a replicated hash chain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one fundraiser node")
    run_p.add_argument("--config", required=True, help="node config JSON file")

    sim_p = sub.add_parser("sim", help="run a deterministic multi-node simulation")
    sim_p.add_argument("--scenario", required=True, help="scenario JSON file")
    sim_p.add_argument("--seed", type=int, default=0, help="delivery-schedule seed")
    sim_p.add_argument("--out", required=True, help="output directory for ledgers and report")
    sim_p.add_argument("--budget", type=int, default=1_000_000, help="delivery budget")

    verify_p = sub.add_parser("verify", help="verify a ledger file")
    verify_p.add_argument("--ledger", required=True)

    inspect_p = sub.add_parser("inspect", help="print one block from a ledger file")
    inspect_p.add_argument("--ledger", required=True)
    inspect_p.add_argument("--index", type=int, required=True)

    return parser


def cmd_run(args) -> int:
    from .service import run_node  # sockets only when actually serving

    try:
        config = load_config(args.config)
    except (OSError, ValueError, NodeError) as exc:
        print(f"cannot load config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run_node(config)
    except OSError as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_sim(args) -> int:
    try:
        scenario = parse_scenario(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_FILE_ERROR
    except ScenarioError as exc:
        print(f"bad scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        report = run_simulation(scenario, args.seed, message_budget=args.budget)
    except NonQuiescent as exc:
        print(f"simulation did not settle: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_outputs(report, args.out)
    summary = report.to_json()
    print(f"nodes:        {', '.join(report.node_ids)}")
    print(f"deliveries:   {report.message_count} messages, {report.timer_count} timers")
    print(f"funded:       {', '.join(report.funded_students) or '(none)'}")
    print(f"converged:    {report.converged}")
    print(f"safety:       {'ok' if report.safety_ok else report.safety_problems}")
    print(f"conservation: {'ok' if report.conservation_ok else report.conservation_problems}")
    print(f"blocks:       {summary['blocks_per_node']}")
    print(f"outputs in:   {args.out}")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_verify(args) -> int:
    try:
        data = open(args.ledger, "rb").read()
    except OSError as exc:
        print(f"cannot read ledger: {exc}", file=sys.stderr)
        return EXIT_FILE_ERROR
    report = verify_ledger_bytes(data)
    if report.valid:
        print("valid")
        return EXIT_OK
    print(f"invalid at index {report.first_bad_index}: {report.reason}")
    return EXIT_INVALID


def cmd_inspect(args) -> int:
    try:
        data = open(args.ledger, "rb").read()
    except OSError as exc:
        print(f"cannot read ledger: {exc}", file=sys.stderr)
        return EXIT_FILE_ERROR
    chain, bad_index, reason = parse_ledger_bytes(data)
    if chain is None:
        print(f"unreadable ledger at index {bad_index}: {reason}", file=sys.stderr)
        return EXIT_INVALID
    if not 0 <= args.index < len(chain.blocks):
        print(
            f"index {args.index} out of range (chain has {len(chain.blocks)} blocks)",
            file=sys.stderr,
        )
        return EXIT_INVALID
    block = chain.blocks[args.index]
    print(canonical_json_bytes(block.to_json_obj()).decode("utf-8"))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sim": cmd_sim, "verify": cmd_verify, "inspect": cmd_inspect}
    return handlers[args.command](args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
