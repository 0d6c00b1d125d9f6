"""``qsum`` command line: run scenarios, print the efficiency table, estimate link rates.

Exit codes: 0 success, 2 invalid configuration, 3 qubit capacity exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    FORMATS,
    SCENARIOS,
    RateParams,
    ScenarioSpec,
    efficiency_table,
    emit_report,
    estimate_link_rate,
    run_scenario,
    sample_run,
    success_probability,
    transmissivity,
)
from .protocol import ConfigError
from .statevector import CapacityError

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qsum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a seeded Monte-Carlo scenario")
    # defaults are None so that a --config file can supply them
    run.add_argument("--config", type=Path, help="JSON file using the long option names as keys")
    run.add_argument("--parties", type=int)
    run.add_argument("--bits", type=int)
    run.add_argument("--decoys", type=int)
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--backend", choices=("dense", "pauli"))
    run.add_argument("--format", choices=FORMATS)
    run.add_argument("--out", type=Path)
    run.add_argument("--threshold", type=float)
    run.add_argument("--reveal-secrets", action="store_true", default=None)
    run.add_argument("--target", type=int, help="tp-swap: attacked party")
    run.add_argument("--fake-link", type=int, help="fake-bell: link carrying the fakes")
    run.add_argument("--fake-count", type=int, help="fake-bell: number of fake pairs")
    run.add_argument("--honest-pair", type=int, nargs=2, metavar=("P", "Q"), help="collude: honest parties")
    run.add_argument("--strategy", choices=("withhold", "swap"))
    run.add_argument("--guess-rule", choices=("random", "assume-zero", "leaked"))
    run.add_argument("--check-remaining", action="store_true", default=None,
                     help="also verify the sum bits of chains the attack left alone")
    run.add_argument("--workers", type=int)
    run.add_argument("--timing", action="store_true", help="include wall-clock time in the report")

    eff = sub.add_parser("efficiency", help="qubits per summed bit for the compared protocols")
    eff.add_argument("--parties", type=int, required=True)
    eff.add_argument("--format", choices=("text", "json"), default="text")

    rate = sub.add_parser("rate", help="entangled links per second over a lossy fibre")
    rate.add_argument("--distance", type=float, required=True, help="km")
    rate.add_argument("--loss", type=float, default=0.2, help="dB/km")
    rate.add_argument("--system-eff", type=float, default=0.1)
    rate.add_argument("--rep-rate", type=float, default=1e6, help="attempts per second")
    return parser


def _spec_from_args(args) -> ScenarioSpec:
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in ("parties", "bits", "decoys", "scenario", "trials", "seed", "backend", "format",
                "threshold", "reveal_secrets", "target", "fake_link", "fake_count", "honest_pair",
                "strategy", "guess_rule", "check_remaining", "workers"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    try:
        return ScenarioSpec.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args) -> int:
    spec = _spec_from_args(args)
    stats = run_scenario(spec)
    sample = sample_run(spec) if spec.scenario == "honest" and spec.fmt == "json" else None
    text = emit_report(stats, spec, sample_run=sample, include_timing=args.timing)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


def _cmd_efficiency(args) -> int:
    rows = efficiency_table(args.parties)
    if args.format == "json":
        print(json.dumps([
            {"protocol": r.protocol, "formula": r.formula, "qubits": r.qubits,
             "efficiency": str(r.efficiency), "value": float(r.efficiency)}
            for r in rows
        ], indent=2))
    else:
        for r in rows:
            print(f"{r.protocol:<28} 1/({r.formula}) = {r.efficiency} ~ {float(r.efficiency):.4f}")
    return EXIT_OK


def _cmd_rate(args) -> int:
    p = RateParams(args.distance, args.loss, args.system_eff, args.rep_rate)
    print(f"transmissivity       {transmissivity(p.distance_km, p.loss_db_per_km):.6g}")
    print(f"success per attempt  {success_probability(p):.6g}")
    print(f"links per second     {estimate_link_rate(p):.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "efficiency": _cmd_efficiency, "rate": _cmd_rate}[args.command]
    try:
        return handler(args)
    except CapacityError as exc:
        print(f"qsum: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConfigError as exc:
        print(f"qsum: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
