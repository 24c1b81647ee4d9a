"""Batch command line front end.

Five subcommands cover the three experiment families: payoff-trend and
threshold for the discounted cooperation analysis, match for a single
repeated game, moran for the population experiment, and cps for the
slot-by-slot recovery simulation. Every command is a pure function of
its flags, config file and seed, and writes plot-ready CSV series plus
JSON summaries; re-running any command reproduces its files byte for
byte. Exit codes: 0 success, 2 bad flags or config, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .cpssim import ConfigError, CpsConfig, run_cps
from .game import (
    DEFAULT_MATRIX,
    GRIM,
    TF2T,
    TFT,
    PayoffMatrix,
    StrategyId,
    cooperation_threshold,
    crossover_stage,
    deviation_payoffs,
    parse_strategy,
    play_match,
    strategy_name,
)

_PUNISHERS = {"grim": GRIM, "tft": TFT, "tf2t": TF2T}


def _fmt(value) -> str:
    """Numbers for CSV cells: integral floats lose the trailing .0."""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return str(value)


def _strategy_arg(text: str) -> StrategyId:
    try:
        return parse_strategy(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _matrix_arg(text: str) -> PayoffMatrix:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"matrix needs four values T,R,P,S, got {text!r}")
    try:
        return PayoffMatrix(*(float(p) for p in parts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _delta_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid discount factor {text!r}") from exc
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"discount factor must be in [0, 1), got {text}")
    return value


def _noise_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid noise {text!r}") from exc
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"noise must be in [0, 1), got {text}")
    return value


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_payoff_trend(args) -> int:
    punisher = _PUNISHERS[args.punisher]
    print(f"delta_star={cooperation_threshold(args.matrix, punisher):.6f}")
    rows = []
    for delta in args.delta:
        crossed_at = crossover_stage(args.matrix, delta, punisher, args.stages)
        dev = deviation_payoffs(args.matrix, punisher, args.stages)
        coop_cum = dev_cum = 0.0
        weight = 1.0
        for stage in range(1, args.stages + 1):
            coop_cum += weight * args.matrix.reward
            dev_cum += weight * dev[stage - 1]
            weight *= delta
            crossed = 1 if crossed_at is not None and stage >= crossed_at else 0
            rows.append([stage, _fmt(delta), _fmt(coop_cum), _fmt(dev_cum), crossed])
    _write_csv(args.out, ["stage", "delta", "coop_cum", "dev_cum", "crossed"], rows)
    return 0


def cmd_threshold(args) -> int:
    punisher = _PUNISHERS[args.punisher]
    value = cooperation_threshold(args.matrix, punisher)
    print(f"delta_star={value:.6f}")
    if args.out is not None:
        _write_csv(args.out, ["punisher", "delta_star"], [[args.punisher, _fmt(value)]])
    return 0


def cmd_match(args) -> int:
    trace = play_match(args.s1, args.s2, args.stages, args.noise, args.seed, args.matrix)
    rows = [
        [o.stage, o.realized[0].value, o.realized[1].value, _fmt(o.payoffs[0]), _fmt(o.payoffs[1])]
        for o in trace.stages
    ]
    _write_csv(args.out, ["stage", "a1", "a2", "p1", "p2"], rows)
    return 0


def _parse_init(text: str) -> dict[StrategyId, int]:
    counts: dict[StrategyId, int] = {}
    for part in text.split(","):
        name, sep, num = part.partition("=")
        if not sep:
            raise ValueError(f"expected name=count, got {part!r}")
        sid = parse_strategy(name)
        if sid in counts:
            raise ValueError(f"strategy {name!r} listed twice")
        try:
            counts[sid] = int(num)
        except ValueError as exc:
            raise ValueError(f"invalid count {num!r} for {name!r}") from exc
    return counts


def cmd_moran(args) -> int:
    from .evolution import MoranConfig, run_moran, trace_winner

    counts = _parse_init(args.init)
    total = sum(counts.values())
    if total != args.pop:
        raise ValueError(f"initial counts sum to {total}, expected population size {args.pop}")
    cfg = MoranConfig(
        initial_counts=counts,
        rounds_max=args.rounds,
        match_stages=args.match_stages,
        noise=args.noise,
        seed=args.seed,
        replicates=args.replicates,
    )
    traces = run_moran(cfg)
    names = [strategy_name(s) for s in counts]
    stem = str(args.out)
    for r, trace in enumerate(traces):
        rows = [[i, *row] for i, row in enumerate(trace.counts)]
        _write_csv(Path(f"{stem}_r{r:03d}.csv"), ["round", *names], rows)
    winner_counts: dict[str, int] = {}
    fixation_rounds = []
    for trace in traces:
        winner = trace_winner(trace)
        key = strategy_name(winner) if winner is not None else "tie"
        winner_counts[key] = winner_counts.get(key, 0) + 1
        if trace.fixation is not None:
            fixation_rounds.append(trace.fixation.round)
    summary = {
        "replicates": cfg.replicates,
        "winner_counts": winner_counts,
        "mean_fixation_round": (
            sum(fixation_rounds) / len(fixation_rounds) if fixation_rounds else None
        ),
    }
    with open(f"{stem}_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_cps(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    cfg = CpsConfig.from_dict(raw)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    trace = run_cps(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    status_header = ["slot", *(f"s{i}" for i in range(cfg.agents))]
    status_rows = [[rec.slot, *(repr(s) for s in rec.statuses)] for rec in trace.slots]
    _write_csv(out_dir / "status.csv", status_header, status_rows)

    decision_rows = []
    for rec in trace.slots:
        for i, decision in enumerate(rec.decisions):
            decision_rows.append(
                [
                    rec.slot,
                    i,
                    decision.action.value if decision.played else "noop",
                    int(decision.executed_recovery),
                    "" if rec.payoffs[i] is None else _fmt(rec.payoffs[i]),
                    _fmt(rec.resources[i]),
                ]
            )
    _write_csv(
        out_dir / "decisions.csv",
        ["slot", "agent", "decision", "executed_recovery", "payoff", "resources_cum"],
        decision_rows,
    )

    message_rows = [
        [rec.slot, int(kind), kind.name.lower()] for rec in trace.slots for kind in rec.messages
    ]
    _write_csv(out_dir / "messages.csv", ["slot", "order", "kind"], message_rows)

    with open(out_dir / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpslab",
        description="deterministic experiment runner: repeated-game analysis, "
        "population dynamics, and the recovery-game simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    trend = sub.add_parser("payoff-trend", help="cumulative discounted payoff streams")
    trend.add_argument("--delta", type=_delta_arg, action="append", required=True,
                       help="discount factor, repeatable")
    trend.add_argument("--punisher", choices=sorted(_PUNISHERS), default="grim")
    trend.add_argument("--stages", type=int, default=100)
    trend.add_argument("--matrix", type=_matrix_arg, default=DEFAULT_MATRIX,
                       help="payoffs as T,R,P,S")
    trend.add_argument("--out", type=Path, required=True)
    trend.set_defaults(func=cmd_payoff_trend)

    thresh = sub.add_parser("threshold", help="cooperation threshold for a punisher")
    thresh.add_argument("--punisher", choices=sorted(_PUNISHERS), default="grim")
    thresh.add_argument("--matrix", type=_matrix_arg, default=DEFAULT_MATRIX)
    thresh.add_argument("--out", type=Path, default=None)
    thresh.set_defaults(func=cmd_threshold)

    match = sub.add_parser("match", help="one repeated match between two strategies")
    match.add_argument("--s1", type=_strategy_arg, required=True)
    match.add_argument("--s2", type=_strategy_arg, required=True)
    match.add_argument("--stages", type=int, default=100)
    match.add_argument("--noise", type=_noise_arg, default=0.0)
    match.add_argument("--seed", type=int, default=0)
    match.add_argument("--matrix", type=_matrix_arg, default=DEFAULT_MATRIX)
    match.add_argument("--out", type=Path, required=True)
    match.set_defaults(func=cmd_match)

    moran = sub.add_parser("moran", help="constant-size birth-death population runs")
    moran.add_argument("--pop", type=int, default=100)
    moran.add_argument("--init", required=True, help="name=count[,name=count...]")
    moran.add_argument("--rounds", type=int, default=1000)
    moran.add_argument("--match-stages", dest="match_stages", type=int, default=100)
    moran.add_argument("--noise", type=_noise_arg, default=0.0)
    moran.add_argument("--seed", type=int, default=0)
    moran.add_argument("--replicates", type=int, default=1)
    moran.add_argument("--out", type=Path, required=True,
                       help="output stem; writes <stem>_rNNN.csv and <stem>_summary.json")
    moran.set_defaults(func=cmd_moran)

    cps = sub.add_parser("cps", help="slot-by-slot recovery simulation")
    cps.add_argument("--config", required=True, help="JSON scenario file")
    cps.add_argument("--seed", type=int, default=None, help="override the config seed")
    cps.add_argument("--out-dir", dest="out_dir", required=True)
    cps.set_defaults(func=cmd_cps)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
