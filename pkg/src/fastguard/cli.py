"""fastguard command line: ingest, analyze, detect, chart, synth.

Exit codes: 0 success / no alerts, 1 error, 2 alerts found (detect).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

from .capture import CaptureFormatError, CaptureStats, read_capture
from .config import RULE_ALIASES, SIDE_ALIASES, RunConfig, load_config, parse_ports
from .estimators import FastAttackDetector
from .events import ConnectionEvent, read_events, write_events
from .features import OrderError, extract_initial_connections, segregate_by_port
from .spc import ConfigError
from .synth import Scenario, preset
from .timeseries import bin_per_second, summarize_ports

EXIT_OK, EXIT_ERROR, EXIT_ALERTS = 0, 1, 2


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _input_format(path: str, config: RunConfig, explicit: bool) -> str:
    if not explicit and Path(path).suffix.lower() in (".pcap", ".cap", ".dmp"):
        return "pcap"
    return config.input_format


def iter_input_events(path: str, fmt: str, stats: Optional[CaptureStats] = None,
                      sort: bool = False):
    if fmt == "pcap":
        fh = open(path, "rb")
        try:
            yield from extract_initial_connections(read_capture(fh, stats), sort=sort)
        finally:
            fh.close()
    else:
        with open(path) as fh:
            yield from read_events(fh)


def load_events(path: str, fmt: str) -> List[ConnectionEvent]:
    stats = CaptureStats()
    events = list(iter_input_events(path, fmt, stats, sort=True))
    if fmt == "pcap" and (stats.decode_errors or stats.truncated_records):
        _log(f"note: {stats.decode_errors} decode errors, "
             f"{stats.truncated_records} truncated records skipped")
    return events


def _out_dir(args) -> Optional[Path]:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args, config: RunConfig) -> int:
    fmt = _input_format(args.input, config, args.format is not None)
    stats = CaptureStats()
    out = _out_dir(args)
    target = open(out / "events.jsonl", "w") if out else sys.stdout
    try:
        n = write_events(target, iter_input_events(args.input, fmt, stats, sort=args.sort))
    finally:
        if out:
            target.close()
    summary = {"format": fmt, "packets": stats.records, "decoded": stats.decoded,
               "skipped": stats.skipped, "decode_errors": stats.decode_errors,
               "truncated_records": stats.truncated_records, "events": n}
    if fmt == "jsonl":
        summary = {"format": fmt, "events": n}
    _log(json.dumps(summary, sort_keys=True))
    if out:
        (out / "ingest_summary.json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_analyze(args, config: RunConfig) -> int:
    fmt = _input_format(args.input, config, args.format is not None)
    events = load_events(args.input, fmt)
    buckets = segregate_by_port(events, config.monitored_ports)
    kept = [e for bucket in buckets.buckets.values() for e in bucket]
    summaries = summarize_ports(bin_per_second(kept, zero_fill=config.zero_fill))

    print(f"{'port':>6} {'mean/s':>8} {'min/s':>6} {'max/s':>6} {'seconds':>8}")
    for s in summaries:
        print(f"{s.port:>6} {s.mean:>8.2f} {s.min:>6} {s.max:>6} {s.n_seconds:>8}")
    print(f"events: {len(events)}  excluded (unmonitored ports): {buckets.excluded}")

    out = _out_dir(args)
    if out:
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["port", "mean", "min", "max", "n_seconds"])
            for s in summaries:
                w.writerow([s.port, f"{s.mean:.2f}", s.min, s.max, s.n_seconds])
    return EXIT_OK


def _detector(config: RunConfig) -> FastAttackDetector:
    # SPC series are always zero-filled so idle seconds plot
    return FastAttackDetector(threshold=config.threshold, k=config.k,
                              rule_set=config.rule_set.value, side=config.side.value,
                              zero_fill=True, monitored_ports=config.monitored_ports)


def cmd_detect(args, config: RunConfig) -> int:
    fmt = _input_format(args.input, config, args.format is not None)
    events = load_events(args.input, fmt)
    alerts = _detector(config).fit_predict(events)
    out = _out_dir(args)
    target = open(out / "alerts.jsonl", "w") if out else sys.stdout
    try:
        for alert in alerts:
            target.write(json.dumps(alert.to_record(), separators=(",", ":")) + "\n")
    finally:
        if out:
            target.close()
    _log(f"{len(alerts)} alert(s)")
    return EXIT_ALERTS if alerts else EXIT_OK


def cmd_chart(args, config: RunConfig) -> int:
    fmt = _input_format(args.input, config, args.format is not None)
    events = load_events(args.input, fmt)
    detector = _detector(config).fit(events)
    charts = detector.chart(events)
    out = _out_dir(args) or Path(".")

    by_port = {}
    for (victim, port), chart in charts.items():
        by_port.setdefault(port, []).append((victim, chart))
    for port in sorted(config.monitored_ports):
        if port not in by_port:
            print(f"port {port}: no traffic, no chart written")
            continue
        path = out / f"port_{port}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["victim", "second", "count", "ucl", "cl", "lcl", "verdict"])
            for victim, (bins, limits, verdicts) in by_port[port]:
                for b, v in zip(bins, verdicts):
                    w.writerow([victim, b.epoch_second, b.count, repr(limits.ucl),
                                repr(limits.cl), repr(limits.lcl), v.value])
        print(f"port {port}: {path}")
    return EXIT_OK


def cmd_synth(args, config: RunConfig) -> int:
    if args.scenario:
        scenario = Scenario.load(args.scenario)
    else:
        scenario = preset(args.preset, start=args.start, duration=args.duration, seed=args.seed)
    events = scenario.generate()
    if args.output and args.output != "-":
        with open(args.output, "w") as fh:
            n = write_events(fh, events)
    else:
        n = write_events(sys.stdout, events)
    _log(f"{n} events")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (default: $FASTGUARD_CONFIG)")
    common.add_argument("--ports", help="comma-separated monitored ports")
    common.add_argument("--k", type=float, help="sigma multiplier for control limits")
    common.add_argument("--threshold", type=int, help="static threshold, connections/second")
    common.add_argument("--rules", choices=sorted(RULE_ALIASES))
    common.add_argument("--side", choices=sorted(SIDE_ALIASES))
    common.add_argument("--zero-fill", action="store_true", default=None,
                        help="zero-fill idle seconds in summaries")
    common.add_argument("--format", choices=["pcap", "jsonl"])
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="fastguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="capture/log -> normalized events")
    p.add_argument("input")
    p.add_argument("--sort", action="store_true", help="sort packets in memory first")
    p.set_defaults(func=cmd_ingest)

    for name, func, text in (("analyze", cmd_analyze, "per-port connection summary"),
                             ("detect", cmd_detect, "emit fast-attack alerts"),
                             ("chart", cmd_chart, "write per-port control chart CSVs")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("input")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic events")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="JSON scenario file")
    src.add_argument("--preset", choices=["normal", "attack"], default="attack")
    p.add_argument("--start", type=int, default=1_000_000_000)
    p.add_argument("--duration", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="output JSONL file (default stdout)")
    p.set_defaults(func=cmd_synth)
    return parser


def resolve_config(args) -> RunConfig:
    config = load_config(args.config)
    return config.updated(
        monitored_ports=parse_ports(args.ports) if args.ports else None,
        k=args.k,
        threshold_override=args.threshold,
        rule_set=RULE_ALIASES[args.rules] if args.rules else None,
        side=SIDE_ALIASES[args.side] if args.side else None,
        zero_fill=args.zero_fill,
        input_format=args.format,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return args.func(args, config)
    except (ConfigError, CaptureFormatError, OrderError, ValueError, OSError, KeyError) as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
