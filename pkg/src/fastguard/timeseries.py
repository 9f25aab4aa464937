"""Per-second binning, per-port summaries and static threshold selection."""
from __future__ import annotations

import ipaddress
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from .events import ConnectionEvent

SeriesKey = Tuple[str, int]

#: connections/second separating normal from fast-attack traffic
DEFAULT_THRESHOLD = 3


@dataclass(frozen=True)
class SecondBin:
    epoch_second: int
    victim_ip: str
    port: int
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("bin count must be non-negative")


@dataclass(frozen=True)
class PortSummary:
    port: int
    mean: float
    min: int
    max: int
    n_seconds: int

    def row(self) -> Tuple[int, str, int, int]:
        return (self.port, f"{self.mean:.2f}", self.min, self.max)


@dataclass(frozen=True)
class ThresholdConfig:
    value: int
    provenance: Tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.value) != self.value or self.value < 1:
            raise ValueError(f"threshold must be an integer >= 1, got {self.value}")


def series_key(key: SeriesKey):
    """Sort key ordering series by numeric victim address, then port."""
    return (int(ipaddress.IPv4Address(key[0])), key[1])


def bin_per_second(events: Iterable[ConnectionEvent], zero_fill: bool = False) -> List[SecondBin]:
    """Count events per (victim, port, epoch second).

    Output is ordered by victim address, port, then second.  With
    ``zero_fill`` every second between a series' first and last observed
    bin is present, with count 0 where idle.
    """
    counts: Counter = Counter(
        (ev.dst_ip, ev.dst_port, ev.epoch_second) for ev in events
    )
    per_series: Dict[SeriesKey, Dict[int, int]] = {}
    for (victim, port, second), n in counts.items():
        per_series.setdefault((victim, port), {})[second] = n

    bins: List[SecondBin] = []
    for key in sorted(per_series, key=series_key):
        seconds = per_series[key]
        if zero_fill:
            span = range(min(seconds), max(seconds) + 1)
        else:
            span = sorted(seconds)
        bins.extend(SecondBin(s, key[0], key[1], seconds.get(s, 0)) for s in span)
    return bins


def group_series(bins: Iterable[SecondBin]) -> Dict[SeriesKey, List[SecondBin]]:
    """Split bins into per-(victim, port) series, keyed in deterministic order."""
    grouped: Dict[SeriesKey, List[SecondBin]] = {}
    for b in bins:
        grouped.setdefault((b.victim_ip, b.port), []).append(b)
    return {k: sorted(grouped[k], key=lambda b: b.epoch_second)
            for k in sorted(grouped, key=series_key)}


def summarize_port(bins: Sequence[SecondBin]) -> PortSummary:
    """Mean, min and max connections/second over one port's bins.

    Bins from several victims on the same port are pooled.
    """
    if not bins:
        raise ValueError("cannot summarize an empty series")
    ports = {b.port for b in bins}
    if len(ports) != 1:
        raise ValueError(f"bins span several ports: {sorted(ports)}")
    counts = [b.count for b in bins]
    return PortSummary(ports.pop(), sum(counts) / len(counts), min(counts),
                       max(counts), len(counts))


def summarize_ports(bins: Iterable[SecondBin]) -> List[PortSummary]:
    by_port: Dict[int, List[SecondBin]] = {}
    for b in bins:
        by_port.setdefault(b.port, []).append(b)
    return [summarize_port(by_port[p]) for p in sorted(by_port)]


def select_threshold(normal_summaries: Iterable[Union[PortSummary, float]],
                     experiment_max: int) -> ThresholdConfig:
    """Static threshold: the larger of the ceiled highest normal mean and
    the highest per-host rate seen in the controlled experiment.

    Callers must drop series already known to be anomalous.
    """
    means: List[float] = []
    provenance: List[str] = []
    for s in normal_summaries:
        if isinstance(s, PortSummary):
            means.append(s.mean)
            provenance.append(f"port {s.port} mean={s.mean:g}")
        else:
            means.append(float(s))
            provenance.append(f"mean={float(s):g}")
    if not means:
        raise ValueError("no normal summaries supplied")
    if experiment_max is None:
        raise ValueError("experiment_max is required")
    provenance.append(f"experiment_max={experiment_max}")
    value = max(math.ceil(max(means)), int(experiment_max))
    return ThresholdConfig(value, tuple(provenance))
