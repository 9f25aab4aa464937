"""Shewhart control limits, Western Electric rules 1-3 and fast-attack alerts.

Rule 4 (eight consecutive points on one side of the centre line) is never
evaluated: normal traffic sits below the threshold on one side of the
centre line by construction, so the rule would flag all of it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .timeseries import SecondBin, ThresholdConfig

# zone comparisons are done on the sigma scale with this slack, so that
# points sitting exactly on a zone edge are stable under shift and scale
ZONE_EPS = 1e-9


class ConfigError(ValueError):
    pass


class Status(str, enum.Enum):
    IN_CONTROL = "in_control"
    RULE1 = "rule1"
    RULE2 = "rule2"
    RULE3 = "rule3"
    OVER_THRESHOLD = "over_threshold"


class Side(str, enum.Enum):
    UPPER_ONLY = "upper_only"
    TWO_SIDED = "two_sided"


class RuleSet(str, enum.Enum):
    THRESHOLD_ONLY = "threshold_only"
    SPC_ONLY = "spc_only"
    BOTH = "both"


@dataclass(frozen=True)
class ControlLimits:
    mu: float
    sigma: float
    k: float = 3.0

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise ConfigError(f"k must be a positive number, got {self.k}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")

    @property
    def cl(self) -> float:
        return self.mu

    @property
    def ucl(self) -> float:
        return self.mu + self.k * self.sigma

    @property
    def lcl(self) -> float:
        return max(0.0, self.lcl_unclamped)

    @property
    def lcl_unclamped(self) -> float:
        return self.mu - self.k * self.sigma

    def as_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "k": self.k,
                "ucl": self.ucl, "cl": self.cl, "lcl": self.lcl}


@dataclass(frozen=True)
class Verdict:
    index: int
    status: Status
    observed: float
    sigma_distance: Optional[float]
    rules: Tuple[Status, ...] = ()


@dataclass(frozen=True)
class Alert:
    victim_ip: str
    port: int
    epoch_second: int
    count: int
    trigger: Status
    limits: Optional[ControlLimits] = None
    threshold: Optional[int] = None
    triggers: Tuple[Status, ...] = field(default=())

    def to_record(self) -> dict:
        lim = self.limits
        return {
            "victim": self.victim_ip,
            "port": self.port,
            "second": self.epoch_second,
            "count": self.count,
            "trigger": self.trigger.value,
            "ucl": None if lim is None else lim.ucl,
            "cl": None if lim is None else lim.cl,
            "lcl": None if lim is None else lim.lcl,
            "threshold": self.threshold,
        }


def _as_counts(series) -> np.ndarray:
    arr = np.asarray(series, dtype=float).ravel()
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def compute_limits(series: Sequence[float], k: float = 3.0) -> ControlLimits:
    """Centre line and k-sigma limits of a series.

    sigma is the sample standard deviation (n - 1 divisor); a single point
    or a constant series gives sigma 0.  The lower limit is clamped at 0.
    """
    if not (isinstance(k, (int, float)) and math.isfinite(k) and k > 0):
        raise ConfigError(f"k must be a positive number, got {k!r}")
    x = _as_counts(series)
    if x.size == 0:
        raise ValueError("cannot compute control limits of an empty series")
    if x.size == 1 or x.min() == x.max():
        return ControlLimits(float(x[0]), 0.0, float(k))
    return ControlLimits(float(x.mean()), float(x.std(ddof=1)), float(k))


def _window_count(flags: np.ndarray, width: int) -> np.ndarray:
    """Number of True values in the trailing window of ``width`` ending at each index."""
    csum = np.concatenate(([0], np.cumsum(flags, dtype=np.int64)))
    idx = np.arange(1, flags.size + 1)
    return csum[idx] - csum[np.maximum(idx - width, 0)]


def western_electric(series: Sequence[float], limits: ControlLimits,
                     side: Union[Side, str] = Side.UPPER_ONLY) -> List[Verdict]:
    """Judge each point against rules 1-3.

    Rule 1: beyond the control limits (k sigma).  Rule 2: the point is
    beyond 2 sigma and so is at least one other of the last three.  Rule 3:
    the point is at 1 sigma or beyond and so are at least three others of
    the last five.  Rules 2 and 3 count points on the same side only and
    windows are truncated at the start of the series.  Each point reports
    the lowest-numbered rule it violates; ``rules`` lists all of them.
    """
    side = Side(side)
    x = _as_counts(series)
    n = x.size
    fired = [[] for _ in range(n)]
    signs = (1.0,) if side is Side.UPPER_ONLY else (1.0, -1.0)

    if limits.sigma == 0:
        z = None
        for sign in signs:
            for i in np.flatnonzero(sign * (x - limits.cl) > 0):
                fired[i].append(Status.RULE1)
    else:
        with np.errstate(over="ignore"):
            z = (x - limits.cl) / limits.sigma
        for sign in signs:
            sz = sign * z
            beyond_k = sz > limits.k + ZONE_EPS
            zone2 = sz > 2.0 + ZONE_EPS
            zone1 = sz >= 1.0 - ZONE_EPS
            rule2 = zone2 & (_window_count(zone2, 3) >= 2)
            rule3 = zone1 & (_window_count(zone1, 5) >= 4)
            for status, mask in ((Status.RULE1, beyond_k), (Status.RULE2, rule2),
                                 (Status.RULE3, rule3)):
                for i in np.flatnonzero(mask):
                    fired[i].append(status)

    verdicts = []
    for i in range(n):
        rules = tuple(sorted(set(fired[i]), key=lambda s: s.value))
        verdicts.append(Verdict(
            index=i,
            status=rules[0] if rules else Status.IN_CONTROL,
            observed=float(x[i]),
            sigma_distance=None if z is None else float(z[i]),
            rules=rules,
        ))
    return verdicts


def evaluate_series(bins: Sequence[SecondBin], threshold: Optional[ThresholdConfig],
                    limits: Optional[ControlLimits] = None,
                    rule_set: Union[RuleSet, str] = RuleSet.BOTH,
                    side: Union[Side, str] = Side.UPPER_ONLY,
                    k: float = 3.0) -> List[Tuple[Status, ...]]:
    """Triggers for every bin of one (victim, port) series, in precedence order.

    ``over_threshold`` precedes the SPC rules.  When ``limits`` is omitted
    they are computed from the series itself.
    """
    rule_set = RuleSet(rule_set)
    keys = {(b.victim_ip, b.port) for b in bins}
    if len(keys) > 1:
        raise ValueError("bins must belong to a single (victim, port) series")
    counts = [b.count for b in bins]
    out: List[List[Status]] = [[] for _ in bins]

    if rule_set is not RuleSet.SPC_ONLY:
        if threshold is None:
            raise ConfigError("threshold rule requested without a threshold")
        for i, c in enumerate(counts):
            if c > threshold.value:
                out[i].append(Status.OVER_THRESHOLD)
    if rule_set is not RuleSet.THRESHOLD_ONLY and bins:
        if limits is None:
            limits = compute_limits(counts, k)
        for i, v in enumerate(western_electric(counts, limits, side)):
            out[i].extend(v.rules)
    return [tuple(t) for t in out]


def classify_fast_attack(bins: Sequence[SecondBin], threshold: Optional[ThresholdConfig],
                         limits: Optional[ControlLimits] = None,
                         rule_set: Union[RuleSet, str] = RuleSet.BOTH,
                         side: Union[Side, str] = Side.UPPER_ONLY,
                         k: float = 3.0) -> List[Alert]:
    """One alert per offending bin of a single (victim, port) series."""
    rule_set = RuleSet(rule_set)
    if limits is None and rule_set is not RuleSet.THRESHOLD_ONLY and bins:
        limits = compute_limits([b.count for b in bins], k)
    triggers = evaluate_series(bins, threshold, limits, rule_set, side, k)
    value = None if threshold is None else threshold.value
    return [
        Alert(b.victim_ip, b.port, b.epoch_second, b.count, t[0],
              limits if rule_set is not RuleSet.THRESHOLD_ONLY else None, value, t)
        for b, t in zip(bins, triggers) if t
    ]
