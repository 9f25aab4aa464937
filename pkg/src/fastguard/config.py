"""Run configuration: defaults, key=value config files and overrides."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from typing import FrozenSet, Optional

from .features import DEFAULT_PORTS
from .spc import ConfigError, RuleSet, Side
from .timeseries import DEFAULT_THRESHOLD

CONFIG_ENV = "FASTGUARD_CONFIG"

RULE_ALIASES = {"threshold": RuleSet.THRESHOLD_ONLY, "spc": RuleSet.SPC_ONLY,
                "both": RuleSet.BOTH}
SIDE_ALIASES = {"upper": Side.UPPER_ONLY, "two": Side.TWO_SIDED}


@dataclass(frozen=True)
class RunConfig:
    monitored_ports: FrozenSet[int] = field(default=DEFAULT_PORTS)
    k: float = 3.0
    threshold_override: Optional[int] = None
    rule_set: RuleSet = RuleSet.BOTH
    side: Side = Side.UPPER_ONLY
    zero_fill: bool = False
    input_format: str = "jsonl"

    def __post_init__(self):
        if not self.monitored_ports:
            raise ConfigError("monitored port set is empty")
        if any(not 0 <= p <= 65535 for p in self.monitored_ports):
            raise ConfigError("ports must lie in 0-65535")
        if not self.k > 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.threshold_override is not None and self.threshold_override < 1:
            raise ConfigError("threshold must be >= 1")
        if self.input_format not in ("pcap", "jsonl"):
            raise ConfigError(f"unknown input format {self.input_format!r}")

    @property
    def threshold(self) -> int:
        if self.threshold_override is None:
            return DEFAULT_THRESHOLD
        return self.threshold_override

    def updated(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def parse_ports(text: str) -> FrozenSet[int]:
    try:
        return frozenset(int(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError:
        raise ConfigError(f"bad port list {text!r}") from None


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _convert(key: str, raw: str):
    try:
        if key == "ports":
            return "monitored_ports", parse_ports(raw)
        if key == "k":
            return "k", float(raw)
        if key == "threshold":
            return "threshold_override", int(raw)
        if key == "rules":
            return "rule_set", RULE_ALIASES.get(raw, None) or RuleSet(raw)
        if key == "side":
            return "side", SIDE_ALIASES.get(raw, None) or Side(raw)
        if key in ("zero_fill", "zero-fill"):
            return "zero_fill", parse_bool(raw)
        if key == "format":
            return "input_format", raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None
    raise ConfigError(f"unknown config key {key!r}")


def load_config(path: Optional[str] = None, base: Optional[RunConfig] = None) -> RunConfig:
    """Read a key=value file over ``base`` (defaults when omitted).

    ``path`` falls back to the file named by ``$FASTGUARD_CONFIG``.  Lines
    starting with ``#`` are comments.
    """
    config = base or RunConfig()
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return config
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",),
                                       interpolation=None)
    with open(path) as fh:
        parser.read_string("[run]\n" + fh.read(), source=str(path))
    values = dict(_convert(k, v.strip()) for k, v in parser["run"].items())
    return replace(config, **values)

