"""Deterministic synthetic connection traffic.

Host profiles open a fixed number of connections every second; attacks add
a burst from a single source.  Sub-second placement comes from a seeded
generator, so the same parameters always give the same stream.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from .capture import Protocol, TcpFlag
from .events import US_PER_SECOND, ConnectionEvent

EPHEMERAL_PORTS = (1024, 65536)


@dataclass(frozen=True)
class HostProfile:
    name: str
    rate: int
    jitter_seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be non-negative")


# connections per second a single host opened toward one victim, by OS
BUILTIN_PROFILES = {
    "winxp-sp2-fresh": HostProfile("Windows XP Professional SP2 (fresh install)", 3),
    "vista": HostProfile("Windows Vista", 3),
    "winxp-sp2": HostProfile("Windows XP Professional SP2", 3),
    "centos-4.4": HostProfile("Linux CentOS 4.4", 1),
    "solaris-10": HostProfile("Solaris 10", 1),
}


def _burst(rng: np.random.Generator, second: int, rate: int, src: str, victim: str,
           port: int) -> List[ConnectionEvent]:
    offsets = np.sort(rng.choice(US_PER_SECOND, size=rate, replace=False))
    sports = rng.integers(*EPHEMERAL_PORTS, size=rate)
    base = second * US_PER_SECOND
    return [ConnectionEvent(base + int(o), src, victim, Protocol.TCP, port,
                            int(TcpFlag.SYN), int(sp))
            for o, sp in zip(offsets, sports)]


def synth_host(profile: HostProfile, victim: str, port: int, duration: int,
               start: int = 0, src: str = "10.0.0.1",
               poisson: bool = False) -> List[ConnectionEvent]:
    """SYN events from one host: ``profile.rate`` in each second of
    ``[start, start + duration)``.

    ``poisson=True`` draws each second's count from Poisson(rate) instead.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    rng = np.random.default_rng(profile.jitter_seed)
    events: List[ConnectionEvent] = []
    for second in range(start, start + duration):
        n = int(rng.poisson(profile.rate)) if poisson else profile.rate
        events.extend(_burst(rng, second, min(n, US_PER_SECOND), src, victim, port))
    return events


def inject_attack(background: Iterable[ConnectionEvent], rate: int, victim: str, port: int,
                  start: int, span: int, src: str = "192.0.2.66",
                  seed: int = 0) -> List[ConnectionEvent]:
    """Merge a burst of ``rate`` SYNs per second for ``span`` seconds from
    ``start`` (epoch second) into a sorted background stream."""
    if rate < 0 or span < 0:
        raise ValueError("rate and span must be non-negative")
    rng = np.random.default_rng(seed)
    attack: List[ConnectionEvent] = []
    for second in range(start, start + span):
        attack.extend(_burst(rng, second, rate, src, victim, port))
    return list(heapq.merge(background, attack, key=lambda e: e.ts_us))


@dataclass
class Scenario:
    """A set of hosts and attack bursts, loaded from a JSON scenario file.

    Host and attack ``start`` values are offsets from the scenario start.
    """

    start: int
    duration: int
    hosts: list
    attacks: list
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(start=int(data.get("start", 0)), duration=int(data["duration"]),
                   hosts=list(data.get("hosts", [])), attacks=list(data.get("attacks", [])),
                   seed=int(data.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def generate(self) -> List[ConnectionEvent]:
        streams = []
        for i, host in enumerate(self.hosts):
            if "profile" in host:
                base = BUILTIN_PROFILES[host["profile"]]
                rate = int(host.get("rate", base.rate))
                name = base.name
            else:
                rate, name = int(host["rate"]), host.get("name", f"host{i}")
            profile = HostProfile(name, rate, self.seed * 1000 + i)
            streams.append(synth_host(
                profile, host["victim"], int(host["port"]),
                int(host.get("duration", self.duration)),
                self.start + int(host.get("start", 0)),
                host.get("src", f"10.0.1.{i + 1}"),
                bool(host.get("poisson", False)),
            ))
        events = list(heapq.merge(*streams, key=lambda e: e.ts_us))
        for j, atk in enumerate(self.attacks):
            events = inject_attack(
                events, int(atk["rate"]), atk["victim"], int(atk["port"]),
                self.start + int(atk["start"]), int(atk.get("span", 1)),
                atk.get("src", "192.0.2.66"), self.seed * 1000 + 500 + j,
            )
        return events


def preset(name: str, start: int = 1_000_000_000, duration: int = 300,
           seed: int = 0) -> Scenario:
    """Built-in scenarios.

    ``normal``: the five experiment hosts, each toward its own victim on a
    monitored port.  ``attack``: the same plus 70 conn/s on port 25 of a
    further victim for five seconds.
    """
    hosts = [
        {"profile": "winxp-sp2-fresh", "src": "10.0.1.1", "victim": "10.0.0.11", "port": 21},
        {"profile": "vista", "src": "10.0.1.2", "victim": "10.0.0.12", "port": 25},
        {"profile": "winxp-sp2", "src": "10.0.1.3", "victim": "10.0.0.13", "port": 53},
        {"profile": "centos-4.4", "src": "10.0.1.4", "victim": "10.0.0.14", "port": 110},
        {"profile": "solaris-10", "src": "10.0.1.5", "victim": "10.0.0.15", "port": 445},
    ]
    attacks = []
    if name == "attack":
        attacks.append({"src": "192.0.2.66", "victim": "10.0.0.25", "port": 25,
                        "rate": 70, "start": 100, "span": 5})
    elif name != "normal":
        raise ValueError(f"unknown preset {name!r}")
    return Scenario(start, duration, hosts, attacks, seed)
