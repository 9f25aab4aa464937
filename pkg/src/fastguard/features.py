"""Initial-connection extraction, port segregation and the dest_count feature."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .capture import ParsedPacket, Protocol, TcpFlag
from .events import US_PER_SECOND, ConnectionEvent

DEFAULT_PORTS = frozenset({21, 25, 53, 110, 135, 139, 445})


class OrderError(ValueError):
    """Input stream is not in nondecreasing timestamp order."""


@dataclass(frozen=True)
class FeatureRecord(ConnectionEvent):
    """A connection event plus its derived features."""

    dest_count: int = 1
    duration: Optional[float] = None

    @classmethod
    def from_event(cls, event: ConnectionEvent, dest_count: int,
                   duration: Optional[float] = None) -> "FeatureRecord":
        return cls(event.ts_us, event.src_ip, event.dst_ip, event.protocol,
                   event.dst_port, event.flags, event.src_port, dest_count, duration)

    @property
    def event(self) -> ConnectionEvent:
        return ConnectionEvent(self.ts_us, self.src_ip, self.dst_ip, self.protocol,
                               self.dst_port, self.flags, self.src_port)


@dataclass
class PortBuckets:
    buckets: Dict[int, List[ConnectionEvent]]
    excluded: int = 0

    def __len__(self) -> int:
        return sum(len(v) for v in self.buckets.values()) + self.excluded


def _ordered(packets: Iterable, sort: bool) -> Iterator:
    if sort:
        yield from sorted(packets, key=lambda p: p.ts_us)
        return
    last = None
    for i, p in enumerate(packets):
        if last is not None and p.ts_us < last:
            raise OrderError(
                f"item {i} at {p.ts_us}us precedes previous {last}us; pass sort=True"
            )
        last = p.ts_us
        yield p


def extract_initial_connections(packets: Iterable[ParsedPacket],
                                sort: bool = False) -> Iterator[ConnectionEvent]:
    """Reduce a packet stream to connection-opening events.

    TCP: every packet with SYN set and ACK clear.  UDP: the first packet of
    each (src, dst, sport, dport) tuple within each epoch second.  Anything
    else is dropped.  ``sort=True`` buffers and sorts the input; otherwise
    out-of-order input raises :class:`OrderError`.
    """
    current_second = None
    seen_udp = set()
    for p in _ordered(packets, sort):
        if p.protocol is Protocol.TCP:
            if p.tcp_flags & TcpFlag.SYN and not p.tcp_flags & TcpFlag.ACK:
                yield ConnectionEvent(p.ts_us, p.src_ip, p.dst_ip, Protocol.TCP,
                                      p.dst_port, p.tcp_flags, p.src_port)
        elif p.protocol is Protocol.UDP:
            second = p.ts_us // US_PER_SECOND
            if second != current_second:
                current_second = second
                seen_udp.clear()
            key = (p.src_ip, p.dst_ip, p.src_port, p.dst_port)
            if key not in seen_udp:
                seen_udp.add(key)
                yield ConnectionEvent(p.ts_us, p.src_ip, p.dst_ip, Protocol.UDP,
                                      p.dst_port, 0, p.src_port)


def segregate_by_port(events: Iterable[ConnectionEvent],
                      monitored_ports: Iterable[int] = DEFAULT_PORTS) -> PortBuckets:
    ports = frozenset(monitored_ports)
    if not ports:
        raise ValueError("monitored port set is empty")
    result = PortBuckets({})
    for event in events:
        if event.dst_port in ports:
            result.buckets.setdefault(event.dst_port, []).append(event)
        else:
            result.excluded += 1
    return result


FlowKey = Tuple[str, str, int, int]


def connection_durations(packets: Iterable[ParsedPacket]) -> Dict[Tuple[int, FlowKey], float]:
    """Seconds from each TCP SYN to the first FIN or RST of the same flow.

    Keys are ``(syn_ts_us, (src, dst, sport, dport))``.  Flows without a
    terminating packet in the trace are absent.
    """
    open_flows: Dict[FlowKey, int] = {}
    durations: Dict[Tuple[int, FlowKey], float] = {}
    for p in packets:
        if p.protocol is not Protocol.TCP:
            continue
        key = (p.src_ip, p.dst_ip, p.src_port, p.dst_port)
        if p.tcp_flags & TcpFlag.SYN and not p.tcp_flags & TcpFlag.ACK:
            open_flows[key] = p.ts_us
            continue
        if p.tcp_flags & (TcpFlag.FIN | TcpFlag.RST):
            reverse = (p.dst_ip, p.src_ip, p.dst_port, p.src_port)
            for k in (key, reverse):
                start = open_flows.pop(k, None)
                if start is not None:
                    durations[(start, k)] = (p.ts_us - start) / US_PER_SECOND
                    break
    return durations


def derive_dest_count(events: Iterable[ConnectionEvent], per_port: bool = False,
                      durations: Optional[Mapping] = None) -> List[FeatureRecord]:
    """Attach ``dest_count`` to each event in a single streaming pass.

    ``dest_count`` is the number of events sharing the destination host (or
    destination host and port, when ``per_port``) within the same epoch
    second, the record itself included.  Records of one second are held
    back until the second closes, so output order equals input order.
    """
    out: List[FeatureRecord] = []
    pending: deque = deque()
    counts: Counter = Counter()
    current = None

    def flush():
        while pending:
            ev = pending.popleft()
            key = (ev.dst_ip, ev.dst_port) if per_port else ev.dst_ip
            duration = None
            if durations is not None:
                duration = durations.get(
                    (ev.ts_us, (ev.src_ip, ev.dst_ip, ev.src_port, ev.dst_port)))
            out.append(FeatureRecord.from_event(ev, counts[key], duration))
        counts.clear()

    for ev in _ordered(events, sort=False):
        second = ev.epoch_second
        if second != current:
            flush()
            current = second
        pending.append(ev)
        counts[(ev.dst_ip, ev.dst_port) if per_port else ev.dst_ip] += 1
    flush()
    return out


def initial_features(packets: Sequence[ParsedPacket], monitored_ports=DEFAULT_PORTS,
                     per_port: bool = False) -> List[FeatureRecord]:
    """Extraction, segregation and dest_count in one call, with durations."""
    packets = sorted(packets, key=lambda p: p.ts_us)
    events = list(extract_initial_connections(packets))
    buckets = segregate_by_port(events, monitored_ports)
    kept = sorted(e for bucket in buckets.buckets.values() for e in bucket)
    return derive_dest_count(kept, per_port=per_port,
                             durations=connection_durations(packets))
