"""Connection events and their JSONL wire format."""
from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Iterable, Iterator, Optional, TextIO

from .capture import Protocol, TcpFlag

US_PER_SECOND = 1_000_000


class LogParseError(ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True, order=True)
class ConnectionEvent:
    """One initial connection attempt toward a victim host.

    Ordering is by timestamp first, so ``sorted(events)`` is the canonical
    stream order.
    """

    ts_us: int
    src_ip: str
    dst_ip: str
    protocol: Protocol
    dst_port: int
    flags: int = 0
    src_port: int = 0

    @property
    def timestamp(self) -> float:
        return self.ts_us / US_PER_SECOND

    @property
    def epoch_second(self) -> int:
        return self.ts_us // US_PER_SECOND

    @property
    def is_syn(self) -> bool:
        return bool(self.flags & TcpFlag.SYN) and not self.flags & TcpFlag.ACK


def format_timestamp(ts_us: int) -> str:
    sec, usec = divmod(ts_us, US_PER_SECOND)
    return f"{sec}.{usec:06d}"


def serialize_event(event: ConnectionEvent) -> str:
    """Render one event as a JSONL line (no trailing newline)."""
    # ts is written by hand so microseconds survive exactly
    rest = json.dumps({
        "src": event.src_ip,
        "dst": event.dst_ip,
        "proto": event.protocol.value,
        "sport": event.src_port,
        "dport": event.dst_port,
        "flags": event.flags,
    }, separators=(",", ":"))
    return '{"ts":' + format_timestamp(event.ts_us) + "," + rest[1:]


def _int_field(obj: dict, key: str, lo: int, hi: int, line_number, default=None) -> int:
    value = obj.get(key, default)
    if value is None:
        raise LogParseError(f"missing key {key!r}", line_number)
    if isinstance(value, bool) or not isinstance(value, int):
        raise LogParseError(f"{key!r} must be an integer", line_number)
    if not lo <= value <= hi:
        raise LogParseError(f"{key!r}={value} out of range [{lo}, {hi}]", line_number)
    return value


def _ip_field(obj: dict, key: str, line_number) -> str:
    value = obj.get(key)
    try:
        return str(ipaddress.IPv4Address(value))
    except (ipaddress.AddressValueError, ValueError, TypeError):
        raise LogParseError(f"{key!r} is not a dotted-quad IPv4 address: {value!r}",
                            line_number) from None


def parse_connection_log(line: str, line_number: Optional[int] = None) -> ConnectionEvent:
    """Parse one JSONL connection-log line."""
    try:
        obj = json.loads(line, parse_float=Decimal, parse_int=Decimal)
    except json.JSONDecodeError as exc:
        raise LogParseError(f"malformed JSON: {exc.msg}", line_number) from None
    if not isinstance(obj, dict):
        raise LogParseError("expected a JSON object", line_number)
    # integers arrive as Decimal too; normalize non-ts numbers back to int
    for key, value in obj.items():
        if key != "ts" and isinstance(value, Decimal):
            obj[key] = int(value) if value == value.to_integral_value() else float(value)

    ts = obj.get("ts")
    if not isinstance(ts, Decimal):
        raise LogParseError("'ts' must be a number", line_number)
    try:
        ts_us = int((ts * US_PER_SECOND).to_integral_value(ROUND_HALF_EVEN))
    except InvalidOperation:
        raise LogParseError("'ts' is not finite", line_number) from None
    if ts_us < 0:
        raise LogParseError(f"negative timestamp {ts}", line_number)

    proto_token = obj.get("proto")
    if not isinstance(proto_token, str) or proto_token.lower() not in ("tcp", "udp"):
        raise LogParseError(f"unknown protocol {proto_token!r}", line_number)
    protocol = Protocol(proto_token.lower())

    flags = _int_field(obj, "flags", 0, 255, line_number, default=0)
    if protocol is Protocol.UDP and flags:
        raise LogParseError("UDP events must carry flags 0", line_number)
    return ConnectionEvent(
        ts_us=ts_us,
        src_ip=_ip_field(obj, "src", line_number),
        dst_ip=_ip_field(obj, "dst", line_number),
        protocol=protocol,
        dst_port=_int_field(obj, "dport", 0, 65535, line_number),
        flags=flags,
        src_port=_int_field(obj, "sport", 0, 65535, line_number, default=0),
    )


def read_events(fh: TextIO) -> Iterator[ConnectionEvent]:
    """Stream events from a JSONL file; blank lines are ignored."""
    for number, line in enumerate(fh, start=1):
        if line.strip():
            yield parse_connection_log(line, number)


def write_events(fh: TextIO, events: Iterable[ConnectionEvent]) -> int:
    n = 0
    for event in events:
        fh.write(serialize_event(event))
        fh.write("\n")
        n += 1
    return n
