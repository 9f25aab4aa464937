"""Classic capture-file reading and Ethernet/IPv4 frame decoding.

Only the classic (pre-pcapng) format is accepted.  Timestamps are carried
as integer microseconds so per-second binning never suffers float drift.
"""
from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Optional, Union

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A

LINKTYPE_ETHERNET = 1

ETHERTYPE_IPV4 = 0x0800
IPPROTO_TCP = 6
IPPROTO_UDP = 17

ETH_HEADER_LEN = 14
TCP_MIN_HEADER_LEN = 20
UDP_HEADER_LEN = 8


class TcpFlag(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20
    ECE = 0x40
    CWR = 0x80


class Protocol(str, enum.Enum):
    TCP = "tcp"
    UDP = "udp"
    OTHER = "other"


class CaptureFormatError(ValueError):
    """The byte stream is not a readable classic capture file."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TruncatedRecordError(CaptureFormatError):
    def __init__(self, index: int, offset: int):
        super().__init__(f"record {index} is truncated", offset)
        self.index = index


class DecodeError(ValueError):
    """A frame is shorter than the headers it claims to carry."""


@dataclass(frozen=True)
class RawPacket:
    ts_us: int
    captured_bytes: bytes
    original_length: int

    def __post_init__(self):
        if self.ts_us < 0:
            raise ValueError("timestamp must be non-negative")
        if len(self.captured_bytes) > self.original_length:
            raise ValueError("captured length exceeds original length")

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1_000_000


@dataclass(frozen=True)
class ParsedPacket:
    ts_us: int
    src_ip: str
    dst_ip: str
    protocol: Protocol
    src_port: int = 0
    dst_port: int = 0
    tcp_flags: int = 0

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1_000_000

    def has_flags(self, flags: int) -> bool:
        return self.tcp_flags & flags == flags


@dataclass
class CaptureStats:
    """Running counters surfaced in ingest summaries."""

    records: int = 0
    decoded: int = 0
    skipped: int = 0
    decode_errors: int = 0
    truncated_records: int = 0
    errors: list = field(default_factory=list)


@dataclass(frozen=True)
class CaptureHeader:
    byte_order: str
    nanosecond: bool
    version: tuple
    snaplen: int
    link_type: int


def _read_global_header(data: bytes) -> CaptureHeader:
    if len(data) < GLOBAL_HEADER_LEN:
        raise CaptureFormatError(
            f"truncated global header: {len(data)} of {GLOBAL_HEADER_LEN} bytes", 0
        )
    for order in ("<", ">"):
        (magic,) = struct.unpack(order + "I", data[:4])
        if magic in (MAGIC_USEC, MAGIC_NSEC):
            break
    else:
        (magic,) = struct.unpack("<I", data[:4])
        if magic == PCAPNG_MAGIC:
            raise CaptureFormatError(
                "pcapng block format is not supported; convert with "
                "`editcap -F pcap` first", 0
            )
        raise CaptureFormatError(f"unknown magic number 0x{magic:08x}", 0)
    major, minor, _zone, _sigfigs, snaplen, link_type = struct.unpack(
        order + "HHiIII", data[4:GLOBAL_HEADER_LEN]
    )
    return CaptureHeader(order, magic == MAGIC_NSEC, (major, minor), snaplen, link_type)


class CaptureReader:
    """Streaming iterator over the records of a classic capture file.

    ``on_truncated="raise"`` raises :class:`TruncatedRecordError` for a short
    record; ``"skip"`` stops at the damaged tail and counts it in ``stats``.
    """

    def __init__(self, source: Union[bytes, bytearray, BinaryIO],
                 on_truncated: str = "raise", require_ethernet: bool = False):
        if on_truncated not in ("raise", "skip"):
            raise ValueError("on_truncated must be 'raise' or 'skip'")
        if isinstance(source, (bytes, bytearray)):
            source = io.BytesIO(bytes(source))
        self._fh = source
        self.on_truncated = on_truncated
        self.stats = CaptureStats()
        self.header = _read_global_header(self._fh.read(GLOBAL_HEADER_LEN))
        if require_ethernet and self.header.link_type != LINKTYPE_ETHERNET:
            raise CaptureFormatError(
                f"unsupported link type {self.header.link_type}; only Ethernet (1) is decoded",
                20,
            )
        self._offset = GLOBAL_HEADER_LEN

    @property
    def link_type(self) -> int:
        return self.header.link_type

    def __iter__(self) -> Iterator[RawPacket]:
        fmt = self.header.byte_order + "IIII"
        index = 0
        while True:
            head = self._fh.read(RECORD_HEADER_LEN)
            if not head:
                return
            start = self._offset
            if len(head) < RECORD_HEADER_LEN:
                self._truncated(index, start)
                return
            ts_sec, ts_frac, caplen, origlen = struct.unpack(fmt, head)
            body = self._fh.read(caplen)
            if len(body) < caplen:
                self._truncated(index, start)
                return
            self._offset += RECORD_HEADER_LEN + caplen
            frac_us = ts_frac // 1000 if self.header.nanosecond else ts_frac
            self.stats.records += 1
            # some writers record origlen < caplen; never report less than captured
            yield RawPacket(ts_sec * 1_000_000 + frac_us, body, max(origlen, caplen))
            index += 1

    def _truncated(self, index: int, offset: int) -> None:
        if self.on_truncated == "raise":
            raise TruncatedRecordError(index, offset)
        self.stats.truncated_records += 1
        self.stats.errors.append(f"record {index} truncated at byte offset {offset}")


def parse_capture_file(source: Union[bytes, bytearray, BinaryIO]) -> Iterator[RawPacket]:
    """Yield one :class:`RawPacket` per record, raising on any truncation."""
    return iter(CaptureReader(source, on_truncated="raise"))


def _ipv4(raw: bytes) -> str:
    return "%d.%d.%d.%d" % tuple(raw)


def decode_packet(packet: RawPacket, link_type: int = LINKTYPE_ETHERNET) -> Optional[ParsedPacket]:
    """Decode an Ethernet/IPv4/{TCP,UDP} frame.

    Returns ``None`` for frames that are out of scope (non-IPv4, other IP
    protocols, non-first fragments).  Raises :class:`DecodeError` when the
    captured bytes end before a header they announce.
    """
    if link_type != LINKTYPE_ETHERNET:
        raise ValueError(f"unsupported link type {link_type}")
    data = packet.captured_bytes
    if len(data) < ETH_HEADER_LEN:
        raise DecodeError("frame shorter than Ethernet header")
    (ethertype,) = struct.unpack_from("!H", data, 12)
    if ethertype != ETHERTYPE_IPV4:
        return None

    ip = ETH_HEADER_LEN
    if len(data) < ip + 20:
        raise DecodeError("frame shorter than IPv4 header")
    version_ihl = data[ip]
    if version_ihl >> 4 != 4:
        raise DecodeError(f"bad IP version {version_ihl >> 4}")
    ihl = (version_ihl & 0x0F) * 4
    if ihl < 20:
        raise DecodeError(f"bad IPv4 header length {ihl}")
    if len(data) < ip + ihl:
        raise DecodeError("frame shorter than IPv4 options")
    (frag,) = struct.unpack_from("!H", data, ip + 6)
    if frag & 0x1FFF:
        return None
    proto = data[ip + 9]
    src_ip = _ipv4(data[ip + 12:ip + 16])
    dst_ip = _ipv4(data[ip + 16:ip + 20])

    l4 = ip + ihl
    if proto == IPPROTO_TCP:
        if len(data) < l4 + TCP_MIN_HEADER_LEN:
            raise DecodeError("frame shorter than TCP header")
        sport, dport = struct.unpack_from("!HH", data, l4)
        return ParsedPacket(packet.ts_us, src_ip, dst_ip, Protocol.TCP,
                            sport, dport, data[l4 + 13])
    if proto == IPPROTO_UDP:
        if len(data) < l4 + UDP_HEADER_LEN:
            raise DecodeError("frame shorter than UDP header")
        sport, dport = struct.unpack_from("!HH", data, l4)
        return ParsedPacket(packet.ts_us, src_ip, dst_ip, Protocol.UDP, sport, dport, 0)
    return None


def decode_packets(packets: Iterable[RawPacket], link_type: int = LINKTYPE_ETHERNET,
                   stats: Optional[CaptureStats] = None) -> Iterator[ParsedPacket]:
    """Decode a packet stream, counting skips and decode errors in ``stats``."""
    if stats is None:
        stats = CaptureStats()
    for i, raw in enumerate(packets):
        try:
            parsed = decode_packet(raw, link_type)
        except DecodeError as exc:
            stats.decode_errors += 1
            stats.errors.append(f"packet {i}: {exc}")
            continue
        if parsed is None:
            stats.skipped += 1
            continue
        stats.decoded += 1
        yield parsed


def read_capture(source: Union[bytes, bytearray, BinaryIO],
                 stats: Optional[CaptureStats] = None) -> Iterator[ParsedPacket]:
    """Open an Ethernet capture leniently and yield decoded packets.

    Truncated tails and undecodable frames are counted into ``stats``.
    """
    reader = CaptureReader(source, on_truncated="skip", require_ethernet=True)
    if stats is not None:
        reader.stats = stats
    return decode_packets(reader, LINKTYPE_ETHERNET, reader.stats)


def write_capture(fh: BinaryIO, packets: Iterable[RawPacket], byte_order: str = "<",
                  snaplen: int = 65535, link_type: int = LINKTYPE_ETHERNET) -> None:
    """Write ``packets`` as a classic microsecond capture file."""
    fh.write(struct.pack(byte_order + "IHHiIII", MAGIC_USEC, 2, 4, 0, 0, snaplen, link_type))
    for p in packets:
        sec, usec = divmod(p.ts_us, 1_000_000)
        fh.write(struct.pack(byte_order + "IIII", sec, usec,
                             len(p.captured_bytes), p.original_length))
        fh.write(p.captured_bytes)


def build_frame(src_ip: str, dst_ip: str, protocol: Protocol, src_port: int = 0,
                dst_port: int = 0, tcp_flags: int = 0, payload: bytes = b"") -> bytes:
    """Assemble a minimal Ethernet/IPv4/{TCP,UDP} frame (checksums zeroed)."""
    if protocol is Protocol.TCP:
        l4 = struct.pack("!HHIIBBHHH", src_port, dst_port, 0, 0, 5 << 4,
                         tcp_flags, 65535, 0, 0)
        proto = IPPROTO_TCP
    elif protocol is Protocol.UDP:
        l4 = struct.pack("!HHHH", src_port, dst_port, UDP_HEADER_LEN + len(payload), 0)
        proto = IPPROTO_UDP
    else:
        raise ValueError("only TCP and UDP frames can be built")
    total = 20 + len(l4) + len(payload)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, proto, 0,
                     bytes(int(o) for o in src_ip.split(".")),
                     bytes(int(o) for o in dst_ip.split(".")))
    eth = b"\x00\x11\x22\x33\x44\x55" + b"\x66\x77\x88\x99\xaa\xbb" + struct.pack("!H", ETHERTYPE_IPV4)
    return eth + ip + l4 + payload
