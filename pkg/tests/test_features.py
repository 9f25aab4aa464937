import random
from collections import Counter

import pytest
from hypothesis import given, settings

from fastguard.capture import ParsedPacket, Protocol
from fastguard.events import ConnectionEvent
from fastguard.features import (DEFAULT_PORTS, OrderError, connection_durations,
                                derive_dest_count, extract_initial_connections,
                                initial_features, segregate_by_port)
from gen import events_strategy, random_trace
from oracles import brute_force_dest_count


def tcp(ts_us, flags, src="10.0.0.1", dst="10.0.0.2", sport=4444, dport=25):
    return ParsedPacket(ts_us, src, dst, Protocol.TCP, sport, dport, flags)


def udp(ts_us, src="10.0.0.1", dst="10.0.0.2", sport=5000, dport=53):
    return ParsedPacket(ts_us, src, dst, Protocol.UDP, sport, dport, 0)


def ev(ts_us, dst="10.0.0.9", port=25):
    return ConnectionEvent(ts_us, "10.0.0.1", dst, Protocol.TCP, port, 2)


def test_default_ports():
    assert DEFAULT_PORTS == {21, 25, 53, 110, 135, 139, 445}


def test_single_syn():
    (e,) = extract_initial_connections([tcp(1, 0x02)])
    assert (e.ts_us, e.dst_port, e.flags, e.src_port) == (1, 25, 0x02, 4444)


def test_handshake_yields_one_event():
    trace = [tcp(1, 0x02), tcp(2, 0x12, "10.0.0.2", "10.0.0.1", 25, 4444), tcp(3, 0x10)]
    # brute-force flag filter over the same trace
    expected = [p for p in trace if p.tcp_flags & 0x02 and not p.tcp_flags & 0x10]
    events = list(extract_initial_connections(trace))
    assert len(events) == len(expected) == 1


def test_udp_tuple_dedup_per_second():
    trace = [udp(10_000_000 + i * 1000) for i in range(5)]
    assert len(list(extract_initial_connections(trace))) == 1
    trace.append(udp(11_000_000))
    trace.append(udp(11_000_001, sport=5001))
    assert len(list(extract_initial_connections(trace))) == 3


def test_out_of_order_rejected_or_sorted():
    trace = [tcp(5, 2), tcp(3, 2)]
    with pytest.raises(OrderError):
        list(extract_initial_connections(trace))
    assert [e.ts_us for e in extract_initial_connections(trace, sort=True)] == [3, 5]


def test_permutation_invariance(rng):
    trace = []
    for _ in range(300):
        t = rng.randrange(5_000_000)
        if rng.random() < 0.5:
            trace.append(tcp(t, rng.choice([0x02, 0x12, 0x10, 0x11, 0x04, 0xC2]),
                             dport=rng.choice([21, 25]), sport=rng.randrange(3)))
        else:
            trace.append(udp(t, sport=rng.randrange(3), dport=rng.choice([53, 137])))
    base = Counter(extract_initial_connections(trace, sort=True))
    for _ in range(5):
        rng.shuffle(trace)
        assert Counter(extract_initial_connections(trace, sort=True)) == base


def test_segregate_example():
    result = segregate_by_port([ev(1, port=25), ev(2, port=25), ev(3, port=80)])
    assert {p: len(v) for p, v in result.buckets.items()} == {25: 2}
    assert result.excluded == 1


def test_segregate_empty():
    result = segregate_by_port([])
    assert result.buckets == {} and result.excluded == 0


def test_segregate_empty_set_is_error():
    with pytest.raises(ValueError):
        segregate_by_port([ev(1)], set())


def test_segregate_partition(rng):
    events = [ev(i, port=rng.randrange(1, 1024)) for i in range(100)]
    result = segregate_by_port(events, DEFAULT_PORTS)
    bucketed = [e for b in result.buckets.values() for e in b]
    assert len(bucketed) + result.excluded == 100
    assert len(set(bucketed)) == len(bucketed)
    assert all(e.dst_port == p for p, b in result.buckets.items() for e in b)
    assert result.excluded == sum(e.dst_port not in DEFAULT_PORTS for e in events)


def test_dest_count_same_window():
    recs = derive_dest_count([ev(10_100_000), ev(10_500_000), ev(10_900_000)])
    assert [r.dest_count for r in recs] == [3, 3, 3]


def test_dest_count_window_boundary():
    recs = derive_dest_count([ev(10_900_000), ev(11_000_000)])
    assert [r.dest_count for r in recs] == [1, 1]


def test_dest_count_per_host_vs_per_port():
    events = [ev(1, port=25), ev(2, port=53), ev(3, dst="10.0.0.8", port=25)]
    assert [r.dest_count for r in derive_dest_count(events)] == [2, 2, 1]
    assert [r.dest_count for r in derive_dest_count(events, per_port=True)] == [1, 1, 1]


def test_dest_count_preserves_event_fields():
    events = random_trace(random.Random(3), 50)
    recs = derive_dest_count(events)
    assert [r.event for r in recs] == events
    assert all(r.dest_count >= 1 for r in recs)


def test_dest_count_500_event_trace(rng):
    events = random_trace(rng, 500, span_s=40)
    recs = derive_dest_count(events)
    assert [r.dest_count for r in recs] == brute_force_dest_count(events)


@settings(max_examples=100, deadline=None)
@given(events_strategy)
def test_dest_count_matches_definition(events):
    events = sorted(events, key=lambda e: e.ts_us)
    for per_port in (False, True):
        recs = derive_dest_count(events, per_port=per_port)
        assert [r.dest_count for r in recs] == brute_force_dest_count(events, per_port)


def test_durations():
    trace = [tcp(1_000_000, 0x02), tcp(1_100_000, 0x12, "10.0.0.2", "10.0.0.1", 25, 4444),
             tcp(1_200_000, 0x10), tcp(3_500_000, 0x11, "10.0.0.2", "10.0.0.1", 25, 4444),
             tcp(4_000_000, 0x02, sport=4445)]
    durations = connection_durations(trace)
    assert durations == {(1_000_000, ("10.0.0.1", "10.0.0.2", 4444, 25)): 2.5}
    recs = initial_features(trace)
    assert [(r.dst_port, r.duration) for r in recs] == [(25, 2.5), (25, None)]
