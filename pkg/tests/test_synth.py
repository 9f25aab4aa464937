import io
import json

import pytest

from fastguard.events import read_events, serialize_event, write_events
from fastguard.synth import (BUILTIN_PROFILES, HostProfile, Scenario, inject_attack, preset,
                             synth_host)
from fastguard.timeseries import bin_per_second


@pytest.mark.parametrize("key, rate", [("winxp-sp2-fresh", 3), ("vista", 3), ("winxp-sp2", 3),
                                       ("centos-4.4", 1), ("solaris-10", 1)])
def test_builtin_profiles(key, rate):
    assert BUILTIN_PROFILES[key].rate == rate


def test_windows_profile_ten_seconds():
    events = synth_host(BUILTIN_PROFILES["winxp-sp2"], "10.0.0.2", 25, 10)
    assert len(events) == 30
    assert [b.count for b in bin_per_second(events, zero_fill=True)] == [3] * 10


def test_linux_profile_five_seconds():
    events = synth_host(BUILTIN_PROFILES["centos-4.4"], "10.0.0.2", 25, 5, start=50)
    assert [(b.epoch_second, b.count) for b in bin_per_second(events)] == [(50 + i, 1) for i in range(5)]


def test_zero_duration():
    assert synth_host(HostProfile("x", 3), "10.0.0.2", 25, 0) == []


def test_sorted_and_syn_only():
    events = synth_host(HostProfile("x", 40, 9), "10.0.0.2", 25, 20)
    assert events == sorted(events, key=lambda e: e.ts_us)
    assert all(e.is_syn for e in events)


def test_determinism_bytewise():
    a = synth_host(HostProfile("x", 3, jitter_seed=7), "10.0.0.2", 25, 50)
    b = synth_host(HostProfile("x", 3, jitter_seed=7), "10.0.0.2", 25, 50)
    c = synth_host(HostProfile("x", 3, jitter_seed=8), "10.0.0.2", 25, 50)
    assert "\n".join(map(serialize_event, a)) == "\n".join(map(serialize_event, b))
    assert a != c


def test_poisson_extension_is_seeded():
    p = HostProfile("x", 3, 1)
    a = synth_host(p, "10.0.0.2", 25, 100, poisson=True)
    assert a == synth_host(p, "10.0.0.2", 25, 100, poisson=True)
    assert len(a) != 300


def test_inject_seventy_over_quiet_background():
    events = inject_attack([], 70, "10.0.0.9", 25, start=5, span=1)
    assert [(b.port, b.epoch_second, b.count) for b in bin_per_second(events)] == [(25, 5, 70)]
    assert len({e.src_ip for e in events}) == 1


def test_inject_zero_rate_is_identity():
    bg = synth_host(HostProfile("x", 3), "10.0.0.2", 25, 10)
    assert inject_attack(bg, 0, "10.0.0.2", 25, 0, 10) == bg


@pytest.mark.parametrize("rate, span", [(1, 1), (70, 5), (9, 30), (5, 0)])
def test_inject_conservation_and_order(rate, span):
    bg = synth_host(HostProfile("x", 3, 2), "10.0.0.2", 25, 30)
    merged = inject_attack(bg, rate, "10.0.0.2", 25, start=10, span=span)
    assert len(merged) == len(bg) + rate * span
    assert merged == sorted(merged, key=lambda e: e.ts_us)
    before = {b.epoch_second: b.count for b in bin_per_second(bg)}
    after = {b.epoch_second: b.count for b in bin_per_second(merged)}
    diff = {s: after[s] - before.get(s, 0) for s in after if after[s] != before.get(s, 0)}
    assert diff == {s: rate for s in range(10, 10 + span)}


def test_pipeline_closure_reproduces_rates():
    events = preset("normal", duration=30).generate()
    buf = io.StringIO()
    write_events(buf, events)
    buf.seek(0)
    bins = bin_per_second(read_events(buf))
    rates = {("10.0.0.11", 21): 3, ("10.0.0.12", 25): 3, ("10.0.0.13", 53): 3,
             ("10.0.0.14", 110): 1, ("10.0.0.15", 445): 1}
    for key, rate in rates.items():
        series = [b for b in bins if (b.victim_ip, b.port) == key]
        assert len(series) == 30 and all(b.count == rate for b in series)


def test_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({
        "start": 100, "duration": 4, "seed": 3,
        "hosts": [{"profile": "vista", "victim": "10.0.0.2", "port": 21},
                  {"name": "custom", "rate": 2, "victim": "10.0.0.3", "port": 53}],
        "attacks": [{"victim": "10.0.0.2", "port": 21, "rate": 10, "start": 1, "span": 2}],
    }))
    events = Scenario.load(path).generate()
    table = {(b.victim_ip, b.epoch_second): b.count for b in bin_per_second(events)}
    assert table == {("10.0.0.2", 100): 3, ("10.0.0.2", 101): 13, ("10.0.0.2", 102): 13,
                     ("10.0.0.2", 103): 3, **{("10.0.0.3", s): 2 for s in range(100, 104)}}


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("nope")
