import json

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from qpsca.circuit import PulseEvent, PulseSchedule, channel_conflicts, load_qasm, random_circuit, schedule_alap, schedule_asap
from qpsca.device import Device, GateKind, control, drive, standard_topology
from qpsca.perchan import (Detection, MergeConflictError, PerChannelConfig, attack_per_channel, build_profiles,
                           detect_at, estimate_noise_sigma, expected_power, merge_channels, reconstruct_channel,
                           score_at, select_candidate)
from qpsca.pulselib import SynthProfile, synth_library
from qpsca.tracesim import PowerTrace, add_noise_all, simulate_per_channel

from support import DEMO_PROFILE, FIXTURES

T5 = synth_library(standard_topology("tshape5"), seed=0)


def _distance_table():
    data = json.loads((FIXTURES / "distance_table.json").read_text())
    for anchor in data["anchors"]:
        rows = [(T5.label(g, tuple(q)), d) for (g, q), d in anchor["rows"]]
        exp = anchor["expected"]
        yield anchor["dt"], rows, (T5.label(exp[0], tuple(exp[1])) if exp else None), data["tau"], data["tau_cx"]


@pytest.mark.parametrize("dt,rows,expected,tau,tau_cx", list(_distance_table()), ids=lambda v: str(v) if isinstance(v, int) else None)
def test_distance_table_selection(dt, rows, expected, tau, tau_cx):
    pick = select_candidate(rows, tau, tau_cx)
    assert (pick[0] if pick else None) == expected


def test_profiles_drive1_tshape():
    names = {p.label.name for p in build_profiles(T5, drive(1))}
    cx = {lab.name for lab in T5.pulsed_labels() if lab.gate is GateKind.CX and 1 in lab.qubits}
    assert names == {"SX:d1", "X:d1"} | cx
    iso = synth_library(Device("iso", 1))
    assert {p.label.gate for p in build_profiles(iso, drive(0))} == {GateKind.X, GateKind.SX}
    with pytest.raises(ValueError):
        build_profiles(T5, control(0))


def test_expected_power_limits():
    p = np.linspace(0, 1, 11)
    assert np.array_equal(expected_power(p, 0.0), p)
    assert np.allclose(expected_power(p, 1e-9), p)
    assert np.all(expected_power(p, 0.1) >= p)


@pytest.fixture(scope="module")
def demo():
    lib = synth_library(standard_topology("line", 2), DEMO_PROFILE, seed=0)
    sched = schedule_alap(load_qasm(FIXTURES / "demo.qasm"), lib)
    return lib, sched, simulate_per_channel(sched, lib)


def test_demo_drive1_detections(demo):
    lib, sched, traces = demo
    dets = reconstruct_channel(traces, drive(1), build_profiles(lib, drive(1)), lib)
    assert [(d.start, d.label.name) for d in dets] == [
        (0, "SX:d1"), (160, "SX:d1"), (320, "CX:d0-d1"), (1696, "CX:d1-d0"), (3232, "CX:d0-d1")]
    assert all(d.distance <= 0.05 for d in dets)


def test_demo_merge_equals_truth(demo):
    lib, sched, traces = demo
    res = attack_per_channel(traces, lib)
    assert res.schedule.event_set() == sched.observable().event_set()
    assert all(set(d) >= {"channel", "start", "gate", "qubits", "distance", "alternatives"} for d in res.report())


def test_zero_trace_no_detections(demo):
    lib, _, traces = demo
    zero = {c: PowerTrace(c, np.zeros(t.dt_count)) for c, t in traces.items()}
    assert reconstruct_channel(zero, drive(1), build_profiles(lib, drive(1)), lib) == []
    assert attack_per_channel(zero, lib).schedule.events == []


def test_detect_at_single_x():
    lib = synth_library(standard_topology("line", 2), seed=1)
    s = PulseSchedule([PulseEvent(lib.label("X", (0,)), 0)], 400)
    traces = simulate_per_channel(s, lib)
    det = detect_at(traces, 0, drive(0), build_profiles(lib, drive(0)))
    assert det.label.name == "X:d0" and det.distance < 1e-6
    assert det.rejected_alternatives and det.rejected_alternatives[0][1] >= det.distance
    assert detect_at(traces, 208, drive(0), build_profiles(lib, drive(0))) is None


def test_single_x_under_noise():
    lib = synth_library(standard_topology("tshape5"), seed=0)
    s = PulseSchedule([PulseEvent(lib.label("X", (2,)), 0)], 160)
    clean = simulate_per_channel(s, lib)
    for seed in range(50):
        rec = attack_per_channel(add_noise_all(clean, 0.05, seed), lib).schedule
        assert (lib.label("X", (2,)), 0) in rec.event_set()


def test_scale_invariance_of_selection(demo):
    lib, _, traces = demo
    profiles = build_profiles(lib, drive(1))
    for t in (0, 160, 320):
        base = select_candidate(score_at(traces, t, profiles), 0.05, 0.05)
        scaled = {c: PowerTrace(c, 3.7 * tr.samples) for c, tr in traces.items()}
        assert select_candidate(score_at(scaled, t, profiles), 0.05, 0.05)[0] == base[0]


def test_merge_dedup_and_conflict(demo):
    lib, _, _ = demo
    cx = lib.label("CX", (0, 1))
    d0 = [Detection(320, cx, 0.01, channel=drive(0))]
    d1 = [Detection(320, cx, 0.02, channel=drive(1))]
    s = merge_channels({drive(0): d0, drive(1): d1}, lib)
    assert s.event_set() == {(cx, 320)}
    with pytest.raises(MergeConflictError):
        merge_channels({drive(0): d0, drive(1): [Detection(336, cx, 0.02)]}, lib)
    assert merge_channels({}, lib).events == []


def test_noise_estimator():
    rng = np.random.default_rng(0)
    smooth = np.sin(np.linspace(0, 3, 5000)) ** 2
    assert estimate_noise_sigma(smooth) < 1e-4
    assert estimate_noise_sigma(smooth + rng.normal(0, 0.05, 5000)) == pytest.approx(0.05, rel=0.1)


LIB = synth_library(standard_topology("tshape5"), SynthProfile(64, 512, 4, 16), seed=2)


@given(st.integers(0, 10_000), st.integers(1, 20))
@example(1018, 5)  # back-to-back short pulses filling the whole channel
@settings(max_examples=25, deadline=None)
def test_noiseless_round_trip(seed, n):
    sched = schedule_asap(random_circuit(LIB.device, n, seed=seed), LIB)
    res = attack_per_channel(simulate_per_channel(sched, LIB), LIB)
    assert res.schedule.event_set() == sched.observable().event_set()
    assert channel_conflicts(res.schedule, LIB) == []
    tau = PerChannelConfig().tau
    assert all(d.distance <= tau for dets in res.detections.values() for d in dets)
