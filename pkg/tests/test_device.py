import json

import pytest
from hypothesis import given, strategies as st

from qpsca.device import (ChannelKind, Device, GateKind, build_channels, control, drive, enumerate_labels,
                          load_device, save_device, standard_topology)

from support import figure_device


def test_build_channels_two_qubits():
    dev = Device("d", 2, ((0, 1), (1, 0)))
    assert build_channels(dev) == [drive(0), drive(1), control(0), control(1)]


def test_build_channels_tshape_and_single():
    assert len(build_channels(standard_topology("tshape5"))) == 13
    assert build_channels(Device("one", 1)) == [drive(0)]


def test_device_invariants():
    with pytest.raises(ValueError):
        Device("bad", 2, ((0, 2),))
    with pytest.raises(ValueError):
        Device("bad", 2, ((1, 1),))
    with pytest.raises(ValueError):
        Device("bad", 2, ((0, 1), (0, 1)))


def test_label_counts_two_qubits():
    labels = enumerate_labels(Device("d", 2, ((0, 1), (1, 0))))
    pulsed = [lab for lab in labels if not lab.virtual]
    assert len([lab for lab in pulsed if lab.gate is not GateKind.CX]) == 6
    assert len([lab for lab in pulsed if lab.gate is GateKind.CX]) == 2
    assert len([lab for lab in labels if lab.gate is GateKind.RZ]) == 2


def test_figure_device_labels():
    names = {lab.name for lab in enumerate_labels(figure_device()) if lab.gate in (GateKind.X, GateKind.SX)}
    assert names == {"X:d0", "SX:d0", "X:d1"}


def test_single_qubit_labels():
    kinds = {lab.gate for lab in enumerate_labels(Device("one", 1))}
    assert kinds == {GateKind.I, GateKind.X, GateKind.SX, GateKind.RZ}


def test_standard_topologies():
    assert set(standard_topology("line", 3).couplings) == {(0, 1), (1, 0), (1, 2), (2, 1)}
    assert standard_topology("tshape5").n_couplings == 8
    assert standard_topology("hshape7").n_couplings == 12
    with pytest.raises(ValueError):
        standard_topology("tshape5", 4)
    with pytest.raises(ValueError):
        standard_topology("hshape7", 5)


def test_cx_control_index_matches_coupling_position():
    dev = standard_topology("hshape7")
    for lab in enumerate_labels(dev):
        if lab.gate is GateKind.CX:
            ctrl = [c for c in lab.channels if c.kind is ChannelKind.CONTROL]
            assert len(ctrl) == 1 and ctrl[0].index == dev.couplings.index(lab.qubits)
            assert lab.channels[:2] == (drive(lab.qubits[0]), drive(lab.qubits[1]))


@given(st.integers(1, 6), st.data())
def test_channel_count_and_label_injectivity(n, data):
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    dev = Device("r", n, tuple(chosen))
    assert len(build_channels(dev)) == n + len(chosen)
    keys = [lab.key for lab in enumerate_labels(dev)]
    assert len(keys) == len(set(keys))


def test_device_json_round_trip(tmp_path):
    dev = figure_device()
    p = tmp_path / "dev.json"
    save_device(dev, p)
    assert load_device(p) == dev
    plain = standard_topology("line", 2)
    save_device(plain, p)
    assert set(json.loads(p.read_text())) == {"name", "n_qubits", "couplings"}
