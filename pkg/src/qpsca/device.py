"""Device topology, channel set and gate labels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class ChannelKind(str, Enum):
    DRIVE = "drive"
    CONTROL = "control"


class GateKind(str, Enum):
    I = "I"
    RZ = "RZ"
    X = "X"
    SX = "SX"
    CX = "CX"


# per-qubit enumeration order; keeps label indices stable
SINGLE_QUBIT_GATES = (GateKind.I, GateKind.RZ, GateKind.X, GateKind.SX)
PULSED_SINGLE_QUBIT_GATES = (GateKind.X, GateKind.SX)


@dataclass(frozen=True)
class Channel:
    """A hardware channel. Sorts drives before controls, then by index."""

    kind: ChannelKind
    index: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if self.index < 0:
            raise ValueError(f"channel index must be non-negative, got {self.index}")

    def sort_key(self) -> tuple[int, int]:
        return (0 if self.kind is ChannelKind.DRIVE else 1, self.index)

    def __lt__(self, other: "Channel") -> bool:
        return self.sort_key() < other.sort_key()

    @property
    def name(self) -> str:
        return f"{'d' if self.kind is ChannelKind.DRIVE else 'u'}{self.index}"

    @classmethod
    def parse(cls, name: str) -> "Channel":
        if len(name) < 2 or name[0] not in "du" or not name[1:].isdigit():
            raise ValueError(f"bad channel name {name!r}")
        kind = ChannelKind.DRIVE if name[0] == "d" else ChannelKind.CONTROL
        return cls(kind, int(name[1:]))

    def __repr__(self) -> str:
        return f"Channel({self.name})"


def drive(index: int) -> Channel:
    return Channel(ChannelKind.DRIVE, index)


def control(index: int) -> Channel:
    return Channel(ChannelKind.CONTROL, index)


@dataclass(frozen=True)
class Label:
    """A basis gate bound to the channels its pulse uses."""

    gate: GateKind
    channels: tuple[Channel, ...]
    qubits: tuple[int, ...]

    @property
    def virtual(self) -> bool:
        return self.gate is GateKind.RZ

    @property
    def key(self) -> tuple[str, tuple[int, ...]]:
        return (self.gate.value, self.qubits)

    @property
    def name(self) -> str:
        if self.gate is GateKind.CX:
            a, b = self.qubits
            return f"CX:d{a}-d{b}"
        return f"{self.gate.value}:d{self.qubits[0]}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Device:
    """Qubit count plus directed couplings.

    ``basis`` optionally restricts which single-qubit gates exist on which
    qubits (``{"X": (0, 1), "SX": (0,)}``); ``None`` means every qubit has
    I, RZ, X and SX.
    """

    name: str
    n_qubits: int
    couplings: tuple[tuple[int, int], ...] = ()
    dt_label: str = "dt"
    basis: tuple[tuple[str, tuple[int, ...]], ...] | None = None

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        pairs = tuple((int(a), int(b)) for a, b in self.couplings)
        object.__setattr__(self, "couplings", pairs)
        seen = set()
        for a, b in pairs:
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"coupling {(a, b)} references a qubit outside 0..{self.n_qubits - 1}")
            if a == b:
                raise ValueError(f"self-coupling {(a, b)} is not allowed")
            if (a, b) in seen:
                raise ValueError(f"duplicate coupling {(a, b)}")
            seen.add((a, b))
        if self.basis is not None:
            basis = self.basis.items() if isinstance(self.basis, dict) else self.basis
            norm = []
            for gate, qubits in basis:
                kind = GateKind(gate)
                if kind is GateKind.CX:
                    raise ValueError("CX availability is given by couplings, not basis")
                qs = tuple(sorted(int(q) for q in qubits))
                if any(not 0 <= q < self.n_qubits for q in qs):
                    raise ValueError(f"basis entry {gate} references an unknown qubit")
                norm.append((kind.value, qs))
            object.__setattr__(self, "basis", tuple(norm))

    @property
    def n_couplings(self) -> int:
        return len(self.couplings)

    def coupling_index(self, a: int, b: int) -> int:
        try:
            return self.couplings.index((a, b))
        except ValueError:
            raise ValueError(f"qubits ({a}, {b}) are not coupled on {self.name}") from None

    def has_gate(self, gate: GateKind, qubit: int) -> bool:
        if self.basis is None:
            return True
        return any(g == gate.value and qubit in qs for g, qs in self.basis)

    def to_dict(self) -> dict:
        d = {"name": self.name, "n_qubits": self.n_qubits,
             "couplings": [list(p) for p in self.couplings]}
        if self.dt_label != "dt":
            d["dt_label"] = self.dt_label
        if self.basis is not None:
            d["basis"] = {g: list(qs) for g, qs in self.basis}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Device":
        basis = d.get("basis")
        return cls(
            name=d.get("name", "device"),
            n_qubits=int(d["n_qubits"]),
            couplings=tuple(tuple(p) for p in d.get("couplings", [])),
            dt_label=d.get("dt_label", "dt"),
            basis=tuple((g, tuple(qs)) for g, qs in basis.items()) if basis is not None else None,
        )


def build_channels(device: Device) -> list[Channel]:
    return [drive(q) for q in range(device.n_qubits)] + \
        [control(j) for j in range(device.n_couplings)]


def cx_label(device: Device, a: int, b: int) -> Label:
    j = device.coupling_index(a, b)
    return Label(GateKind.CX, (drive(a), drive(b), control(j)), (a, b))


def enumerate_labels(device: Device) -> list[Label]:
    """All labels of the device: single-qubit gates per qubit, then CX per coupling.

    RZ labels are included; check ``Label.virtual`` to skip them.
    """
    labels = []
    for q in range(device.n_qubits):
        for gate in SINGLE_QUBIT_GATES:
            if device.has_gate(gate, q):
                labels.append(Label(gate, (drive(q),), (q,)))
    for a, b in device.couplings:
        labels.append(cx_label(device, a, b))
    return labels


def _both_ways(edges) -> tuple[tuple[int, int], ...]:
    out = []
    for a, b in edges:
        out += [(a, b), (b, a)]
    return tuple(out)


# undirected edges of the 5-qubit T and 7-qubit H coupling maps
_TSHAPE5_EDGES = ((0, 1), (1, 2), (1, 3), (3, 4))
_HSHAPE7_EDGES = ((0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6))


def standard_topology(kind: str, n: int | None = None) -> Device:
    kind = kind.lower()
    if kind == "line":
        if n is None or n < 1:
            raise ValueError("line topology needs n >= 1")
        return Device(f"line{n}", n, _both_ways((q, q + 1) for q in range(n - 1)))
    if kind in ("tshape5", "t"):
        if n not in (None, 5):
            raise ValueError(f"TShape5 has 5 qubits, got n={n}")
        return Device("tshape5", 5, _both_ways(_TSHAPE5_EDGES))
    if kind in ("hshape7", "h"):
        if n not in (None, 7):
            raise ValueError(f"HShape7 has 7 qubits, got n={n}")
        return Device("hshape7", 7, _both_ways(_HSHAPE7_EDGES))
    raise ValueError(f"unknown topology {kind!r}")


def save_device(device: Device, path) -> None:
    Path(path).write_text(json.dumps(device.to_dict(), indent=2) + "\n")


def load_device(path) -> Device:
    return Device.from_dict(json.loads(Path(path).read_text()))
