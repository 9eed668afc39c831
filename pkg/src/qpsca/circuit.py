"""Gate-level circuits, a small OpenQASM 2.0 reader, and pulse scheduling."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .device import GateKind, Label
from .pulselib import PulseLibrary


class QasmError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScheduleError(ValueError):
    pass


_ARITY = {GateKind.I: 1, GateKind.RZ: 1, GateKind.X: 1, GateKind.SX: 1, GateKind.CX: 2}


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind.value} takes {_ARITY[self.kind]} qubit(s)")
        if (self.angle is not None) != (self.kind is GateKind.RZ):
            raise ValueError("an angle is required for RZ and only for RZ")

    def __str__(self):
        q = ",".join(map(str, self.qubits))
        return f"{self.kind.value}({q})" if self.angle is None else f"RZ[{self.angle:.4g}]({q})"


@dataclass
class GateCircuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    # barrier/measure statements as (name, qubits); never scheduled
    directives: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"{g} uses a qubit outside 0..{self.n_qubits - 1}")

    def without_rz(self) -> "GateCircuit":
        return GateCircuit(self.n_qubits, [g for g in self.gates if g.kind is not GateKind.RZ])


# --------------------------------------------------------------------- QASM

class _AngleParser:
    """Recursive-descent evaluator for rz angle expressions."""

    _tok = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)|(pi)|([-+*/()]))")

    def __init__(self, text: str, line: int):
        self.line = line
        self.tokens = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = self._tok.match(text, pos)
            if not m or m.end() == pos:
                raise QasmError(f"bad angle expression {text!r}", line)
            num, pi, op = m.groups()
            self.tokens.append(float(num) if num else math.pi if pi else op)
            pos = m.end()
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def parse(self) -> float:
        val = self._expr()
        if self._peek() is not None:
            raise QasmError("trailing tokens in angle expression", self.line)
        return val

    def _expr(self):
        val = self._term()
        while self._peek() in ("+", "-"):
            val = val + self._term() if self._next() == "+" else val - self._term()
        return val

    def _term(self):
        val = self._unary()
        while self._peek() in ("*", "/"):
            if self._next() == "*":
                val *= self._unary()
            else:
                den = self._unary()
                if den == 0:
                    raise QasmError("division by zero in angle", self.line)
                val /= den
        return val

    def _unary(self):
        if self._peek() == "-":
            self._next()
            return -self._unary()
        if self._peek() == "+":
            self._next()
            return self._unary()
        tok = self._next()
        if tok == "(":
            val = self._expr()
            if self._next() != ")":
                raise QasmError("unbalanced parentheses in angle", self.line)
            return val
        if isinstance(tok, float):
            return tok
        raise QasmError("malformed angle expression", self.line)


_GATE_NAMES = {"id": GateKind.I, "x": GateKind.X, "sx": GateKind.SX, "rz": GateKind.RZ,
               "cx": GateKind.CX}
_STMT = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*(\((.*)\))?\s*(.*)$", re.S)
_QARG = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\[\s*(\d+)\s*\]$")


def _strip_comments(text: str) -> str:
    return re.sub(r"//[^\n]*", "", text)


def _statements(text: str):
    """Yield (statement, line number of its first token)."""
    buf, start, line = [], None, 1
    for ch in _strip_comments(text):
        if ch == ";":
            stmt = "".join(buf).strip()
            if stmt:
                yield stmt, start
            buf, start = [], None
        else:
            if start is None and not ch.isspace():
                start = line
            buf.append(ch)
        if ch == "\n":
            line += 1
    if "".join(buf).strip():
        raise QasmError("missing ';' at end of input", start)


def parse_qasm(text: str) -> GateCircuit:
    """Parse the OpenQASM 2.0 basis-gate subset (id, x, sx, rz, cx, barrier, measure)."""
    qreg = None
    n_qubits = 0
    gates: list[Gate] = []
    directives = []

    def qubit(arg: str, line: int) -> int:
        m = _QARG.match(arg.strip())
        if not m:
            raise QasmError(f"expected a qubit like q[0], got {arg.strip()!r}", line)
        if qreg is None:
            raise QasmError("qubit used before qreg declaration", line)
        if m.group(1) != qreg:
            raise QasmError(f"unknown register {m.group(1)!r}", line)
        idx = int(m.group(2))
        if idx >= n_qubits:
            raise QasmError(f"qubit {idx} out of range for {qreg}[{n_qubits}]", line)
        return idx

    for stmt, line in _statements(text):
        if stmt.startswith("OPENQASM"):
            if not re.fullmatch(r"OPENQASM\s+2(\.0)?", stmt):
                raise QasmError(f"unsupported header {stmt!r}", line)
            continue
        if stmt.startswith("include"):
            continue
        m = _STMT.match(stmt)
        if not m:
            raise QasmError(f"malformed statement {stmt!r}", line)
        name, _, params, rest = m.groups()
        if name in ("qreg", "creg"):
            rm = _QARG.match(rest.strip())
            if not rm or params is not None:
                raise QasmError(f"malformed {name} declaration", line)
            if name == "qreg":
                if qreg is not None:
                    raise QasmError("only one qreg is supported", line)
                qreg, n_qubits = rm.group(1), int(rm.group(2))
            continue
        if name == "barrier":
            qs = tuple(qubit(a, line) for a in rest.split(",")) if rest.strip() else ()
            directives.append(("barrier", qs))
            continue
        if name == "measure":
            parts = rest.split("->")
            if len(parts) != 2:
                raise QasmError("measure needs 'q[i] -> c[j]'", line)
            directives.append(("measure", (qubit(parts[0], line),)))
            continue
        if name not in _GATE_NAMES:
            raise QasmError(f"non-basis gate {name!r}", line)
        kind = _GATE_NAMES[name]
        args = [a for a in rest.split(",")] if rest.strip() else []
        if len(args) != _ARITY[kind]:
            raise QasmError(f"{name} takes {_ARITY[kind]} qubit argument(s)", line)
        qs = tuple(qubit(a, line) for a in args)
        if kind is GateKind.CX and qs[0] == qs[1]:
            raise QasmError("cx needs two distinct qubits", line)
        if kind is GateKind.RZ:
            if params is None:
                raise QasmError("rz needs an angle", line)
            angle = _AngleParser(params, line).parse()
        else:
            if params is not None:
                raise QasmError(f"{name} takes no parameters", line)
            angle = None
        gates.append(Gate(kind, qs, angle))
    if qreg is None:
        raise QasmError("no qreg declared")
    return GateCircuit(n_qubits, gates, directives)


def circuit_to_qasm(circuit: GateCircuit) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.n_qubits}];"]
    names = {v: k for k, v in _GATE_NAMES.items()}
    for g in circuit.gates:
        args = ",".join(f"q[{q}]" for q in g.qubits)
        if g.kind is GateKind.RZ:
            lines.append(f"rz({g.angle!r}) {args};")
        else:
            lines.append(f"{names[g.kind]} {args};")
    return "\n".join(lines) + "\n"


def load_qasm(path) -> GateCircuit:
    return parse_qasm(Path(path).read_text(encoding="utf-8"))


# ----------------------------------------------------------------- schedules

@dataclass(frozen=True)
class PulseEvent:
    label: Label
    start: int


@dataclass
class PulseSchedule:
    events: list[PulseEvent]
    total_duration: int

    def observable(self) -> "PulseSchedule":
        """Events that emit power (RZ and I removed)."""
        return PulseSchedule([e for e in self.events
                              if e.label.gate not in (GateKind.RZ, GateKind.I)],
                             self.total_duration)

    def event_set(self) -> set[tuple[Label, int]]:
        return {(e.label, e.start) for e in self.events}


def channel_conflicts(schedule: PulseSchedule, library: PulseLibrary) -> list[tuple[PulseEvent, PulseEvent]]:
    """Pairs of events whose occupied intervals overlap on some channel."""
    by_channel = {}
    for ev in schedule.events:
        d = library.duration(ev.label)
        if d == 0:
            continue
        for c in ev.label.channels:
            by_channel.setdefault(c, []).append((ev.start, ev.start + d, ev))
    bad = []
    for spans in by_channel.values():
        spans.sort(key=lambda s: (s[0], s[1]))
        for (s0, e0, a), (s1, e1, b) in zip(spans, spans[1:]):
            if s1 < e0:
                bad.append((a, b))
    return bad


def _event_sort_key(ev: PulseEvent):
    return (ev.start, min(c.sort_key() for c in ev.label.channels), ev.label.gate.value)


def _labels_for(circuit: GateCircuit, library: PulseLibrary) -> list[Label]:
    if circuit.n_qubits > library.device.n_qubits:
        raise ScheduleError(f"circuit needs {circuit.n_qubits} qubits, device has {library.device.n_qubits}")
    out = []
    for g in circuit.gates:
        try:
            out.append(library.label(g.kind, g.qubits))
        except (KeyError, ValueError) as exc:
            raise ScheduleError(str(exc)) from exc
    return out


def _asap_starts(labels: list[Label], library: PulseLibrary) -> tuple[list[int], int]:
    free: dict = {}
    starts = []
    for lab in labels:
        t = max((free.get(c, 0) for c in lab.channels), default=0)
        d = library.duration(lab)
        starts.append(t)
        if d:
            for c in lab.channels:
                free[c] = t + d
    return starts, max(free.values(), default=0)


def schedule_asap(circuit: GateCircuit, library: PulseLibrary) -> PulseSchedule:
    """Start every gate as soon as all channels of its label are free."""
    labels = _labels_for(circuit, library)
    starts, total = _asap_starts(labels, library)
    events = [PulseEvent(lab, t) for lab, t in zip(labels, starts)]
    return PulseSchedule(sorted(events, key=_event_sort_key), total)


def schedule_alap(circuit: GateCircuit, library: PulseLibrary) -> PulseSchedule:
    """Start every gate as late as possible (ASAP on the reversed circuit, mirrored)."""
    labels = _labels_for(circuit, library)
    rev_starts, total = _asap_starts(labels[::-1], library)
    events = []
    for lab, t in zip(labels[::-1], rev_starts):
        events.append(PulseEvent(lab, total - t - library.duration(lab)))
    return PulseSchedule(sorted(events, key=_event_sort_key), total)


def schedule(circuit: GateCircuit, library: PulseLibrary, policy: str = "asap") -> PulseSchedule:
    if policy == "asap":
        return schedule_asap(circuit, library)
    if policy == "alap":
        return schedule_alap(circuit, library)
    raise ValueError(f"unknown scheduling policy {policy!r}")


def schedule_to_gates(sched: PulseSchedule, n_qubits: int | None = None) -> GateCircuit:
    """Gate order implied by a schedule; RZ events are dropped."""
    events = sorted((e for e in sched.events if not e.label.virtual), key=_event_sort_key)
    gates = [Gate(e.label.gate, e.label.qubits) for e in events]
    if n_qubits is None:
        n_qubits = max((q + 1 for g in gates for q in g.qubits), default=1)
    return GateCircuit(n_qubits, gates)


def circuit_depth(circuit: GateCircuit) -> int:
    """Longest chain of gates through shared qubits."""
    level = [0] * circuit.n_qubits
    for g in circuit.gates:
        d = 1 + max(level[q] for q in g.qubits)
        for q in g.qubits:
            level[q] = d
    return max(level, default=0)


# --------------------------------------------------------------------- JSON

def schedule_to_dict(sched: PulseSchedule) -> dict:
    return {"events": [{"gate": e.label.gate.value, "qubits": list(e.label.qubits), "start": e.start}
                       for e in sorted(sched.events, key=_event_sort_key)],
            "total_duration": sched.total_duration}


def schedule_from_dict(data: dict, library: PulseLibrary) -> PulseSchedule:
    events = [PulseEvent(library.label(e["gate"], e["qubits"]), int(e["start"]))
              for e in data["events"]]
    return PulseSchedule(sorted(events, key=_event_sort_key), int(data["total_duration"]))


def save_schedule(sched: PulseSchedule, path) -> None:
    Path(path).write_text(json.dumps(schedule_to_dict(sched), indent=1) + "\n")


def load_schedule(path, library: PulseLibrary) -> PulseSchedule:
    return schedule_from_dict(json.loads(Path(path).read_text()), library)


def random_circuit(device, n_gates: int, seed=0, n_qubits: int | None = None,
                   rz_fraction: float = 0.2, cx_fraction: float = 0.3) -> GateCircuit:
    """Random basis-gate circuit on the first ``n_qubits`` qubits of ``device``.

    CX gates only use couplings inside that qubit range. RZ is mixed in at
    ``rz_fraction``; I is never generated.
    """
    import numpy as np

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = device.n_qubits if n_qubits is None else n_qubits
    pairs = [p for p in device.couplings if max(p) < n]
    gates = []
    for _ in range(n_gates):
        r = rng.random()
        if pairs and r < cx_fraction:
            a, b = pairs[rng.integers(len(pairs))]
            gates.append(Gate(GateKind.CX, (a, b)))
            continue
        q = int(rng.integers(n))
        if r < cx_fraction + rz_fraction:
            gates.append(Gate(GateKind.RZ, (q,), float(rng.uniform(-math.pi, math.pi))))
        else:
            kind = GateKind.X if rng.random() < 0.5 else GateKind.SX
            if not device.has_gate(kind, q):
                kind = GateKind.SX if kind is GateKind.X else GateKind.X
            gates.append(Gate(kind, (q,)))
    return GateCircuit(n, gates)
