"""Per-channel and total power traces, noise, and trace files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import PulseSchedule
from .device import Channel, build_channels
from .pulselib import PulseLibrary, power_profile

TOTAL = "total"
_MAGIC = b"QPTR"
_VERSION = 1
_HEADER = struct.Struct("<4sI8sQ")


@dataclass(eq=False)
class PowerTrace:
    scope: Channel | str
    samples: np.ndarray

    @property
    def dt_count(self) -> int:
        return len(self.samples)

    @property
    def scope_name(self) -> str:
        return self.scope if isinstance(self.scope, str) else self.scope.name

    def __eq__(self, other):
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return self.scope == other.scope and np.array_equal(self.samples, other.samples)


def simulate_per_channel(sched: PulseSchedule, library: PulseLibrary,
                         dt_count: int | None = None) -> dict[Channel, PowerTrace]:
    """Power on every device channel: |p_{l,c}(x - t)|^2 summed over events."""
    n = sched.total_duration if dt_count is None else dt_count
    traces = {c: np.zeros(n) for c in build_channels(library.device)}
    for ev in sched.events:
        if ev.label.virtual:
            continue
        try:
            pulse = library.pulse(ev.label)
        except KeyError as exc:
            raise KeyError(f"schedule event {ev.label} at {ev.start} is missing from the library") from exc
        for c in sorted(pulse.waveforms):
            p = power_profile(pulse, c)
            end = min(ev.start + len(p), n)
            if end > ev.start:
                traces[c][ev.start:end] += p[:end - ev.start]
    return {c: PowerTrace(c, s) for c, s in traces.items()}


def total_of(per_channel: dict[Channel, PowerTrace]) -> PowerTrace:
    chans = sorted(per_channel)
    n = per_channel[chans[0]].dt_count if chans else 0
    total = np.zeros(n)
    for c in chans:
        total += per_channel[c].samples
    return PowerTrace(TOTAL, total)


def simulate_total(sched: PulseSchedule, library: PulseLibrary,
                   dt_count: int | None = None) -> PowerTrace:
    return total_of(simulate_per_channel(sched, library, dt_count))


def add_noise(trace: PowerTrace, sigma: float, seed: int | np.random.Generator = 0) -> PowerTrace:
    """Add i.i.d. N(0, sigma) to every power sample; negative results are kept."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return PowerTrace(trace.scope, trace.samples.copy())
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return PowerTrace(trace.scope, trace.samples + rng.normal(0.0, sigma, trace.dt_count))


def add_noise_all(traces: dict[Channel, PowerTrace], sigma: float, seed: int = 0) -> dict[Channel, PowerTrace]:
    """Independent noise per channel, drawn in canonical channel order."""
    rng = np.random.default_rng(seed)
    return {c: add_noise(traces[c], sigma, rng) for c in sorted(traces)}


# -------------------------------------------------------------------- files

class TraceFormatError(ValueError):
    pass


def write_traces(path, traces) -> None:
    """Binary records: magic, version u32, 8-byte scope tag, dt_count u64, float64 LE."""
    if isinstance(traces, PowerTrace):
        traces = [traces]
    with open(path, "wb") as fh:
        for tr in traces:
            tag = tr.scope_name.encode("ascii")
            if len(tag) > 8:
                raise ValueError(f"scope tag {tr.scope_name!r} longer than 8 bytes")
            fh.write(_HEADER.pack(_MAGIC, _VERSION, tag.ljust(8, b"\0"), tr.dt_count))
            fh.write(np.asarray(tr.samples, dtype="<f8").tobytes())


def read_traces(path) -> list[PowerTrace]:
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise TraceFormatError("truncated trace header")
        magic, version, tag, n = _HEADER.unpack_from(data, pos)
        if magic != _MAGIC:
            raise TraceFormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise TraceFormatError(f"unsupported trace version {version}")
        pos += _HEADER.size
        if len(data) - pos < 8 * n:
            raise TraceFormatError("truncated trace samples")
        samples = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float)
        pos += 8 * n
        name = tag.rstrip(b"\0").decode("ascii")
        out.append(PowerTrace(name if name == TOTAL else Channel.parse(name), samples))
    return out


def write_csv(path, trace: PowerTrace) -> None:
    with open(path, "w") as fh:
        fh.write("index,value\n")
        for i, v in enumerate(trace.samples):
            fh.write(f"{i},{float(v)!r}\n")


def read_csv(path, scope=TOTAL) -> PowerTrace:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "index,value":
        raise TraceFormatError("CSV trace must start with 'index,value'")
    vals = [float(r.split(",")[1]) for r in rows[1:] if r.strip()]
    return PowerTrace(scope, np.array(vals))
