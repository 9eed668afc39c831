"""Basis pulses, parametric envelopes and synthetic pulse libraries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .device import (
    Channel, Device, GateKind, Label, PULSED_SINGLE_QUBIT_GATES,
    cx_label, drive, enumerate_labels,
)


class LibraryError(ValueError):
    pass


class LibraryFormatError(LibraryError):
    pass


class IncompleteLibraryError(LibraryError):
    pass


class DurationMismatchError(LibraryError):
    pass


# ---------------------------------------------------------------- envelopes

@dataclass(frozen=True)
class Drag:
    duration: int
    amp: complex
    sigma: float
    beta: float

    def __post_init__(self):
        if self.duration <= 0 or self.sigma <= 0:
            raise ValueError("Drag needs duration > 0 and sigma > 0")


@dataclass(frozen=True)
class GaussianSquare:
    duration: int
    amp: complex
    sigma: float
    width: int

    def __post_init__(self):
        if self.duration <= 0 or self.sigma <= 0:
            raise ValueError("GaussianSquare needs duration > 0 and sigma > 0")
        if not 0 <= self.width < self.duration:
            raise ValueError("GaussianSquare width must lie in [0, duration)")


@dataclass(frozen=True)
class Delay:
    duration: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("Delay needs duration > 0")


Envelope = Drag | GaussianSquare | Delay


def _lifted_gaussian(dist: np.ndarray, sigma: float, edge: float) -> np.ndarray:
    # g shifted so that g(edge) == 0 and rescaled so that g(0) == 1
    g = np.exp(-dist ** 2 / (2 * sigma ** 2))
    g_edge = np.exp(-edge ** 2 / (2 * sigma ** 2))
    return (g - g_edge) / (1 - g_edge)


def sample_envelope(env: Envelope) -> np.ndarray:
    """Complex samples of ``env`` at x = 0 .. duration-1.

    Gaussian parts are lifted so they vanish one sample outside the
    window (x = -1 and x = duration).
    """
    d = env.duration
    x = np.arange(d, dtype=float)
    if isinstance(env, Delay):
        return np.zeros(d, dtype=complex)
    if isinstance(env, Drag):
        mu = (d - 1) / 2
        g = _lifted_gaussian(x - mu, env.sigma, mu + 1)
        deriv = -(x - mu) / env.sigma ** 2
        return env.amp * g * (1 + 1j * env.beta * deriv)
    if isinstance(env, GaussianSquare):
        lo = (d - 1) / 2 - (env.width - 1) / 2
        hi = (d - 1) / 2 + (env.width - 1) / 2
        dist = np.where(x < lo, x - lo, np.where(x > hi, x - hi, 0.0))
        g = _lifted_gaussian(dist, env.sigma, lo + 1)
        return (env.amp * g).astype(complex)
    raise TypeError(f"unknown envelope {env!r}")


# ------------------------------------------------------------------ pulses

@dataclass(frozen=True, eq=False)
class BasisPulse:
    label: Label
    waveforms: dict[Channel, np.ndarray]

    @property
    def durations(self) -> dict[Channel, int]:
        return {c: len(w) for c, w in self.waveforms.items()}

    @property
    def duration(self) -> int:
        return max((len(w) for w in self.waveforms.values()), default=0)

    def __eq__(self, other):
        if not isinstance(other, BasisPulse):
            return NotImplemented
        return (self.label == other.label and self.waveforms.keys() == other.waveforms.keys()
                and all(np.array_equal(w, other.waveforms[c]) for c, w in self.waveforms.items()))

    __hash__ = None


def power_profile(pulse: BasisPulse, channel: Channel) -> np.ndarray:
    """Per-sample power |w|^2 of ``pulse`` on ``channel``."""
    if channel not in pulse.waveforms:
        raise KeyError(f"{pulse.label} has no waveform on {channel.name}")
    w = pulse.waveforms[channel]
    return w.real ** 2 + w.imag ** 2


@dataclass(eq=False)
class PulseLibrary:
    device: Device
    pulses: dict[tuple, BasisPulse]
    alignment: int = 1
    _labels: list[Label] = field(init=False, repr=False)

    def __post_init__(self):
        self._labels = enumerate_labels(self.device)
        missing = [lab.name for lab in self._labels
                   if not lab.virtual and lab.key not in self.pulses]
        if missing:
            raise IncompleteLibraryError(f"incomplete library: no pulse for {', '.join(missing)}")
        for pulse in self.pulses.values():
            for c, w in pulse.waveforms.items():
                if c not in pulse.label.channels:
                    raise LibraryError(f"{pulse.label} has a waveform on foreign channel {c.name}")
                if np.max(np.abs(w), initial=0.0) > 1 + 1e-12:
                    raise LibraryError(f"{pulse.label} on {c.name} exceeds unit amplitude")
        if self.alignment < 1:
            raise LibraryError("alignment must be positive")

    # lookups -----------------------------------------------------------
    @property
    def labels(self) -> list[Label]:
        return list(self._labels)

    def pulsed_labels(self) -> list[Label]:
        return [lab for lab in self._labels if not lab.virtual]

    def label_index(self, label: Label) -> int:
        return self._labels.index(label)

    def label(self, gate, qubits) -> Label:
        gate = GateKind(gate)
        qubits = tuple(int(q) for q in qubits)
        if gate is GateKind.CX:
            return cx_label(self.device, *qubits)
        for lab in self._labels:
            if lab.gate is gate and lab.qubits == qubits:
                return lab
        raise KeyError(f"device {self.device.name} has no {gate.value} on qubit {qubits}")

    def pulse(self, label: Label) -> BasisPulse:
        try:
            return self.pulses[label.key]
        except KeyError:
            raise KeyError(f"library has no pulse for {label}") from None

    def duration(self, label: Label) -> int:
        if label.virtual:
            return 0
        return self.pulse(label).duration

    def total_power(self, label: Label) -> np.ndarray:
        """Sum over channels of the label's power profile (length = duration)."""
        pulse = self.pulse(label)
        out = np.zeros(pulse.duration)
        for c in sorted(pulse.waveforms):
            p = power_profile(pulse, c)
            out[:len(p)] += p
        return out

    def max_power(self) -> float:
        return max((float(np.max(power_profile(p, c), initial=0.0))
                    for p in self.pulses.values() for c in p.waveforms), default=0.0)

    @property
    def sq_duration(self) -> int:
        durs = [self.pulse(lab).duration for lab in self.pulsed_labels()
                if lab.gate in PULSED_SINGLE_QUBIT_GATES]
        return max(durs, default=self.alignment)

    def __eq__(self, other):
        if not isinstance(other, PulseLibrary):
            return NotImplemented
        return (self.device == other.device and self.alignment == other.alignment
                and self.pulses.keys() == other.pulses.keys()
                and all(self.pulses[k] == other.pulses[k] for k in self.pulses))


# --------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class SynthProfile:
    sq_duration: int = 160
    cx_duration_base: int = 1024
    cx_jitter_steps: int = 32
    alignment: int = 16
    cx_durations: tuple[tuple[tuple[int, int], int], ...] = ()

    def __post_init__(self):
        a = self.alignment
        if self.sq_duration % a or self.cx_duration_base % a:
            raise ValueError("durations must be multiples of the alignment")
        for pair, d in self.cx_durations:
            if d % a:
                raise ValueError(f"CX duration {d} for {pair} is not a multiple of {a}")

    def to_dict(self) -> dict:
        return {"sq_duration": self.sq_duration, "cx_duration_base": self.cx_duration_base,
                "cx_jitter_steps": self.cx_jitter_steps, "alignment": self.alignment,
                "cx_durations": [[list(p), d] for p, d in self.cx_durations]}


TOY_PROFILE = SynthProfile(sq_duration=16, cx_duration_base=48, cx_jitter_steps=2, alignment=8)


def _drag_wave(duration, amp, sigma, beta) -> np.ndarray:
    w = sample_envelope(Drag(duration, amp, sigma, beta))
    peak = np.max(np.abs(w))
    if peak > 1:
        w = w / peak
    return w


def synth_library(device: Device, profile: SynthProfile = SynthProfile(), seed: int = 0) -> PulseLibrary:
    """Deterministic synthetic library for ``device``.

    X and SX are DRAG pulses with per-qubit parameters; SX has about half the
    amplitude and a narrower envelope than X. A CX on (a, b) starts with an
    exact copy of SX(b) on the target drive, carries a flat-top tone on the
    coupling's control channel, and has extra DRAG segments on both drives.
    """
    rng = np.random.default_rng(seed)
    S = profile.sq_duration
    overrides = dict((tuple(p), d) for p, d in profile.cx_durations)
    pulses: dict[tuple, BasisPulse] = {}

    sx_wave = {}
    for q in range(device.n_qubits):
        d = drive(q)
        x_amp = rng.uniform(0.7, 0.9)
        x_sigma = rng.uniform(0.2, 0.28) * S
        x_beta = rng.uniform(-1, 1)
        sx_amp = x_amp * rng.uniform(0.45, 0.55)
        sx_sigma = x_sigma * rng.uniform(0.4, 0.5)
        sx_beta = rng.uniform(-1, 1)
        for lab in enumerate_labels(device):
            if lab.qubits != (q,) or lab.virtual:
                continue
            if lab.gate is GateKind.I:
                w = sample_envelope(Delay(S))
            elif lab.gate is GateKind.X:
                w = _drag_wave(S, x_amp, x_sigma, x_beta)
            else:
                w = _drag_wave(S, sx_amp, sx_sigma, sx_beta)
                sx_wave[q] = w
            pulses[lab.key] = BasisPulse(lab, {d: w})

    for a, b in device.couplings:
        lab = cx_label(device, a, b)
        jitter = int(rng.integers(0, profile.cx_jitter_steps + 1))
        D = overrides.get((a, b), profile.cx_duration_base + jitter * profile.alignment)
        L = D - 2 * S
        if L < 2:
            raise ValueError(f"CX duration {D} too short for sq_duration {S}")
        pre = _drag_wave(S, rng.uniform(0.3, 0.6), rng.uniform(0.12, 0.18) * S, rng.uniform(-1, 1))
        trail = _drag_wave(S, rng.uniform(0.3, 0.6), rng.uniform(0.15, 0.25) * S, rng.uniform(-1, 1))
        cr_amp = rng.uniform(0.2, 0.5) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        cr_sigma = max(1, min(64, L // 8))
        cr = sample_envelope(GaussianSquare(L, cr_amp, cr_sigma, L - 4 * cr_sigma))

        ctrl_w = np.zeros(D, dtype=complex)
        ctrl_w[:S] = pre
        ctrl_w[D - S:] = pre
        tgt_w = np.zeros(D, dtype=complex)
        tgt_w[:S] = sx_wave[b] if b in sx_wave else _drag_wave(S, 0.3, 0.15 * S, 0.0)
        tgt_w[D - S:] = trail
        u_w = np.zeros(D, dtype=complex)
        u_w[S:D - S] = cr
        c_drive, t_drive, u = lab.channels
        pulses[lab.key] = BasisPulse(lab, {c_drive: ctrl_w, t_drive: tgt_w, u: u_w})

    return PulseLibrary(device, pulses, profile.alignment)


# ------------------------------------------------------------------- JSON

def library_to_dict(lib: PulseLibrary) -> dict:
    out = []
    for lab in lib.pulsed_labels():
        pulse = lib.pulse(lab)
        chans = sorted(pulse.waveforms)
        out.append({
            "gate": lab.gate.value,
            "qubits": list(lab.qubits),
            "channels": [c.name for c in lab.channels],
            "durations": {c.name: len(pulse.waveforms[c]) for c in chans},
            "waveforms": {c.name: [[float(v.real), float(v.imag)] for v in pulse.waveforms[c]]
                          for c in chans},
        })
    return {"device": lib.device.to_dict(), "alignment": lib.alignment, "pulses": out}


def library_from_dict(data: dict) -> PulseLibrary:
    try:
        device = Device.from_dict(data["device"])
        alignment = int(data["alignment"])
        entries = data["pulses"]
    except (KeyError, TypeError, ValueError) as exc:
        raise LibraryFormatError(f"malformed library: {exc}") from exc
    pulses = {}
    for entry in entries:
        try:
            gate = GateKind(entry["gate"])
            qubits = tuple(int(q) for q in entry["qubits"])
            if gate is GateKind.CX:
                label = cx_label(device, *qubits)
            else:
                label = next(lab for lab in enumerate_labels(device) if lab.key == (gate.value, qubits))
            waves = {}
            for name, samples in entry["waveforms"].items():
                arr = np.asarray(samples, dtype=float).reshape(-1, 2)
                waves[Channel.parse(name)] = arr[:, 0] + 1j * arr[:, 1]
            declared = {Channel.parse(k): int(v) for k, v in entry.get("durations", {}).items()}
        except (KeyError, TypeError, ValueError, StopIteration) as exc:
            raise LibraryFormatError(f"malformed pulse entry {entry.get('gate')}{entry.get('qubits')}: {exc}") from exc
        for c, w in waves.items():
            if c in declared and declared[c] != len(w):
                raise DurationMismatchError(
                    f"duration mismatch: {label} on {c.name} declares {declared[c]} dt "
                    f"but has {len(w)} samples")
        pulses[label.key] = BasisPulse(label, waves)
    return PulseLibrary(device, pulses, alignment)


def save_library(lib: PulseLibrary, path) -> None:
    Path(path).write_text(json.dumps(library_to_dict(lib)) + "\n")


def load_library(path) -> PulseLibrary:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LibraryFormatError(f"malformed JSON in {path}: {exc}") from exc
    return library_from_dict(data)
