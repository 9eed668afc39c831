"""Ground-truth comparison and the benchmark harness."""

from __future__ import annotations

import csv
import io
import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .circuit import GateCircuit, PulseSchedule, _event_sort_key, circuit_depth, load_qasm, schedule
from .device import GateKind
from .pulselib import PulseLibrary
from .tracesim import add_noise, add_noise_all, simulate_per_channel, simulate_total

log = logging.getLogger(__name__)

CSV_COLUMNS = ["name", "qubits", "total_gates", "rz_gates", "xsxcx_gates", "total_dt", "binaries",
               "continuous", "constraints", "solver_time_s", "objective", "match_tier"]

TIERS = ("exact", "sequence", "multiset", "none")


def gate_counts(source) -> dict:
    """{total, rz, xsxcx} for a GateCircuit or PulseSchedule (I counts only in total)."""
    if isinstance(source, GateCircuit):
        kinds = [g.kind for g in source.gates]
    else:
        kinds = [e.label.gate for e in source.events]
    c = Counter(kinds)
    return {"total": len(kinds), "rz": c[GateKind.RZ],
            "xsxcx": c[GateKind.X] + c[GateKind.SX] + c[GateKind.CX]}


@dataclass
class GateVerdict:
    gate: str
    qubits: tuple
    start: int
    recovered: bool


@dataclass
class MatchReport:
    gate_counts: dict
    recovered_exact: bool
    verdicts: list[GateVerdict]
    start_time_exact: bool
    sequence_match: bool
    multiset_match: bool
    trace_residual: float | None = None
    timings: dict = field(default_factory=dict)
    model_stats: dict = field(default_factory=dict)

    @property
    def tier(self) -> str:
        if self.recovered_exact:
            return "exact"
        if self.sequence_match:
            return "sequence"
        if self.multiset_match:
            return "multiset"
        return "none"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tier"] = self.tier
        return d


def _sequence(sched: PulseSchedule) -> list[str]:
    return [e.label.name for e in sorted(sched.events, key=_event_sort_key)]


def compare(truth: PulseSchedule, recovered: PulseSchedule, library: PulseLibrary | None = None) -> MatchReport:
    """Match after dropping unobservable events (RZ, I) from both sides."""
    t_obs, r_obs = truth.observable(), recovered.observable()
    t_set, r_set = t_obs.event_set(), r_obs.event_set()
    verdicts = [GateVerdict(e.label.gate.value, e.label.qubits, e.start, (e.label, e.start) in r_set)
                for e in sorted(t_obs.events, key=_event_sort_key)]
    exact = t_set == r_set
    residual = None
    if library is not None:
        n = max(truth.total_duration, recovered.total_duration)
        a = simulate_total(t_obs, library, n).samples
        b = simulate_total(r_obs, library, n).samples
        residual = float(np.sum(np.abs(a - b)))
    return MatchReport(
        gate_counts={"truth": gate_counts(truth), "recovered": gate_counts(recovered)},
        recovered_exact=exact,
        verdicts=verdicts,
        start_time_exact=exact,
        sequence_match=_sequence(t_obs) == _sequence(r_obs),
        multiset_match=Counter(l.name for l, _ in t_set) == Counter(l.name for l, _ in r_set),
        trace_residual=residual,
    )


# ---------------------------------------------------------------- benchmark

@dataclass
class BenchConfig:
    attack: str = "per-channel"          # or "total"
    policy: str = "asap"
    noise_sigma: float = 0.0
    seed: int = 0
    tau: float = 0.05
    tau_cx: float = 0.05
    grid: int | None = None
    prune_threshold: float = 0.5
    sample_stride: int = 1
    backend: str = "bnb"
    time_limit: float = 60.0
    solver_cmd: str | None = None
    jobs: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BenchRow:
    name: str
    qubits: int
    total_gates: int
    rz_gates: int
    xsxcx_gates: int
    total_dt: int
    binaries: int | None = None
    continuous: int | None = None
    constraints: int | None = None
    solver_time_s: float | None = None
    objective: float | None = None
    match_tier: str = "error"
    depth: int = 0
    error: str = ""

    def csv_values(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(f"{v:.6g}")
            else:
                out.append(str(v))
        return out


def run_circuit(name: str, circuit: GateCircuit, library: PulseLibrary, config: BenchConfig) -> BenchRow:
    """Schedule, simulate, attack and compare one circuit; failures end up in the row."""
    counts = gate_counts(circuit)
    row = BenchRow(name, circuit.n_qubits, counts["total"], counts["rz"], counts["xsxcx"], 0,
                   depth=circuit_depth(circuit))
    try:
        truth = schedule(circuit, library, config.policy)
        row.total_dt = truth.total_duration
        t0 = time.perf_counter()
        if config.attack == "per-channel":
            from .perchan import PerChannelConfig, attack_per_channel
            traces = simulate_per_channel(truth, library)
            if config.noise_sigma > 0:
                traces = add_noise_all(traces, config.noise_sigma, config.seed)
            res = attack_per_channel(traces, library, PerChannelConfig(tau=config.tau, tau_cx=config.tau_cx))
            recovered = res.schedule
            row.objective = res.score
        elif config.attack == "total":
            from .milp import build_attack_model
            from .solver import decode_schedule, solve
            trace = simulate_total(truth, library)
            if config.noise_sigma > 0:
                trace = add_noise(trace, config.noise_sigma, config.seed)
            model = build_attack_model(trace, library, config.grid, config.prune_threshold,
                                       config.sample_stride)
            st = model.stats()
            row.binaries, row.continuous, row.constraints = st["binaries"], st["continuous"], st["constraints"]
            t0 = time.perf_counter()
            sol = solve(model, config.backend, config.time_limit, config.solver_cmd)
            recovered = decode_schedule(model, sol)
            row.objective = sol.objective
        else:
            raise ValueError(f"unknown attack {config.attack!r}")
        row.solver_time_s = time.perf_counter() - t0
        row.match_tier = compare(truth, recovered).tier
    except Exception as exc:  # recorded per circuit; the harness goes on
        log.warning("%s failed: %s", name, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        row.match_tier = "error"
    return row


def _run_file(args):
    path, library, config = args
    try:
        circuit = load_qasm(path)
    except Exception as exc:
        return BenchRow(Path(path).stem, 0, 0, 0, 0, 0, error=f"{type(exc).__name__}: {exc}")
    return run_circuit(Path(path).stem, circuit, library, config)


def run_benchmark(suite_dir, library: PulseLibrary, config: BenchConfig = BenchConfig()) -> list[BenchRow]:
    paths = sorted(Path(suite_dir).glob("*.qasm"))
    jobs = [(str(p), library, config) for p in paths]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_run_file, jobs))
    else:
        rows = [_run_file(j) for j in jobs]
    return sorted(rows, key=lambda r: r.name)


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_values())
    return buf.getvalue()


def rows_to_table(rows: list[BenchRow]) -> str:
    """Fixed-width table for terminals and reports."""
    head = ["name", "qubits", "gates", "rz", "x/sx/cx", "depth", "total_dt", "bin", "cont", "cons",
            "time_s", "objective", "recovered"]
    body = []
    for r in rows:
        body.append([r.name, str(r.qubits), str(r.total_gates), str(r.rz_gates), str(r.xsxcx_gates),
                     str(r.depth), str(r.total_dt),
                     "" if r.binaries is None else str(r.binaries),
                     "" if r.continuous is None else str(r.continuous),
                     "" if r.constraints is None else str(r.constraints),
                     "" if r.solver_time_s is None else f"{r.solver_time_s:.3f}",
                     "" if r.objective is None else f"{r.objective:.3g}",
                     r.match_tier])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    errors = [r for r in rows if r.error]
    for r in errors:
        lines.append(f"! {r.name}: {r.error}")
    return "\n".join(lines) + "\n"
