"""Shared builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from qpsca.circuit import PulseEvent, PulseSchedule, random_circuit, schedule_asap
from qpsca.device import Device, enumerate_labels, standard_topology
from qpsca.milp import (LinExpr, MilpModel, Sense, add_abs, add_bigm_disjunction, add_pseudo_boolean,
                        build_attack_model, encode_or)
from qpsca.pulselib import TOY_PROFILE, BasisPulse, PulseLibrary, SynthProfile, synth_library
from qpsca.tracesim import add_noise, simulate_total

FIXTURES = Path(__file__).parent / "fixtures"

DEMO_PROFILE = SynthProfile(cx_durations=(((0, 1), 1376), ((1, 0), 1536)))


# ------------------------------------------------------------ worked figure

def figure_device() -> Device:
    """Two qubits, no couplings, SX only on qubit 0."""
    return Device("fig", 2, (), basis={"X": (0, 1), "SX": (0,)})


def figure_library() -> PulseLibrary:
    dev = figure_device()
    labs = {lab.name: lab for lab in enumerate_labels(dev)}

    def flat(name, n, amp):
        lab = labs[name]
        return lab.key, BasisPulse(lab, {lab.channels[0]: np.full(n, amp, dtype=complex)})

    # X on qubit 1 lasts 2 dt so the 6-dt trace admits 4 + 3 + 5 = 12 starts
    return PulseLibrary(dev, dict([flat("X:d0", 3, 0.9), flat("SX:d0", 4, 0.5), flat("X:d1", 2, 0.7)]), 1)


def figure_schedule(lib: PulseLibrary) -> PulseSchedule:
    return PulseSchedule([PulseEvent(lib.label("X", (1,)), 0), PulseEvent(lib.label("SX", (0,)), 1)], 6)


def figure_model(lib: PulseLibrary | None = None, sched: PulseSchedule | None = None, **kw) -> MilpModel:
    lib = lib or figure_library()
    sched = sched or figure_schedule(lib)
    kw.setdefault("grid", 1)
    kw.setdefault("prune_threshold", 0.0)
    return build_attack_model(simulate_total(sched, lib, 6), lib, **kw)


# ----------------------------------------------------------- golden models

def abs_model() -> MilpModel:
    """min z  s.t.  z >= x - 1,  z >= 1 - x,  x binary."""
    m = MilpModel("abs")
    x = LinExpr.of(m.binary("x"))
    z = add_abs(m, x - 1, "z")
    m.set_objective(z)
    return m


def logic_model() -> MilpModel:
    """Or-gate, pseudo-boolean and Big-M pieces in one model."""
    m = MilpModel("logic")
    a, b, c = m.binary("a"), m.binary("b"), m.binary("c")
    y = encode_or(m, a, b, name="y")
    add_pseudo_boolean(m, [a, b, c], Sense.LE, 2, name="pb")
    add_bigm_disjunction(m, [(LinExpr([(2, a), (3, b)]), 1.5), (LinExpr([(1, c), (-0.25, a)]), -0.5)],
                         name="dj")
    s = m.continuous("s", -2.5, 7)
    m.add_constraint("link", LinExpr([(1, s), (-4, y), (0.5, c)]), Sense.EQ, 0.125)
    m.set_objective(LinExpr([(1, s), (1e-3, a), (-2, c)], 3))
    return m


GOLDENS = {
    "abs.lp": abs_model,
    "figure.lp": figure_model,
    "logic.lp": logic_model,
}


# --------------------------------------------------------- toy attack data

def toy_instance(s: int):
    """Criterion 5 instance s: line device of 2-3 qubits, at most 6 gates."""
    rng = np.random.default_rng(100 + s)
    nq, ng = int(rng.integers(2, 4)), int(rng.integers(2, 7))
    dev = standard_topology("line", nq)
    lib = synth_library(dev, TOY_PROFILE, seed=s)
    sched = schedule_asap(random_circuit(dev, ng, seed=s, n_qubits=nq), lib)
    trace = simulate_total(sched, lib)
    return lib, sched, trace


ORACLE_PROFILE = SynthProfile(8, 24, 1, 4)


def oracle_models(count: int = 100, max_binaries: int = 25):
    """Random small attack models (noisy and noiseless) with at most max_binaries binaries."""
    out, s = [], 0
    while len(out) < count:
        rng = np.random.default_rng(s)
        nq = int(rng.integers(1, 3))
        dev = standard_topology("line", nq)
        lib = synth_library(dev, ORACLE_PROFILE, seed=s)
        sched = schedule_asap(random_circuit(dev, int(rng.integers(1, 4)), seed=s, n_qubits=nq), lib)
        sigma = float(rng.choice([0.0, 0.02, 0.1]))
        trace = add_noise(simulate_total(sched, lib, sched.total_duration + 8), sigma, seed=s)
        for thr in (0.0, 0.2, 0.4, 0.6, 0.8, 0.9):
            m = build_attack_model(trace, lib, grid=4, prune_threshold=thr)
            if len(m.binaries) <= max_binaries:
                out.append((s, m))
                break
        s += 1
    return out


def random_prob(rng, n: int) -> np.ndarray:
    """Probability vector with a random sprinkling of exact zeros."""
    p = rng.random(n) * (rng.random(n) > 0.2)
    if p.sum() == 0:
        p[rng.integers(n)] = 1.0
    return p / p.sum()
