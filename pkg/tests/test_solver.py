import itertools
import sys

import pytest

from qpsca.circuit import PulseEvent, PulseSchedule, ScheduleError, load_qasm, random_circuit, schedule_asap
from qpsca.device import standard_topology
from qpsca.milp import LinExpr, MilpModel, Sense, build_attack_model, truth_assignment
from qpsca.pulselib import SynthProfile, synth_library
from qpsca.solver import (InfeasibleSolutionError, SolutionParseError, Solution, SolveStatus, SolverExitError,
                          TooManyBinariesError, check_solution, decode_schedule, parse_solution_text, solve,
                          solve_bnb, solve_exhaustive, solve_external)
from qpsca.tracesim import simulate_total

from support import FIXTURES, figure_library, figure_model, figure_schedule, oracle_models

PY = sys.executable
# fake solver: copies a prepared answer into {sol} and ignores {lp}
COPY = f"{PY} -c \"import shutil,sys; shutil.copy(sys.argv[1], sys.argv[2])\" {{src}} {{sol}} {{lp}}"


def test_exhaustive_trivial_cases():
    m = MilpModel()
    a = m.binary("a")
    m.add_constraint("lo", LinExpr.of(a), Sense.LE, 0)
    m.add_constraint("hi", LinExpr.of(a), Sense.GE, 1)
    assert solve_exhaustive(m).status is SolveStatus.INFEASIBLE
    empty = MilpModel()
    empty.set_objective(LinExpr((), 2.5))
    sol = solve_exhaustive(empty)
    assert sol.status is SolveStatus.OPTIMAL and sol.objective == 2.5
    sol = solve_bnb(empty)
    assert sol.status is SolveStatus.OPTIMAL and sol.objective == 2.5


def test_exhaustive_limit():
    m = MilpModel()
    for i in range(26):
        m.binary(f"b{i}")
    with pytest.raises(TooManyBinariesError):
        solve_exhaustive(m)


def _figure_schedules(lib):
    """Every schedule of at most two events on the figure device obeying the channel constraint."""
    events = [(lab, t) for lab in lib.pulsed_labels() for t in range(6 - lib.duration(lab) + 1)]
    out = [[]]
    for k in (1, 2):
        for combo in itertools.combinations(events, k):
            busy = {}
            ok = True
            for lab, t in combo:
                for c in lab.channels:
                    for s0, e0 in busy.get(c, []):
                        if s0 < t + lib.duration(lab) and t < e0:
                            ok = False
                    busy.setdefault(c, []).append((t, t + lib.duration(lab)))
            if ok:
                out.append(list(combo))
    return out


def test_figure_plant_and_recover():
    lib = figure_library()
    for combo in _figure_schedules(lib):
        sched = PulseSchedule([PulseEvent(l, t) for l, t in combo], 6)
        m = figure_model(lib, sched)
        ex = solve_exhaustive(m)
        bb = solve_bnb(m)
        assert ex.objective <= 1e-9 and bb.objective <= 1e-9
        planted = set(combo)
        for sol in (ex, bb):
            got = decode_schedule(m, sol).event_set()
            # flat pulses can tile each other; a differing zero-objective answer must be flagged
            assert got == planted or solve_bnb(m).ambiguous


def test_bnb_matches_exhaustive_sample():
    for _, m in oracle_models(15):
        a, b = solve_exhaustive(m), solve_bnb(m, time_limit=None)
        assert abs(a.objective - b.objective) <= 1e-9
        assert check_solution(m, b).ok


def test_bnb_budget_reports_timeout():
    lib = synth_library(standard_topology("line", 3), SynthProfile(16, 48, 2, 8), seed=3)
    sched = schedule_asap(random_circuit(lib.device, 6, seed=3), lib)
    m = build_attack_model(simulate_total(sched, lib), lib, grid=8)
    sol = solve_bnb(m, node_limit=3)
    assert sol.status in (SolveStatus.TIMEOUT, SolveStatus.OPTIMAL)
    if sol.status is SolveStatus.TIMEOUT and sol.assignment:
        assert check_solution(m, sol).violations == []


def test_demo_scaled_plant_and_recover():
    lib = synth_library(standard_topology("line", 2),
                        SynthProfile(16, 128, 0, 8, cx_durations=(((0, 1), 136), ((1, 0), 152))), seed=0)
    sched = schedule_asap(load_qasm(FIXTURES / "demo.qasm"), lib)
    m = build_attack_model(simulate_total(sched, lib), lib)
    sol = solve_bnb(m)
    rec = decode_schedule(m, sol)
    assert len(rec.events) == 6 and rec.event_set() == sched.event_set()
    assert sol.objective <= 1e-6 and sol.ambiguous is False


def test_check_solution_reports():
    m = figure_model()
    sol = solve_exhaustive(m)
    assert check_solution(m, sol).violations == []
    flipped = dict(sol.assignment)
    v = m.binaries[0]
    flipped[v] = 1 - flipped[v]
    rep = check_solution(m, flipped)
    assert any(x.name.startswith("fit_") for x in rep.violations)
    assert not rep.ok
    frac = dict(sol.assignment)
    frac[v] = 0.5
    assert any(x.kind == "integrality" for x in check_solution(m, frac).violations)


def test_check_solution_tolerance_probe():
    lib = figure_library()
    sched = figure_schedule(lib)
    m = figure_model(lib, sched)
    asg = truth_assignment(m, sched.event_set(), simulate_total(sched, lib))
    asg[m.var("z_1")] -= 1e-10
    assert check_solution(m, asg, tol=1e-6).violations == []
    assert check_solution(m, asg, tol=0.0).violations != []


def test_decode_all_zero_and_overlap():
    m = figure_model()
    zero = Solution({v: 0.0 for v in m.vars}, 0.0, SolveStatus.FEASIBLE)
    assert decode_schedule(m, zero).events == []
    both = Solution({v: (1.0 if v.name in ("a_0_0", "a_0_1") else 0.0) for v in m.vars}, 0.0, SolveStatus.FEASIBLE)
    with pytest.raises(ScheduleError):
        decode_schedule(m, both)


# ----------------------------------------------------------------- external

def _known_solution_text(m):
    sol = solve_exhaustive(m)
    return "\n".join(f"{v.name} {x!r}" for v, x in sol.assignment.items() if x) + "\n", sol


def test_external_echo_solver(tmp_path):
    m = figure_model()
    text, ref = _known_solution_text(m)
    src = tmp_path / "answer.sol"
    src.write_text("# objective 123\n" + text)
    sol = solve_external(m, COPY.replace("{src}", str(src)))
    assert sol.objective == pytest.approx(ref.objective, abs=1e-9)
    assert decode_schedule(m, sol).event_set() == decode_schedule(m, ref).event_set()
    assert sol.status is SolveStatus.FEASIBLE


def test_external_errors(tmp_path):
    m = figure_model()
    bad = tmp_path / "bad.sol"
    bad.write_text("bogus 1\n")
    with pytest.raises(SolutionParseError, match="unknown variable"):
        solve_external(m, COPY.replace("{src}", str(bad)))
    clash = tmp_path / "clash.sol"
    clash.write_text("a_0_0 1\na_0_1 1\n")
    with pytest.raises(InfeasibleSolutionError, match="infeasible solution returned"):
        solve_external(m, COPY.replace("{src}", str(clash)))
    with pytest.raises(SolverExitError):
        solve_external(m, f"{PY} -c \"raise SystemExit(3)\" {{lp}} {{sol}}")
    with pytest.raises(ValueError):
        solve_external(m, "solver {lp}")
    sol = solve_external(m, f"{PY} -c \"import time; time.sleep(5)\" {{lp}} {{sol}}", timeout=0.5)
    assert sol.status is SolveStatus.TIMEOUT


def test_external_reference_solver():
    m = figure_model()
    sol = solve(m, "external", 60, f"{PY} -m qpsca.extsolve {{lp}} {{sol}}")
    assert sol.status is SolveStatus.OPTIMAL and sol.objective <= 1e-9
    assert check_solution(m, sol).ok


def test_parse_solution_text():
    m = figure_model()
    asg, status = parse_solution_text(m, "# status optimal\n# a comment\na_0_0 1\n\n")
    assert status == "optimal" and asg[m.var("a_0_0")] == 1 and asg[m.var("a_0_1")] == 0
    with pytest.raises(SolutionParseError):
        parse_solution_text(m, "a_0_0 one\n")
