"""Command-line entry point.

Every subcommand writes its artifacts plus a manifest JSON with the resolved
configuration, a SHA-256 per output file and the paths of unhashed outputs
(figures and tables that carry timings).
Wall-clock numbers sit under a separate "timing" key; everything else is
deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__

log = logging.getLogger("qpsca")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
        self.config = cfg
        self.outputs: dict[str, str] = {}
        self.unhashed: list[str] = []
        self.results: dict = {}
        self.timing: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def output(self, role: str, path) -> None:
        self.outputs[role] = str(path)

    def figure(self, path) -> None:
        # images and timing-bearing tables are listed but not hashed
        self.unhashed.append(str(path))

    def write(self, path) -> None:
        self.timing.setdefault("wall_s", time.perf_counter() - self._t0)
        body = {
            "tool": "qpsca",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "outputs": {role: {"path": p, "sha256": _sha256(p)} for role, p in sorted(self.outputs.items())},
            "unhashed": self.unhashed,
            "results": self.results,
            "timing": self.timing,
        }
        Path(path).write_text(json.dumps(body, indent=1, sort_keys=True, default=str) + "\n")


def _manifest_path(args, primary) -> Path:
    if args.manifest:
        return Path(args.manifest)
    return Path(str(primary) + ".manifest.json")


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _device_from_args(args):
    from .device import load_device, standard_topology
    if getattr(args, "device", None):
        return load_device(args.device)
    return standard_topology(args.topology, args.qubits)


def _load_library(path):
    from .pulselib import load_library
    return load_library(path)


def _load_truth(args, library):
    """Schedule from --schedule JSON, or a QASM circuit scheduled with --policy."""
    from .circuit import load_qasm, load_schedule, schedule
    if getattr(args, "schedule", None):
        return load_schedule(args.schedule, library)
    if getattr(args, "circuit", None):
        return schedule(load_qasm(args.circuit), library, args.policy)
    raise UsageError("give --circuit or --schedule")


def _read_trace_file(path):
    from .tracesim import TOTAL, read_traces
    traces = read_traces(path)
    if not traces:
        raise ValueError(f"{path}: no traces")
    return {tr.scope: tr for tr in traces}, TOTAL


def _total_trace(path):
    from .tracesim import total_of
    traces, total_key = _read_trace_file(path)
    if total_key in traces:
        return traces[total_key]
    return total_of(traces)


def _channel_traces(path):
    traces, total_key = _read_trace_file(path)
    per = {k: v for k, v in traces.items() if k != total_key}
    if not per:
        raise ValueError(f"{path}: the per-channel attack needs per-channel traces, found only a total")
    return per


# ---------------------------------------------------------------- commands

def cmd_gen_device(args, man: Manifest) -> int:
    from .device import save_device
    dev = _device_from_args(args)
    save_device(dev, args.out)
    man.output("device", args.out)
    man.results = {"name": dev.name, "qubits": dev.n_qubits, "couplings": dev.n_couplings}
    man.write(_manifest_path(args, args.out))
    print(f"device {dev.name}: {dev.n_qubits} qubits, {dev.n_couplings} couplings -> {args.out}")
    return EXIT_OK


def cmd_gen_library(args, man: Manifest) -> int:
    from .pulselib import TOY_PROFILE, SynthProfile, save_library, synth_library
    dev = _device_from_args(args)
    base = TOY_PROFILE if args.profile == "toy" else SynthProfile()
    prof = SynthProfile(
        sq_duration=args.sq_duration or base.sq_duration,
        cx_duration_base=args.cx_duration or base.cx_duration_base,
        cx_jitter_steps=base.cx_jitter_steps if args.cx_jitter is None else args.cx_jitter,
        alignment=args.alignment or base.alignment,
    )
    man.config["resolved_profile"] = prof.to_dict()
    lib = synth_library(dev, prof, seed=args.seed)
    save_library(lib, args.out)
    man.output("library", args.out)
    man.results = {"labels": len(lib.labels), "sq_duration": lib.sq_duration, "alignment": lib.alignment}
    man.write(_manifest_path(args, args.out))
    print(f"library with {len(lib.labels)} labels -> {args.out}")
    return EXIT_OK


def cmd_schedule(args, man: Manifest) -> int:
    from .circuit import circuit_to_qasm, load_qasm, random_circuit, save_schedule, schedule
    lib = _load_library(args.library)
    if args.random is not None:
        circ = random_circuit(lib.device, args.random, seed=args.seed, n_qubits=args.qubits)
        if args.qasm_out:
            Path(args.qasm_out).write_text(circuit_to_qasm(circ))
            man.output("qasm", args.qasm_out)
    elif args.circuit:
        circ = load_qasm(args.circuit)
    else:
        raise UsageError("give --circuit or --random N")
    sched = schedule(circ, lib, args.policy)
    save_schedule(sched, args.out)
    man.output("schedule", args.out)
    man.results = {"events": len(sched.events), "total_dt": sched.total_duration}
    man.write(_manifest_path(args, args.out))
    print(f"{len(sched.events)} events, {sched.total_duration} dt -> {args.out}")
    return EXIT_OK


def cmd_simulate(args, man: Manifest) -> int:
    from .tracesim import add_noise, add_noise_all, simulate_per_channel, simulate_total, write_csv, write_traces
    lib = _load_library(args.library)
    sched = _load_truth(args, lib)
    if args.total:
        tr = simulate_total(sched, lib)
        if args.noise > 0:
            tr = add_noise(tr, args.noise, args.seed)
        traces = [tr]
    else:
        per = simulate_per_channel(sched, lib)
        if args.noise > 0:
            per = add_noise_all(per, args.noise, args.seed)
        traces = [per[c] for c in sorted(per)]
    write_traces(args.out, traces)
    man.output("trace", args.out)
    if args.csv:
        if not args.total:
            raise UsageError("--csv needs --total")
        write_csv(args.csv, traces[0])
        man.output("csv", args.csv)
    if args.plot:
        from .plotting import plot_traces
        plot_traces({t.scope_name: t for t in traces}, args.plot)
        man.figure(args.plot)
    man.results = {"traces": len(traces), "dt_count": traces[0].dt_count if traces else 0}
    man.write(_manifest_path(args, args.out))
    print(f"{len(traces)} trace(s) of {traces[0].dt_count} dt -> {args.out}")
    return EXIT_OK


def _finish_attack(args, man, lib, recovered, total=None) -> int:
    from .circuit import save_schedule
    save_schedule(recovered, args.out)
    man.output("schedule", args.out)
    if args.plot:
        from .plotting import plot_reconstruction
        truth = None
        if args.truth:
            from .circuit import load_schedule
            truth = load_schedule(args.truth, lib)
        plot_reconstruction(truth, recovered, lib, args.plot, total=total)
        man.figure(args.plot)
    man.write(_manifest_path(args, args.out))
    for ev in recovered.events:
        print(f"{ev.start:>8}  {ev.label.name}")
    return EXIT_OK


def cmd_attack_per_channel(args, man: Manifest) -> int:
    from .perchan import PerChannelConfig, attack_per_channel
    lib = _load_library(args.library)
    traces = _channel_traces(args.trace)
    cfg = PerChannelConfig(tau=args.tau, tau_cx=args.tau_cx, noise_sigma=args.noise_sigma,
                           refine=not args.no_refine)
    man.config["resolved_perchan"] = cfg.to_dict()
    t0 = time.perf_counter()
    res = attack_per_channel(traces, lib, cfg)
    man.timing["attack_s"] = time.perf_counter() - t0
    if args.detections:
        _write_json(args.detections, res.report())
        man.output("detections", args.detections)
    man.results = {"events": len(res.schedule.events), "score": res.score}
    return _finish_attack(args, man, lib, res.schedule)


def _build_model(args, lib):
    from .milp import build_attack_model
    trace = _total_trace(args.trace)
    model = build_attack_model(trace, lib, args.grid, args.prune_threshold, args.sample_stride,
                               args.unique_gates)
    return trace, model


def _write_lp(model, path, man: Manifest) -> None:
    from .lpfile import save_lp
    save_lp(model, path)
    meta = str(path) + ".meta.json"
    model.save_meta(meta)
    man.output("lp", path)
    man.output("lp_meta", meta)


def cmd_emit_lp(args, man: Manifest) -> int:
    lib = _load_library(args.library)
    _, model = _build_model(args, lib)
    _write_lp(model, args.out, man)
    man.results = {"model": model.stats()}
    man.write(_manifest_path(args, args.out))
    st = model.stats()
    print(f"{st['binaries']} binaries, {st['continuous']} continuous, {st['constraints']} constraints -> {args.out}")
    return EXIT_OK


def cmd_attack_total(args, man: Manifest) -> int:
    from .solver import SolveStatus, decode_schedule, solve
    lib = _load_library(args.library)
    t0 = time.perf_counter()
    trace, model = _build_model(args, lib)
    man.timing["build_s"] = time.perf_counter() - t0
    if args.emit_lp:
        _write_lp(model, args.emit_lp, man)
    t0 = time.perf_counter()
    sol = solve(model, args.backend, args.time_limit, args.solver_cmd, args.max_binaries)
    man.timing["solve_s"] = time.perf_counter() - t0
    summary = sol.summary()
    man.results = {"model": model.stats(), "solution": {k: summary[k] for k in ("status", "objective", "ambiguous")}}
    if args.solution:
        Path(args.solution).write_text(sol.to_text())
        man.output("solution", args.solution)
    print(f"status {sol.status.value}, objective {sol.objective:.6g}, nodes {sol.nodes}")
    if sol.ambiguous:
        print("note: another zero-objective schedule exists")
    if not sol.has_assignment or sol.status in (SolveStatus.INFEASIBLE,):
        man.write(_manifest_path(args, args.out))
        print(f"error: no schedule ({sol.status.value})", file=sys.stderr)
        return EXIT_DOMAIN
    return _finish_attack(args, man, lib, decode_schedule(model, sol), total=trace)


def _reported_objective(text: str) -> float | None:
    for line in text.splitlines():
        parts = line.lstrip("#").split()
        if line.startswith("#") and len(parts) == 2 and parts[0] == "objective":
            return float(parts[1])
    return None


def cmd_check_solution(args, man: Manifest) -> int:
    from .lpfile import load_lp
    from .solver import Solution, SolveStatus, check_solution, parse_solution_text
    model = load_lp(args.lp)
    text = Path(args.solution).read_text()
    assignment, _ = parse_solution_text(model, text)
    reported = _reported_objective(text)
    if reported is None:
        rep = check_solution(model, assignment, args.tol)
    else:
        rep = check_solution(model, Solution(assignment, reported, SolveStatus.FEASIBLE), args.tol)
    for line in rep.lines():
        print(line)
    man.results = {"ok": rep.ok, "violations": len(rep.violations), "objective": rep.objective}
    if args.out:
        _write_json(args.out, {"ok": rep.ok, "objective": rep.objective,
                               "reported_objective": rep.reported_objective,
                               "violations": [{"name": v.name, "kind": v.kind, "slack": v.slack}
                                              for v in rep.violations]})
        man.output("report", args.out)
        man.write(_manifest_path(args, args.out))
    return EXIT_OK if rep.ok else EXIT_DOMAIN


def cmd_verify(args, man: Manifest) -> int:
    from .circuit import load_schedule
    from .verify import compare
    lib = _load_library(args.library)
    truth = _load_truth(args, lib)
    recovered = load_schedule(args.recovered, lib)
    rep = compare(truth, recovered, lib)
    out_dir = Path(args.report) if args.report else None
    print(f"tier {rep.tier}; residual {rep.trace_residual:.6g}; "
          f"truth {rep.gate_counts['truth']}; recovered {rep.gate_counts['recovered']}")
    print("gate,qubits,start,recovered")
    for v in rep.verdicts:
        print(f"{v.gate},{'-'.join(map(str, v.qubits))},{v.start},{str(v.recovered).lower()}")
    man.results = {"tier": rep.tier, "trace_residual": rep.trace_residual}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "verify.json", rep.to_dict())
        man.output("report", out_dir / "verify.json")
        with open(out_dir / "verdicts.csv", "w") as fh:
            fh.write("gate,qubits,start,recovered\n")
            for v in rep.verdicts:
                fh.write(f"{v.gate},{'-'.join(map(str, v.qubits))},{v.start},{str(v.recovered).lower()}\n")
        man.output("verdicts", out_dir / "verdicts.csv")
        from .plotting import plot_reconstruction
        from .tracesim import simulate_total
        plot_reconstruction(truth, recovered, lib, out_dir / "reconstruction.png",
                            total=simulate_total(truth, lib), title=f"match tier: {rep.tier}")
        man.figure(out_dir / "reconstruction.png")
        man.write(_manifest_path(args, out_dir / "verify.json"))
    return EXIT_OK


def cmd_bench(args, man: Manifest) -> int:
    from .verify import BenchConfig, rows_to_csv, rows_to_table, run_benchmark
    lib = _load_library(args.library)
    if not Path(args.suite).is_dir():
        raise ValueError(f"suite directory {args.suite} does not exist")
    cfg = BenchConfig(attack=args.attack, policy=args.policy, noise_sigma=args.noise, seed=args.seed,
                      tau=args.tau, tau_cx=args.tau_cx, grid=args.grid, prune_threshold=args.prune_threshold,
                      sample_stride=args.sample_stride, backend=args.backend, time_limit=args.time_limit,
                      solver_cmd=args.solver_cmd, jobs=args.jobs)
    man.config["resolved_bench"] = cfg.to_dict()
    t0 = time.perf_counter()
    rows = run_benchmark(args.suite, lib, cfg)
    man.timing["bench_s"] = time.perf_counter() - t0
    man.timing["per_circuit_s"] = {r.name: r.solver_time_s for r in rows}
    print(rows_to_table(rows), end="")
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    # solver times vary run to run; the hashed CSV leaves them out unless asked
    csv_rows = rows if args.keep_times else [_untimed(r) for r in rows]
    (out / "bench.csv").write_text(rows_to_csv(csv_rows))
    (out / "bench.txt").write_text(rows_to_table(rows))
    man.output("csv", out / "bench.csv")
    man.figure(out / "bench.txt")
    if rows:
        from .plotting import plot_bench
        plot_bench(rows, out / "bench.png", title=f"{args.attack} attack")
        man.figure(out / "bench.png")
    tiers = [r.match_tier for r in rows]
    man.results = {"circuits": len(rows), "exact": tiers.count("exact"),
                   "errors": tiers.count("error")}
    man.write(_manifest_path(args, out / "bench.csv"))
    return EXIT_OK if tiers.count("error") == 0 else EXIT_DOMAIN


def _untimed(row):
    from dataclasses import replace
    return replace(row, solver_time_s=None)


# ------------------------------------------------------------------- parser

def _add_device_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--device", help="device JSON")
    g.add_argument("--topology", choices=["line", "tshape5", "hshape7"], help="built-in coupling map")
    p.add_argument("--qubits", type=int, default=None, help="qubit count for --topology line")


def _add_model_args(p):
    p.add_argument("--trace", required=True, help="trace file (total or per-channel records)")
    p.add_argument("--library", required=True)
    p.add_argument("--grid", type=int, default=None, help="start-time grid in dt (default: library alignment)")
    p.add_argument("--prune-threshold", type=float, default=0.5)
    p.add_argument("--sample-stride", type=int, default=1)
    p.add_argument("--unique-gates", action="store_true", help="each gate label at most once")


def build_parser() -> argparse.ArgumentParser:
    env_cmd = os.environ.get("QP_SOLVER_CMD")
    ap = argparse.ArgumentParser(prog="qpsca", description="Power side-channel reconstruction of pulse-level circuits.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
        p.add_argument("--manifest", default=None, help="manifest path (default: <output>.manifest.json)")
        p.set_defaults(func=func)
        return p

    p = add("gen-device", cmd_gen_device, "write a device description")
    _add_device_args(p)
    p.add_argument("--out", required=True)

    p = add("gen-library", cmd_gen_library, "synthesize a basis pulse library")
    _add_device_args(p)
    p.add_argument("--profile", choices=["default", "toy"], default="default")
    p.add_argument("--sq-duration", type=int, default=None)
    p.add_argument("--cx-duration", type=int, default=None)
    p.add_argument("--cx-jitter", type=int, default=None, help="CX duration jitter in alignment steps")
    p.add_argument("--alignment", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("schedule", cmd_schedule, "schedule a circuit into pulse events")
    p.add_argument("--library", required=True)
    p.add_argument("--circuit", help="QASM file")
    p.add_argument("--random", type=int, default=None, metavar="N", help="random circuit of N gates instead")
    p.add_argument("--qubits", type=int, default=None, help="qubits used by --random")
    p.add_argument("--qasm-out", default=None, help="write the random circuit as QASM")
    p.add_argument("--policy", choices=["asap", "alap"], default="asap")
    p.add_argument("--out", required=True)

    p = add("simulate", cmd_simulate, "simulate power traces")
    p.add_argument("--library", required=True)
    p.add_argument("--circuit")
    p.add_argument("--schedule")
    p.add_argument("--policy", choices=["asap", "alap"], default="asap")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--total", action="store_true", help="one summed trace")
    g.add_argument("--per-channel", action="store_true", help="one trace per channel (default)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma added to power samples")
    p.add_argument("--csv", default=None, help="also write the total trace as CSV")
    p.add_argument("--plot", default=None, help="figure path")
    p.add_argument("--out", required=True)

    p = add("attack-per-channel", cmd_attack_per_channel, "per-channel distance-matching attack")
    p.add_argument("--trace", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--tau-cx", type=float, default=0.05)
    p.add_argument("--noise-sigma", type=float, default=None, help="known noise sigma (default: estimated)")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--detections", default=None, help="write per-channel detections JSON")
    p.add_argument("--truth", default=None, help="truth schedule JSON for the figure")
    p.add_argument("--plot", default=None)
    p.add_argument("--out", required=True)

    p = add("attack-total", cmd_attack_total, "total-power MILP attack")
    _add_model_args(p)
    p.add_argument("--backend", choices=["bnb", "exhaustive", "external"], default="bnb")
    p.add_argument("--solver-cmd", default=env_cmd, help="external template with {lp} and {sol} (env QP_SOLVER_CMD)")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--max-binaries", type=int, default=25, help="cap for the exhaustive backend")
    p.add_argument("--emit-lp", default=None, help="also write the model as LP plus a meta sidecar")
    p.add_argument("--solution", default=None, help="write the solution as 'name value' lines")
    p.add_argument("--truth", default=None)
    p.add_argument("--plot", default=None)
    p.add_argument("--out", required=True)

    p = add("emit-lp", cmd_emit_lp, "build the MILP and write it in LP format")
    _add_model_args(p)
    p.add_argument("--out", required=True)

    p = add("check-solution", cmd_check_solution, "verify a solution file against an LP model")
    p.add_argument("--lp", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default=None, help="write the report as JSON")

    p = add("verify", cmd_verify, "compare a recovered schedule with the truth")
    p.add_argument("--library", required=True)
    p.add_argument("--circuit")
    p.add_argument("--schedule")
    p.add_argument("--policy", choices=["asap", "alap"], default="asap")
    p.add_argument("--recovered", required=True)
    p.add_argument("--report", default=None, help="directory for JSON, CSV and figure")

    p = add("bench", cmd_bench, "run an attack over a directory of QASM circuits")
    p.add_argument("--suite", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--attack", choices=["per-channel", "total"], default="per-channel")
    p.add_argument("--policy", choices=["asap", "alap"], default="asap")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--tau-cx", type=float, default=0.05)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--prune-threshold", type=float, default=0.5)
    p.add_argument("--sample-stride", type=int, default=1)
    p.add_argument("--backend", choices=["bnb", "exhaustive", "external"], default="bnb")
    p.add_argument("--solver-cmd", default=env_cmd)
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--keep-times", action="store_true", help="keep solver times in the CSV")
    p.add_argument("--report", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    man = Manifest(args.command, args)
    try:
        return args.func(args, man)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qpsca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"qpsca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
