"""Mixed-integer linear models: variables, expressions, linearization helpers
and the total-power reconstruction encoding."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .device import Label
from .pulselib import PulseLibrary, power_profile
from .tracesim import PowerTrace


class ModelError(ValueError):
    pass


class ModelBuildError(ModelError):
    pass


class VarKind(str, Enum):
    BINARY = "Binary"
    CONTINUOUS = "Continuous"


class Sense(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


@dataclass(frozen=True)
class VarRef:
    id: int
    name: str
    kind: VarKind
    lo: float = -math.inf
    hi: float = math.inf

    @property
    def is_binary(self) -> bool:
        return self.kind is VarKind.BINARY

    def __repr__(self):
        return f"VarRef({self.name})"


class LinExpr:
    """sum(coef * var) + constant. Terms keep insertion order until canonicalized."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms=(), constant: float = 0.0):
        self.terms: list[tuple[float, VarRef]] = [(float(c), v) for c, v in terms]
        self.constant = float(constant)

    @classmethod
    def of(cls, x) -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, VarRef):
            return cls([(1.0, x)])
        return cls((), float(x))

    def canonicalize(self) -> "LinExpr":
        """Merge duplicate vars, drop zero coefficients, order by var id."""
        acc: dict[int, list] = {}
        for c, v in self.terms:
            if v.id in acc:
                acc[v.id][0] += c
            else:
                acc[v.id] = [c, v]
        terms = [(c, v) for _, (c, v) in sorted(acc.items()) if c != 0.0]
        return LinExpr(terms, self.constant)

    def vars(self) -> list[VarRef]:
        return [v for _, v in self.terms]

    def value(self, assignment) -> float:
        return float(sum(c * assignment.get(v, 0.0) for c, v in self.terms) + self.constant)

    def __add__(self, other):
        other = LinExpr.of(other)
        return LinExpr(self.terms + other.terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr([(-c, v) for c, v in self.terms], -self.constant)

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, k):
        k = float(k)
        return LinExpr([(k * c, v) for c, v in self.terms], k * self.constant)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, LinExpr):
            return NotImplemented
        a, b = self.canonicalize(), other.canonicalize()
        return a.constant == b.constant and a.terms == b.terms

    def __repr__(self):
        body = " + ".join(f"{c:g}*{v.name}" for c, v in self.terms) or "0"
        return f"LinExpr({body} + {self.constant:g})"


@dataclass
class Constraint:
    name: str
    expr: LinExpr
    sense: Sense
    rhs: float

    def folded(self) -> tuple[LinExpr, float]:
        """Canonical expression without constant, and the adjusted right-hand side."""
        e = self.expr.canonicalize()
        return LinExpr(e.terms), self.rhs - e.constant

    def slack(self, assignment) -> float:
        """Signed slack; negative means violated by that amount."""
        lhs = self.expr.value(assignment)
        if self.sense is Sense.LE:
            return self.rhs - lhs
        if self.sense is Sense.GE:
            return lhs - self.rhs
        return -abs(lhs - self.rhs)


class MilpModel:
    """Minimization model. ``meta`` maps decision binaries to (label, start)."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.vars: list[VarRef] = []
        self._by_name: dict[str, VarRef] = {}
        self.constraints: list[Constraint] = []
        self._con_names: set[str] = set()
        self.objective = LinExpr()
        self.meta: dict[VarRef, tuple[Label, int]] = {}
        self.info: dict = {}

    # variables
    def add_var(self, name: str, kind: VarKind = VarKind.CONTINUOUS,
                lo: float = -math.inf, hi: float = math.inf) -> VarRef:
        if name in self._by_name:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind is VarKind.BINARY:
            lo, hi = 0.0, 1.0
        if lo > hi:
            raise ModelError(f"empty bounds for {name}: [{lo}, {hi}]")
        v = VarRef(len(self.vars), name, kind, float(lo), float(hi))
        self.vars.append(v)
        self._by_name[name] = v
        return v

    def binary(self, name: str) -> VarRef:
        return self.add_var(name, VarKind.BINARY)

    def continuous(self, name: str, lo: float = -math.inf, hi: float = math.inf) -> VarRef:
        return self.add_var(name, VarKind.CONTINUOUS, lo, hi)

    def var(self, name: str) -> VarRef:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def owns(self, v: VarRef) -> bool:
        return 0 <= v.id < len(self.vars) and self.vars[v.id] == v

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    @property
    def binaries(self) -> list[VarRef]:
        return [v for v in self.vars if v.is_binary]

    @property
    def continuous_vars(self) -> list[VarRef]:
        return [v for v in self.vars if not v.is_binary]

    # constraints
    def add_constraint(self, name: str, expr, sense: Sense | str, rhs: float) -> Constraint:
        if name in self._con_names:
            raise ModelError(f"duplicate constraint name {name!r}")
        expr = LinExpr.of(expr)
        for v in expr.vars():
            if not self.owns(v):
                raise ModelError(f"variable {v.name} does not belong to this model")
        con = Constraint(name, expr, Sense(sense), float(rhs))
        self.constraints.append(con)
        self._con_names.add(name)
        return con

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(f"unknown constraint {name!r}")

    def set_objective(self, expr) -> None:
        expr = LinExpr.of(expr)
        for v in expr.vars():
            if not self.owns(v):
                raise ModelError(f"objective references undeclared variable {v.name}")
        self.objective = expr

    def stats(self) -> dict:
        nb = sum(1 for v in self.vars if v.is_binary)
        return {"binaries": nb, "continuous": len(self.vars) - nb,
                "constraints": len(self.constraints)}

    def meta_json(self) -> dict:
        """Sidecar content: decision variable name -> gate, qubits, start."""
        return {v.name: {"gate": lab.gate.value, "qubits": list(lab.qubits), "start": t}
                for v, (lab, t) in sorted(self.meta.items(), key=lambda kv: kv[0].id)}

    def save_meta(self, path) -> None:
        body = {"name": self.name, "info": self.info, "vars": self.meta_json()}
        with open(path, "w") as fh:
            json.dump(body, fh, indent=1, sort_keys=True)
            fh.write("\n")


def attach_meta(model: MilpModel, library: PulseLibrary, sidecar: dict) -> None:
    """Restore ``meta`` and ``info`` on a model re-read from an LP file."""
    model.info.update(sidecar.get("info", {}))
    for name, rec in sidecar["vars"].items():
        model.meta[model.var(name)] = (library.label(rec["gate"], tuple(rec["qubits"])), int(rec["start"]))


# ------------------------------------------------------------- linearization

def add_abs(model: MilpModel, expr, name: str) -> VarRef:
    """Z >= |expr| through two constraints; the caller puts Z in the objective."""
    expr = LinExpr.of(expr)
    z = model.continuous(name, 0.0, math.inf)
    model.add_constraint(f"{name}_p", expr - z, Sense.LE, 0.0)
    model.add_constraint(f"{name}_n", -expr - z, Sense.LE, 0.0)
    return z


def _require_binary(*vs: VarRef) -> None:
    for v in vs:
        if not isinstance(v, VarRef) or not v.is_binary:
            raise ModelError(f"{v!r} is not a binary variable")


def encode_or(model: MilpModel, x1: VarRef, x2: VarRef, name: str | None = None) -> VarRef:
    _require_binary(x1, x2)
    name = name or f"or_{x1.name}_{x2.name}"
    y = model.binary(name)
    model.add_constraint(f"{name}_ge1", LinExpr([(1, y), (-1, x1)]), Sense.GE, 0)
    model.add_constraint(f"{name}_ge2", LinExpr([(1, y), (-1, x2)]), Sense.GE, 0)
    model.add_constraint(f"{name}_le", LinExpr([(1, y), (-1, x1), (-1, x2)]), Sense.LE, 0)
    return y


def add_pseudo_boolean(model: MilpModel, vs, sense: Sense | str, k: int,
                       name: str | None = None) -> Constraint:
    vs = list(vs)
    if not vs:
        raise ModelError("pseudo-boolean constraint over no variables")
    _require_binary(*vs)
    if int(k) != k or k < 0:
        raise ModelError(f"pseudo-boolean bound must be a non-negative integer, got {k}")
    name = name or f"pb_{len(model.constraints)}"
    return model.add_constraint(name, LinExpr([(1, v) for v in vs]), sense, int(k))


def add_bigm_disjunction(model: MilpModel, alternatives, name: str = "disj") -> list[VarRef]:
    """At least one of ``alternatives`` (pairs of expr, rhs meaning expr <= rhs) holds.

    The static M sums coefficient magnitudes, which bounds the expression when
    its variables are binary.
    """
    alternatives = list(alternatives)
    if not alternatives:
        raise ModelError("disjunction needs at least one alternative")
    ys = []
    for j, (expr, rhs) in enumerate(alternatives):
        expr = LinExpr.of(expr).canonicalize()
        big_m = sum(abs(c) for c, _ in expr.terms) + abs(expr.constant) + abs(rhs) + 1.0
        if not math.isfinite(big_m):
            raise ModelError("disjunction coefficients must be finite")
        y = model.binary(f"{name}_y{j}")
        # expr <= rhs + M (1 - y)
        model.add_constraint(f"{name}_{j}", expr + LinExpr([(big_m, y)]), Sense.LE, rhs + big_m)
        ys.append(y)
    add_pseudo_boolean(model, ys, Sense.GE, 1, name=f"{name}_any")
    return ys


# ------------------------------------------------------------ attack encoding

@dataclass
class _Candidate:
    var: VarRef
    label: Label
    start: int
    total: np.ndarray                      # total-power contribution by offset
    spans: dict = field(default_factory=dict)   # channel index -> duration


def build_attack_model(total_trace: PowerTrace, library: PulseLibrary, grid: int | None = None,
                       prune_threshold: float = 0.5, sample_stride: int = 1,
                       unique_gates: bool = False, name: str = "attack") -> MilpModel:
    """Binary start variables a_<label>_<t>, equality fits with free residuals,
    channel exclusivity and a sum-of-absolute-residuals objective."""
    v = np.asarray(total_trace.samples, dtype=float)
    n = len(v)
    grid = library.alignment if grid is None else int(grid)
    if grid <= 0 or sample_stride <= 0:
        raise ModelBuildError("grid and sample_stride must be positive")
    if grid % library.alignment:
        raise ModelBuildError(f"grid {grid} is not a multiple of the library alignment {library.alignment}")

    model = MilpModel(name)
    model.info.update(dict(dt_count=n, grid=grid, prune_threshold=prune_threshold,
                           sample_stride=sample_stride, unique_gates=unique_gates,
                           device=library.device.name))
    labels = library.labels
    chan_index = {c: i for i, c in enumerate(sorted({c for lab in labels for c in lab.channels}))}

    cands: list[_Candidate] = []
    for lab in labels:
        if lab.virtual:
            continue
        pulse = library.pulse(lab)
        profiles = {c: power_profile(pulse, c) for c in sorted(pulse.waveforms)}
        dur = max(len(p) for p in profiles.values())
        total = np.zeros(dur)
        for p in profiles.values():
            total[:len(p)] += p
        energy = total.sum()
        if energy <= 0:
            # identity and other silent pulses leave no trace to fit
            continue
        support = total > 0
        li = library.label_index(lab)
        model.info.setdefault("spans", {})[lab.name] = {c.name: len(p) for c, p in profiles.items()}
        for t in range(0, n - dur + 1, grid):
            if prune_threshold > 0 and v[t:t + dur][support].sum() < prune_threshold * energy:
                continue
            var = model.binary(f"a_{li}_{t}")
            model.meta[var] = (lab, t)
            spans = {chan_index[c]: len(profiles[c]) for c in lab.channels}
            cands.append(_Candidate(var, lab, t, total, spans))

    if not cands and prune_threshold > 0 and np.any(v > 0):
        raise ModelBuildError("no candidate pulse survives pruning although the trace carries energy; "
                              "lower prune_threshold or check the library")

    # fits and residuals
    cover: dict[int, list[tuple[float, VarRef]]] = {}
    for cd in cands:
        for k in np.flatnonzero(cd.total):
            cover.setdefault(cd.start + int(k), []).append((float(cd.total[k]), cd.var))
    objective = []
    for x in range(0, n, sample_stride):
        e = model.continuous(f"e_{x}")
        model.add_constraint(f"fit_{x}", LinExpr(cover.get(x, []) + [(1.0, e)]), Sense.EQ, float(v[x]))
        z = model.continuous(f"z_{x}", 0.0, math.inf)
        model.add_constraint(f"abs_p_{x}", LinExpr([(1.0, e), (-1.0, z)]), Sense.LE, 0.0)
        model.add_constraint(f"abs_n_{x}", LinExpr([(-1.0, e), (-1.0, z)]), Sense.LE, 0.0)
        objective.append((1.0, z))
    model.set_objective(LinExpr(objective))

    # channel exclusivity, skipping exact repeats of the previous step's set
    for ci in range(len(chan_index)):
        occupying = [cd for cd in cands if ci in cd.spans]
        prev: set = set()
        for x in range(n):
            here = [cd.var for cd in occupying if cd.start <= x < cd.start + cd.spans[ci]]
            ids = {u.id for u in here}
            if len(here) >= 2 and ids != prev:
                model.add_constraint(f"ch_{ci}_{x}", LinExpr([(1.0, u) for u in here]), Sense.LE, 1.0)
            prev = ids

    if unique_gates:
        by_label: dict[Label, list[VarRef]] = {}
        for cd in cands:
            by_label.setdefault(cd.label, []).append(cd.var)
        for lab in labels:
            if lab in by_label:
                add_pseudo_boolean(model, by_label[lab], Sense.LE, 1,
                                   name=f"uniq_{library.label_index(lab)}")
    return model


def truth_assignment(model: MilpModel, events, trace: PowerTrace | None = None) -> dict[VarRef, float]:
    """Assignment selecting exactly ``events`` (pairs of label, start); continuous
    variables are completed from the fit constraints when the trace is given."""
    want = {(lab, t) for lab, t in events}
    out = {v: (1.0 if model.meta.get(v) in want else 0.0) for v in model.binaries}
    missing = want - {model.meta[v] for v in model.binaries if out[v] == 1.0}
    if missing:
        raise ModelError(f"events without decision variables: {sorted((l.name, t) for l, t in missing)}")
    if trace is not None:
        for con in model.constraints:
            if not con.name.startswith("fit_"):
                continue
            x = int(con.name[4:])
            e = model.var(f"e_{x}")
            fitted = sum(c * out[u] for c, u in con.expr.terms if u.is_binary)
            out[e] = float(trace.samples[x] - fitted)
            out[model.var(f"z_{x}")] = abs(out[e])
    return out
