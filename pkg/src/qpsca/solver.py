"""Solvers for MilpModel: exhaustive oracle, branch-and-bound, external adapter,
plus the solution checker and schedule decoding."""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circuit import PulseEvent, PulseSchedule, ScheduleError, _event_sort_key
from .lpfile import fmt_num, write_lp
from .milp import MilpModel, Sense, VarRef

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9


class SolverError(RuntimeError):
    pass


class TooManyBinariesError(SolverError, ValueError):
    pass


class ExternalSolverError(SolverError):
    pass


class SolverExitError(ExternalSolverError):
    pass


class SolutionParseError(ExternalSolverError):
    pass


class InfeasibleSolutionError(ExternalSolverError):
    pass


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMEOUT = "Timeout"


@dataclass
class Solution:
    assignment: dict[VarRef, float]
    objective: float
    status: SolveStatus
    backend: str = ""
    nodes: int = 0
    elapsed: float = 0.0
    # None: not checked; True: a second zero-objective assignment exists
    ambiguous: bool | None = None
    alternative: dict[VarRef, float] | None = None

    def value(self, var) -> float:
        if isinstance(var, str):
            for v, x in self.assignment.items():
                if v.name == var:
                    return x
            return 0.0
        return self.assignment.get(var, 0.0)

    @property
    def has_assignment(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE) or bool(self.assignment)

    def to_text(self) -> str:
        lines = [f"# status {self.status.value.lower()}", f"# objective {fmt_num(self.objective)}"]
        for v in sorted(self.assignment, key=lambda u: u.id):
            lines.append(f"{v.name} {fmt_num(self.assignment[v])}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"status": self.status.value, "objective": self.objective, "backend": self.backend,
                "nodes": self.nodes, "ambiguous": self.ambiguous}


# ------------------------------------------------------------ compiled form

class _Compiled:
    """Dense matrices of a model plus a closed-form completion of continuous
    variables when the structure allows it (fits define residuals, epigraph
    variables take the largest of their lower bounds)."""

    def __init__(self, model: MilpModel):
        self.model = model
        self.bins = model.binaries
        self.conts = model.continuous_vars
        self.bpos = {v.id: i for i, v in enumerate(self.bins)}
        self.cpos = {v.id: i for i, v in enumerate(self.conts)}
        nb, nc, m = len(self.bins), len(self.conts), len(model.constraints)
        self.Ab = np.zeros((m, nb))
        self.Ac = np.zeros((m, nc))
        self.rhs = np.zeros(m)
        self.sense = []
        for k, con in enumerate(model.constraints):
            expr, rhs = con.folded()
            for c, v in expr.terms:
                if v.is_binary:
                    self.Ab[k, self.bpos[v.id]] += c
                else:
                    self.Ac[k, self.cpos[v.id]] += c
            self.rhs[k] = rhs
            self.sense.append(con.sense)
        self.sense_arr = np.array([{Sense.LE: 0, Sense.GE: 1, Sense.EQ: 2}[s] for s in self.sense], dtype=int)
        obj = model.objective.canonicalize()
        self.cb = np.zeros(nb)
        self.cc = np.zeros(nc)
        for c, v in obj.terms:
            if v.is_binary:
                self.cb[self.bpos[v.id]] += c
            else:
                self.cc[self.cpos[v.id]] += c
        self.const = obj.constant
        self.clo = np.array([v.lo for v in self.conts])
        self.chi = np.array([v.hi for v in self.conts])
        self.binary_rows = np.flatnonzero(~np.any(self.Ac != 0, axis=1)) if nc else np.arange(m)
        self.closed_form = self._classify()

    def _classify(self) -> bool:
        nc = len(self.conts)
        self.defined: dict[int, tuple[int, float]] = {}
        self.epi: dict[int, list[tuple[int, float]]] = {}
        self.idle: list[int] = []
        if nc == 0:
            return True
        occ = [np.flatnonzero(self.Ac[:, j]) for j in range(nc)]
        for k in range(len(self.sense)):
            if self.sense[k] is Sense.EQ:
                cols = np.flatnonzero(self.Ac[k])
                if len(cols) == 1 and cols[0] not in self.defined:
                    self.defined[int(cols[0])] = (k, float(self.Ac[k, cols[0]]))
        for j in range(nc):
            if j in self.defined:
                continue
            if len(occ[j]) == 0:
                self.idle.append(j)
                continue
            if self.cc[j] <= 0:
                return False
            rows = []
            for k in occ[j]:
                others = [i for i in np.flatnonzero(self.Ac[k]) if i != j]
                if any(i not in self.defined for i in others):
                    return False
                coef = float(self.Ac[k, j])
                s = self.sense[k]
                # a lower bound on variable j needs coef < 0 under <= or coef > 0 under >=
                if not ((s is Sense.LE and coef < 0) or (s is Sense.GE and coef > 0)):
                    return False
                rows.append((int(k), coef))
            self.epi[j] = rows
        self._def_j = np.array(list(self.defined), dtype=int)
        self._def_k = np.array([k for k, _ in self.defined.values()], dtype=int)
        self._def_c = np.array([c for _, c in self.defined.values()])
        flat = [(j, k, c) for j, rows in self.epi.items() for k, c in rows]
        self._epi_j = np.array([f[0] for f in flat], dtype=int)
        self._epi_k = np.array([f[1] for f in flat], dtype=int)
        self._epi_c = np.array([f[2] for f in flat])
        self._epi_vars = np.array(list(self.epi), dtype=int)
        self._idle = np.array(self.idle, dtype=int)
        # defined variables must be free for the completion to be exact
        for j in self.defined:
            if self.clo[j] > -math.inf or self.chi[j] < math.inf:
                return False
        # defined ones feed epigraphs only, never each other
        for j, (k, _) in self.defined.items():
            if len(np.flatnonzero(self.Ac[k])) != 1:
                return False
        return True

    def complete(self, x: np.ndarray, tol: float = FEAS_TOL):
        """Continuous values and objective for binary vector x, or None if infeasible."""
        nc = len(self.conts)
        y = np.zeros(nc)
        if nc:
            if self.closed_form:
                bx = self.Ab @ x
                y[self._def_j] = (self.rhs[self._def_k] - bx[self._def_k]) / self._def_c
                if len(self._epi_j):
                    # epigraph rows hold only defined variables besides their own
                    rest = bx[self._epi_k] + self.Ac[self._epi_k] @ y
                    y[self._epi_vars] = self.clo[self._epi_vars]
                    np.maximum.at(y, self._epi_j, (self.rhs[self._epi_k] - rest) / self._epi_c)
                if len(self._idle):
                    y[self._idle] = np.minimum(np.maximum(0.0, self.clo[self._idle]), self.chi[self._idle])
            else:
                y = self._lp_complete(x)
                if y is None:
                    return None
        if not self.feasible(x, y, tol):
            return None
        return y, float(self.cb @ x + self.cc @ y + self.const)

    def _lp_complete(self, x):
        from scipy.optimize import linprog
        r = self.rhs - self.Ab @ x
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        for k, s in enumerate(self.sense):
            if not self.Ac[k].any():
                continue
            if s is Sense.LE:
                A_ub.append(self.Ac[k]); b_ub.append(r[k])
            elif s is Sense.GE:
                A_ub.append(-self.Ac[k]); b_ub.append(-r[k])
            else:
                A_eq.append(self.Ac[k]); b_eq.append(r[k])
        bounds = [(None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
                  for lo, hi in zip(self.clo, self.chi)]
        res = linprog(self.cc, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                      A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                      bounds=bounds, method="highs")
        if res.status != 0:
            return None
        return np.asarray(res.x, dtype=float)

    def feasible(self, x, y, tol: float = FEAS_TOL) -> bool:
        lhs = self.Ab @ x + (self.Ac @ y if len(y) else 0.0)
        d = lhs - self.rhs
        scale = tol * (1.0 + np.abs(self.rhs))
        le = self.sense_arr == 0
        ge = self.sense_arr == 1
        eq = self.sense_arr == 2
        if np.any(d[le] > scale[le]) or np.any(-d[ge] > scale[ge]) or np.any(np.abs(d[eq]) > scale[eq]):
            return False
        if len(y) and (np.any(y < self.clo - tol) or np.any(y > self.chi + tol)):
            return False
        return True

    def assignment(self, x, y) -> dict[VarRef, float]:
        out = {v: float(x[i]) for i, v in enumerate(self.bins)}
        out.update({v: float(y[j]) for j, v in enumerate(self.conts)})
        return out


class _BinaryRows:
    """Incremental bookkeeping of binary-only constraints during a search."""

    def __init__(self, comp: _Compiled, tol: float = FEAS_TOL):
        rows = comp.binary_rows
        self.A = comp.Ab[rows]
        self.rhs = comp.rhs[rows]
        self.sense = comp.sense_arr[rows]
        self.tol = tol * (1.0 + np.abs(self.rhs))
        self.lhs = np.zeros(len(rows))
        self.minfree = np.minimum(self.A, 0).sum(axis=1)
        self.maxfree = np.maximum(self.A, 0).sum(axis=1)
        nb = self.A.shape[1]
        self.col_rows = [np.flatnonzero(self.A[:, i]) for i in range(nb)]
        self.col_vals = [self.A[self.col_rows[i], i] for i in range(nb)]
        # packing rows: <= with non-negative coefficients
        self.packing = (self.sense == 0) & np.all(self.A >= 0, axis=1)
        self.row_cols = [np.flatnonzero(self.A[r]) for r in range(len(rows))]

    def ok_all(self) -> bool:
        return self._ok(np.arange(len(self.rhs)))

    def _ok(self, r) -> bool:
        lo = self.lhs[r] + self.minfree[r]
        hi = self.lhs[r] + self.maxfree[r]
        s = self.sense[r]
        t = self.tol[r]
        rhs = self.rhs[r]
        bad = ((s != 1) & (lo > rhs + t)) | ((s != 0) & (hi < rhs - t))
        return not bad.any()

    def apply(self, i: int, val: int, sign: int = 1) -> bool:
        r, a = self.col_rows[i], self.col_vals[i]
        if len(r) == 0:
            return True
        self.minfree[r] -= sign * np.minimum(a, 0)
        self.maxfree[r] -= sign * np.maximum(a, 0)
        if val:
            self.lhs[r] += sign * a
        return sign < 0 or self._ok(r)


class _Budget(Exception):
    pass


# ------------------------------------------------------------------ checker

@dataclass
class Violation:
    name: str
    kind: str
    slack: float


@dataclass
class CheckReport:
    violations: list[Violation] = field(default_factory=list)
    objective: float = math.nan
    reported_objective: float = math.nan
    tol: float = 1e-6

    @property
    def objective_ok(self) -> bool:
        if math.isnan(self.reported_objective):
            return True
        return abs(self.objective - self.reported_objective) <= max(self.tol, 1e-9 * abs(self.objective))

    @property
    def ok(self) -> bool:
        return not self.violations and self.objective_ok

    def lines(self) -> list[str]:
        out = [f"objective {fmt_num(self.objective)}"]
        if not math.isnan(self.reported_objective):
            out[0] += f" (reported {fmt_num(self.reported_objective)})"
        for v in self.violations:
            out.append(f"violated {v.kind} {v.name} slack {v.slack:.3e}")
        out.append("OK" if self.ok else f"{len(self.violations)} violation(s)")
        return out


def check_solution(model: MilpModel, solution: Solution | dict, tol: float = 1e-6) -> CheckReport:
    """Re-verify every constraint, bound and integrality condition, and recompute the objective."""
    if isinstance(solution, Solution):
        assignment, reported = solution.assignment, solution.objective
    else:
        assignment, reported = solution, math.nan
    rep = CheckReport(tol=tol, reported_objective=reported)
    for v in model.vars:
        if v not in assignment:
            if v.is_binary:
                rep.violations.append(Violation(v.name, "missing", math.nan))
            continue
        x = assignment[v]
        if v.is_binary and min(abs(x), abs(1 - x)) > tol:
            rep.violations.append(Violation(v.name, "integrality", -min(abs(x), abs(1 - x))))
        if x < v.lo - tol:
            rep.violations.append(Violation(v.name, "bound", x - v.lo))
        if x > v.hi + tol:
            rep.violations.append(Violation(v.name, "bound", v.hi - x))
    for con in model.constraints:
        s = con.slack(assignment)
        if s < -tol:
            rep.violations.append(Violation(con.name, "constraint", s))
    rep.objective = model.objective.value(assignment)
    return rep


# --------------------------------------------------------------- exhaustive

def solve_exhaustive(model: MilpModel, max_binaries: int = 25) -> Solution:
    """Enumerate binary assignments (lexicographic, 0 before 1) with sound
    feasibility pruning; continuous variables are completed per leaf."""
    t0 = time.perf_counter()
    comp = _Compiled(model)
    nb = len(comp.bins)
    if nb > max_binaries:
        raise TooManyBinariesError(f"{nb} binaries exceed the exhaustive limit of {max_binaries}")
    rows = _BinaryRows(comp)
    x = np.zeros(nb)
    best = [math.inf, None, None]
    leaves = [0]

    def rec(i: int):
        if i == nb:
            leaves[0] += 1
            res = comp.complete(x)
            if res is not None and res[1] < best[0] - 1e-12:
                best[0], best[1], best[2] = res[1], x.copy(), res[0]
            return
        for val in (0, 1):
            x[i] = val
            if rows.apply(i, val):
                rec(i + 1)
            rows.apply(i, val, sign=-1)
        x[i] = 0

    rec(0)
    el = time.perf_counter() - t0
    if best[1] is None:
        return Solution({}, math.inf, SolveStatus.INFEASIBLE, "exhaustive", leaves[0], el)
    return Solution(comp.assignment(best[1], best[2]), best[0], SolveStatus.OPTIMAL, "exhaustive",
                    leaves[0], el)


# ------------------------------------------------------------ branch & bound

class _AttackStructure:
    """Residual view of an attack model: e_k = e0_k - sum_j q_kj x_j, and the
    objective charges w_k |e_k|. Built only when the model has that shape."""

    def __init__(self, comp: _Compiled):
        self.ok = False
        if not comp.closed_form:
            return
        weight = {}
        for j, rows in comp.epi.items():
            if len(rows) != 2:
                return
            feeds = set()
            slopes = []
            for k, coef in rows:
                if comp.Ab[k].any() or comp.rhs[k] != 0:
                    return
                cols = [i for i in np.flatnonzero(comp.Ac[k]) if i != j]
                if len(cols) != 1:
                    return
                feeds.add(cols[0])
                # z >= -(a/coef) e  for  a e + coef z (<= or >=) 0
                slopes.append(-comp.Ac[k, cols[0]] / coef)
            if len(feeds) != 1 or not math.isclose(slopes[0], -slopes[1]) or slopes[0] == 0:
                return
            if comp.clo[j] > 0:
                return
            e = feeds.pop()
            if e not in comp.defined or e in weight:
                return
            weight[e] = comp.cc[j] * abs(slopes[0])
        for e in comp.defined:
            if comp.cc[e] != 0:
                return
        for j in comp.idle:
            if comp.cc[j] != 0:
                return
        # residual rows
        keys = sorted(comp.defined, key=lambda e: comp.defined[e][0])
        self.rows = [comp.defined[e][0] for e in keys]
        K = len(keys)
        self.e0 = np.array([comp.rhs[k] / comp.defined[e][1] for e, k in zip(keys, self.rows)])
        self.w = np.array([weight.get(e, 0.0) for e in keys])
        Q = np.array([comp.Ab[k] / comp.defined[e][1] for e, k in zip(keys, self.rows)]).reshape(K, len(comp.bins))
        self.supp = [np.flatnonzero(Q[:, i]) for i in range(len(comp.bins))]
        self.qv = [Q[self.supp[i], i] for i in range(len(comp.bins))]
        self.K = K
        self.ok = True


def _dist0(lo, hi):
    return np.where(lo > 0, lo, np.where(hi < 0, -hi, 0.0))


class _Search:
    def __init__(self, comp: _Compiled, st: _AttackStructure, time_limit: float | None,
                 node_limit: int | None):
        self.comp, self.st = comp, st
        nb = len(comp.bins)
        self.rows = _BinaryRows(comp)
        self.val = np.full(nb, -1, dtype=int)
        self.ep = st.e0.copy()
        self.posfree = np.zeros(st.K)
        self.negfree = np.zeros(st.K)
        for i in range(nb):
            np.add.at(self.posfree, st.supp[i], np.maximum(st.qv[i], 0))
            np.add.at(self.negfree, st.supp[i], np.minimum(st.qv[i], 0))
        self.contrib = st.w * _dist0(self.ep - self.posfree, self.ep - self.negfree)
        self.lb_res = float(self.contrib.sum())
        self.obj_fixed = comp.const
        self.obj_free = float(np.minimum(comp.cb, 0).sum())
        self.trail: list[int] = []
        energy = np.array([float(st.w[st.supp[i]] @ np.abs(st.qv[i])) if len(st.supp[i]) else 0.0
                           for i in range(nb)])
        first = np.array([st.supp[i].min() if len(st.supp[i]) else st.K for i in range(nb)])
        self.order = sorted(range(nb), key=lambda i: (first[i], -energy[i], i))
        self.nodes = 0
        self.t0 = time.perf_counter()
        self.deadline = None if time_limit is None else self.t0 + time_limit
        self.node_limit = node_limit

    # state changes
    def _touch(self, i: int, val: int, sign: int):
        st = self.st
        s, q = st.supp[i], st.qv[i]
        if len(s):
            self.posfree[s] -= sign * np.maximum(q, 0)
            self.negfree[s] -= sign * np.minimum(q, 0)
            if val:
                self.ep[s] -= sign * q
            new = st.w[s] * _dist0(self.ep[s] - self.posfree[s], self.ep[s] - self.negfree[s])
            self.lb_res += float(new.sum() - self.contrib[s].sum())
            self.contrib[s] = new
        c = self.comp.cb[i]
        self.obj_fixed += sign * c * val
        self.obj_free -= sign * min(c, 0.0)

    def fix(self, i: int, val: int) -> bool:
        self.val[i] = val
        self.trail.append(i)
        self._touch(i, val, +1)
        if not self.rows.apply(i, val):
            return False
        if val:
            return self._propagate(i)
        return True

    def _propagate(self, i: int) -> bool:
        rows = self.rows
        for r in rows.col_rows[i]:
            if not rows.packing[r]:
                continue
            room = rows.rhs[r] - rows.lhs[r] + rows.tol[r]
            for u in rows.row_cols[r]:
                if self.val[u] == -1 and rows.A[r, u] > room:
                    if not self.fix(int(u), 0):
                        return False
        return True

    def undo_to(self, mark: int):
        while len(self.trail) > mark:
            i = self.trail.pop()
            v = int(self.val[i])
            self.rows.apply(i, v, sign=-1)
            self._touch(i, v, -1)
            self.val[i] = -1

    def bound(self) -> float:
        return self.obj_fixed + self.obj_free + self.lb_res

    def gain(self, i: int) -> float:
        """Change of the residual cost if i is switched on now (ignoring free vars)."""
        st = self.st
        s, q = st.supp[i], st.qv[i]
        if not len(s):
            return self.comp.cb[i]
        e = self.ep[s]
        return float(st.w[s] @ (np.abs(e - q) - np.abs(e))) + self.comp.cb[i]

    def leaf_objective(self) -> float:
        return self.obj_fixed + float(self.st.w @ np.abs(self.ep))

    def x(self) -> np.ndarray:
        return np.maximum(self.val, 0).astype(float)

    def tick(self):
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise _Budget()
        if self.deadline is not None and (self.nodes & 255) == 0 and time.perf_counter() > self.deadline:
            raise _Budget()

    # searches
    def greedy(self):
        mark = len(self.trail)
        ok = True
        for i in self.order:
            if self.val[i] != -1:
                continue
            if self.gain(i) < 0:
                m = len(self.trail)
                if self.fix(i, 1):
                    continue
                self.undo_to(m)
            if not self.fix(i, 0):
                ok = False
                break
        res = None
        if ok:
            x = self.x()
            res = self.comp.complete(x)
            if res is not None:
                res = (res[1], x, res[0])
        self.undo_to(mark)
        return res

    def dfs(self, accept, prune_above):
        """Depth-first search; ``accept(obj, x)`` decides about leaves and may
        stop the search by returning True; nodes whose bound exceeds
        ``prune_above()`` are cut."""
        order = self.order
        n = len(order)

        def rec(p: int) -> bool:
            while p < n and self.val[order[p]] != -1:
                p += 1
            self.tick()
            if self.bound() > prune_above():
                return False
            if p == n:
                return accept(self.leaf_objective(), self.x())
            i = order[p]
            first = 1 if self.gain(i) < 0 else 0
            for val in (first, 1 - first):
                mark = len(self.trail)
                if self.fix(i, val) and rec(p + 1):
                    self.undo_to(mark)
                    return True
                self.undo_to(mark)
            return False

        rec(0)


def solve_bnb(model: MilpModel, time_limit: float | None = 60.0, node_limit: int | None = None,
              check_ambiguity: bool = True, zero_tol: float = 1e-6) -> Solution:
    """Depth-first branch-and-bound for attack-shaped models.

    Binaries are visited by first residual row they touch (start time), then by
    descending energy. The bound charges every residual the distance from zero
    to the interval it can still reach given the free variables, which is
    admissible because each variable moves its residuals monotonically.
    Other model shapes fall back to feasibility-pruned enumeration.
    """
    t0 = time.perf_counter()
    comp = _Compiled(model)
    st = _AttackStructure(comp)
    if not st.ok:
        log.info("model is not attack-shaped; enumerating")
        sol = solve_exhaustive(model, max_binaries=len(comp.bins))
        sol.backend = "bnb"
        return sol
    search = _Search(comp, st, time_limit, node_limit)
    if not search.rows.ok_all() and not len(comp.bins):
        return Solution({}, math.inf, SolveStatus.INFEASIBLE, "bnb", 0, time.perf_counter() - t0)

    best = [math.inf, None, None]
    g = search.greedy()
    if g is not None:
        best[:] = list(g)

    def accept(obj, x):
        if obj < best[0] - 1e-12:
            res = comp.complete(x)
            if res is not None and res[1] < best[0] - 1e-12:
                best[0], best[1], best[2] = res[1], x.copy(), res[0]
        return False

    status = SolveStatus.OPTIMAL
    try:
        search.dfs(accept, lambda: best[0] - 1e-10)
    except _Budget:
        status = SolveStatus.TIMEOUT
        search.undo_to(0)
    if best[1] is None:
        st_ = SolveStatus.INFEASIBLE if status is SolveStatus.OPTIMAL else SolveStatus.TIMEOUT
        return Solution({}, math.inf, st_, "bnb", search.nodes, time.perf_counter() - t0)
    sol = Solution(comp.assignment(best[1], best[2]), best[0], status, "bnb", search.nodes)

    if check_ambiguity and status is SolveStatus.OPTIMAL and best[0] <= zero_tol:
        found = best[1]
        alt = []

        def accept_alt(obj, x):
            if obj <= zero_tol and not np.array_equal(x, found):
                res = comp.complete(x)
                if res is not None and res[1] <= zero_tol:
                    alt.append((x.copy(), res[0]))
                    return True
            return False

        search.deadline = None if time_limit is None else time.perf_counter() + time_limit
        try:
            search.dfs(accept_alt, lambda: zero_tol)
            sol.ambiguous = bool(alt)
            if alt:
                sol.alternative = comp.assignment(*alt[0])
        except _Budget:
            search.undo_to(0)
            sol.ambiguous = None
    sol.elapsed = time.perf_counter() - t0
    sol.nodes = search.nodes
    return sol


# ----------------------------------------------------------------- external

def parse_solution_text(model: MilpModel, text: str) -> tuple[dict[VarRef, float], str | None]:
    """Lines "name value"; '#' starts a comment; "# status <word>" is recorded."""
    values: dict[VarRef, float] = {}
    status = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "status":
                status = parts[1].lower()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionParseError(f"line {lineno}: expected 'name value', got {line!r}")
        name, val = parts
        if not model.has_var(name):
            raise SolutionParseError(f"unknown variable {name!r} on line {lineno}")
        try:
            x = float(val)
        except ValueError:
            raise SolutionParseError(f"line {lineno}: bad value {val!r}") from None
        values[model.var(name)] = x
    full = {v: values.get(v, 0.0) for v in model.vars}
    return full, status


def solve_external(model: MilpModel, command_template: str, timeout: float | None = None,
                   tol: float = 1e-6, workdir=None) -> Solution:
    """Run an external MILP solver through LP and "name value" files and
    re-verify whatever it returns."""
    if "{lp}" not in command_template or "{sol}" not in command_template:
        raise ValueError("solver command template needs {lp} and {sol} placeholders")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        lp = os.path.join(tmp, "model.lp")
        sol = os.path.join(tmp, "model.sol")
        with open(lp, "w") as fh:
            fh.write(write_lp(model))
        cmd = command_template.format(lp=shlex.quote(lp), sol=shlex.quote(sol))
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return Solution({}, math.inf, SolveStatus.TIMEOUT, "external", 0, time.perf_counter() - t0)
        except OSError as exc:
            raise SolverExitError(f"cannot run solver command: {exc}") from exc
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-3:]
            raise SolverExitError(f"solver exited with status {proc.returncode}: {' | '.join(tail)}")
        try:
            with open(sol) as fh:
                text = fh.read()
        except OSError as exc:
            raise SolutionParseError(f"solver wrote no solution file: {exc}") from exc
    assignment, status = parse_solution_text(model, text)
    report = check_solution(model, assignment, tol)
    if report.violations:
        worst = ", ".join(f"{v.name} ({v.slack:.3g})" for v in report.violations[:5])
        raise InfeasibleSolutionError(f"infeasible solution returned: {worst}")
    st = SolveStatus.OPTIMAL if status == "optimal" else SolveStatus.FEASIBLE
    return Solution(assignment, report.objective, st, "external", 0, time.perf_counter() - t0)


def solve(model: MilpModel, backend: str = "bnb", time_limit: float | None = 60.0,
          solver_cmd: str | None = None, max_binaries: int = 25) -> Solution:
    if backend == "exhaustive":
        return solve_exhaustive(model, max_binaries)
    if backend == "bnb":
        return solve_bnb(model, time_limit)
    if backend == "external":
        if not solver_cmd:
            raise ValueError("external backend needs a solver command template")
        return solve_external(model, solver_cmd, time_limit)
    raise ValueError(f"unknown backend {backend!r}")


# ----------------------------------------------------------------- decoding

def decode_schedule(model: MilpModel, solution: Solution) -> PulseSchedule:
    """Selected decision variables as a pulse schedule; checks channel exclusivity."""
    events = [PulseEvent(lab, t) for v, (lab, t) in model.meta.items() if solution.value(v) > 0.5]
    events.sort(key=_event_sort_key)
    spans = model.info.get("spans", {})
    busy: dict[str, list[tuple[int, int, str]]] = {}
    for ev in events:
        for cname, dur in spans.get(ev.label.name, {}).items():
            for s, e, other in busy.get(cname, []):
                if s < ev.start + dur and ev.start < e:
                    raise ScheduleError(f"decoded {ev.label.name}@{ev.start} overlaps {other} on {cname}")
            busy.setdefault(cname, []).append((ev.start, ev.start + dur, f"{ev.label.name}@{ev.start}"))
    n = int(model.info.get("dt_count", max((e.start for e in events), default=0)))
    return PulseSchedule(events, n)
