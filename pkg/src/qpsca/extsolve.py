"""Reference external solver: reads an LP file, solves it with scipy's HiGHS
MILP interface and writes a "name value" solution file.

    python -m qpsca.extsolve model.lp model.sol [--time-limit S]
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .lpfile import fmt_num, load_lp
from .milp import Sense


def solve_lp_file(lp_path: str, time_limit: float | None = None):
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    model = load_lp(lp_path)
    n = len(model.vars)
    c = np.zeros(n)
    obj = model.objective.canonicalize()
    for coef, v in obj.terms:
        c[v.id] += coef
    A = lil_matrix((len(model.constraints), n))
    lo = np.full(len(model.constraints), -np.inf)
    hi = np.full(len(model.constraints), np.inf)
    for k, con in enumerate(model.constraints):
        expr, rhs = con.folded()
        for coef, v in expr.terms:
            A[k, v.id] = coef
        if con.sense is not Sense.GE:
            hi[k] = rhs
        if con.sense is not Sense.LE:
            lo[k] = rhs
    integrality = np.array([1 if v.is_binary else 0 for v in model.vars])
    bounds = Bounds([v.lo for v in model.vars], [v.hi for v in model.vars])
    cons = [LinearConstraint(A.tocsr(), lo, hi)] if model.constraints else []
    options = {"time_limit": time_limit} if time_limit else {}
    res = milp(c, constraints=cons, integrality=integrality, bounds=bounds, options=options)
    return model, res, obj.constant


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m qpsca.extsolve", description=__doc__.splitlines()[0])
    ap.add_argument("lp")
    ap.add_argument("sol")
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args(argv)
    model, res, const = solve_lp_file(args.lp, args.time_limit)
    if res.x is None:
        print(f"no solution: {res.message}", file=sys.stderr)
        return 1
    status = "optimal" if res.status == 0 else "feasible"
    with open(args.sol, "w") as fh:
        fh.write(f"# status {status}\n")
        fh.write(f"# objective {fmt_num(res.fun + const)}\n")
        for v, x in zip(model.vars, res.x):
            if v.is_binary:
                x = float(round(x))
            elif not math.isfinite(x):
                x = 0.0
            fh.write(f"{v.name} {fmt_num(x)}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
