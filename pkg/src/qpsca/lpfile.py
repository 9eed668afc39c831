"""LP-format serialization (the subset our models need) and its parser."""

from __future__ import annotations

import math
import re

from .milp import LinExpr, MilpModel, ModelError, Sense

WRAP = 250


class LpParseError(ModelError):
    pass


def fmt_num(x: float) -> str:
    """Shortest round-trip decimal; integral values without a fraction."""
    x = float(x)
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _fmt_expr(expr: LinExpr) -> str:
    parts = []
    for c, v in expr.terms:
        mag = "" if abs(c) == 1 else fmt_num(abs(c)) + " "
        if not parts:
            parts.append(("-" if c < 0 else "") + mag + v.name)
        else:
            parts.append(("- " if c < 0 else "+ ") + mag + v.name)
    if not parts:
        return "0"
    return " ".join(parts)


def write_lp(model: MilpModel) -> str:
    out = ["Minimize"]
    obj = model.objective.canonicalize()
    line = " obj: " + _fmt_expr(obj)
    if obj.constant:
        line += (" - " if obj.constant < 0 else " + ") + fmt_num(abs(obj.constant))
    out.append(line)
    out.append("Subject To")
    for con in model.constraints:
        expr, rhs = con.folded()
        out.append(f" {con.name}: {_fmt_expr(expr)} {con.sense.value} {fmt_num(rhs)}")
    out.append("Bounds")
    for v in model.vars:
        if v.is_binary:
            continue
        if math.isinf(v.lo) and v.lo < 0 and math.isinf(v.hi) and v.hi > 0:
            out.append(f" {v.name} free")
        else:
            out.append(f" {fmt_num(v.lo)} <= {v.name} <= {fmt_num(v.hi)}")
    out.append("Binary")
    row = ""
    for v in model.vars:
        if not v.is_binary:
            continue
        piece = " " + v.name
        if row and len(row) + len(piece) > WRAP:
            out.append(row)
            row = ""
        row += piece
    if row:
        out.append(row)
    out.append("End")
    return "\n".join(out) + "\n"


def save_lp(model: MilpModel, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(write_lp(model))


# ------------------------------------------------------------------ parsing

_NUM = r"[+-]?(?:inf|infinity|[0-9.]+(?:[eE][+-]?[0-9]+)?)"
_NAME = r"[A-Za-z_][A-Za-z0-9_.\[\]]*"
_TOKEN = re.compile(r"\s*([+-]|[0-9.]+(?:[eE][+-]?[0-9]+)?|" + _NAME + r"|\S)")


def _parse_num(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(s)
    except ValueError:
        raise LpParseError(f"bad number {s!r}") from None


def _parse_expr(text: str) -> tuple[list[tuple[float, str]], float]:
    """Terms as (coef, name) plus any bare constant."""
    terms: list[tuple[float, str]] = []
    constant = 0.0
    sign, coef = 1.0, None
    for tok in _TOKEN.findall(text):
        if tok in ("+", "-"):
            if coef is not None:
                constant += sign * coef
                sign, coef = 1.0, None
            sign = -sign if tok == "-" else sign
        elif re.fullmatch(r"[0-9.]+(?:[eE][+-]?[0-9]+)?", tok):
            if coef is not None:
                raise LpParseError(f"two numbers in a row in {text!r}")
            coef = float(tok)
        elif re.fullmatch(_NAME, tok):
            terms.append((sign * (1.0 if coef is None else coef), tok))
            sign, coef = 1.0, None
        else:
            raise LpParseError(f"unexpected token {tok!r} in {text!r}")
    if coef is not None:
        constant += sign * coef
    if len(terms) == 0 and constant == 0 and text.strip() not in ("0", ""):
        raise LpParseError(f"empty expression {text!r}")
    return terms, constant


def read_lp(text: str, name: str = "model") -> MilpModel:
    """Parse the subset produced by write_lp. Variables are created in order of
    first appearance in Bounds/Binary declarations, then in expressions."""
    section = None
    obj_text = None
    cons: list[tuple[str, str, str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    declared: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimise", "min"):
            section = "obj"
            continue
        if low in ("subject to", "st", "s.t."):
            section = "st"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binary", "binaries", "bin"):
            section = "bin"
            continue
        if low == "end":
            section = "end"
            continue
        if section == "obj":
            obj_text = (obj_text + " " if obj_text else "") + line.split(":", 1)[-1]
        elif section == "st":
            m = re.fullmatch(r"(" + _NAME + r")\s*:\s*(.*?)\s*(<=|>=|=)\s*(" + _NUM + r")", line)
            if not m:
                raise LpParseError(f"line {lineno}: malformed constraint {line!r}")
            cons.append((m.group(1), m.group(2), m.group(3), _parse_num(m.group(4))))
        elif section == "bounds":
            m = re.fullmatch(r"(" + _NAME + r")\s+free", line)
            if m:
                bounds[m.group(1)] = (-math.inf, math.inf)
                declared.append(m.group(1))
                continue
            m = re.fullmatch(r"(" + _NUM + r")\s*<=\s*(" + _NAME + r")\s*<=\s*(" + _NUM + r")", line)
            if not m:
                raise LpParseError(f"line {lineno}: malformed bound {line!r}")
            bounds[m.group(2)] = (_parse_num(m.group(1)), _parse_num(m.group(3)))
            declared.append(m.group(2))
        elif section == "bin":
            for tok in line.split():
                binaries.append(tok)
                declared.append(tok)
        elif section == "end":
            raise LpParseError(f"line {lineno}: content after End")
        else:
            raise LpParseError(f"line {lineno}: content outside any section")
    if obj_text is None:
        raise LpParseError("missing objective")

    model = MilpModel(name)
    bin_set = set(binaries)

    def get(vname: str):
        if not model.has_var(vname):
            if vname in bin_set:
                return model.binary(vname)
            lo, hi = bounds.get(vname, (0.0, math.inf))
            return model.continuous(vname, lo, hi)
        return model.var(vname)

    # ids follow the declaration sections; stray names get LP default bounds
    for vname in declared:
        get(vname)
    obj_terms, obj_const = _parse_expr(obj_text)
    model.set_objective(LinExpr([(c, get(v)) for c, v in obj_terms], obj_const))
    for cname, body, sense, rhs in cons:
        terms, const = _parse_expr(body)
        model.add_constraint(cname, LinExpr([(c, get(v)) for c, v in terms]), Sense(sense), rhs - const)
    return model


def load_lp(path) -> MilpModel:
    with open(path) as fh:
        return read_lp(fh.read())


def canonical_form(model: MilpModel) -> dict:
    """Id-free description used to compare models across a write/read cycle."""
    def expr(e: LinExpr):
        e = e.canonicalize()
        return (tuple(sorted((v.name, c) for c, v in e.terms)), e.constant)
    out = {
        "vars": sorted((v.name, v.kind.value, v.lo, v.hi) for v in model.vars),
        "objective": expr(model.objective),
        "constraints": [],
    }
    for con in model.constraints:
        e, rhs = con.folded()
        out["constraints"].append((con.name, expr(e)[0], con.sense.value, rhs))
    return out
