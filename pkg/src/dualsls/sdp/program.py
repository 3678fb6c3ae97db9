"""Conic program data model: variables, equalities, PSD constraints, quadratic objective."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .expr import MatExpr, Variable

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
INACCURATE = "inaccurate"

# residual contract for status == optimal
EQ_RESIDUAL_LIMIT = 1e-6
PSD_EIG_LIMIT = -1e-6


@dataclass
class Tolerances:
    feas: float = 1e-7
    gap: float = 1e-7
    max_iters: int = 500


@dataclass
class Solution:
    status: str
    values: dict
    objective_value: float
    eq_residual: float
    min_psd_eig: float
    info: dict = field(default_factory=dict)


class ConicProgram:
    """Matrix/scalar variables, affine equalities, PSD cone constraints,
    and a convex quadratic objective (sum of squared affine norms + affine term)."""

    def __init__(self):
        self.variables: list[Variable] = []
        self.equalities: list[MatExpr] = []       # each expr == 0
        self.psd_constraints: list[MatExpr] = []  # each expr >> 0
        self.quad_terms: list[MatExpr] = []       # column vectors, sum of ||.||^2
        self.linear_term: MatExpr = MatExpr.constant(np.zeros((1, 1)))

    # ---- building -------------------------------------------------------
    def add_variable(self, name: str, shape, symmetric: bool = False) -> MatExpr:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"variable '{name}' already declared")
        if isinstance(shape, int):
            shape = (shape, shape)
        var = Variable(name, tuple(shape), symmetric)
        self.variables.append(var)
        return MatExpr.from_variable(var)

    def add_scalar(self, name: str) -> MatExpr:
        return self.add_variable(name, (1, 1))

    def add_equality(self, expr: MatExpr):
        self.equalities.append(expr)

    def add_psd(self, expr: MatExpr):
        self.psd_constraints.append(expr)

    def add_quad_term(self, expr: MatExpr):
        """Add ||vec(expr)||^2 to the objective."""
        self.quad_terms.append(expr.ravel())

    def set_linear_term(self, expr: MatExpr):
        if expr.shape != (1, 1):
            raise ValueError("linear objective term must be scalar")
        self.linear_term = expr

    # ---- inspection -------------------------------------------------------
    def objective_value(self, assignment: dict) -> float:
        val = self.linear_term.value(assignment).item()
        for term in self.quad_terms:
            v = term.value(assignment)
            val += float(v.ravel() @ v.ravel())
        return val

    def residuals(self, assignment: dict) -> tuple[float, float]:
        eq_res = 0.0
        for eq in self.equalities:
            v = eq.value(assignment)
            eq_res = max(eq_res, float(np.abs(v).max(initial=0.0)))
        min_eig = np.inf
        for psd in self.psd_constraints:
            M = psd.value(assignment)
            M = 0.5 * (M + M.T)
            min_eig = min(min_eig, float(np.linalg.eigvalsh(M).min()))
        if not self.psd_constraints:
            min_eig = 0.0
        return eq_res, min_eig

    # ---- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        def expr_dict(e: MatExpr):
            return {
                "shape": list(e.shape),
                "const": e.const.tolist(),
                "coeffs": {n: c.tolist() for n, c in sorted(e.coeffs.items())},
            }

        return {
            "variables": [
                {"name": v.name, "shape": list(v.shape), "symmetric": v.symmetric}
                for v in self.variables
            ],
            "equalities": [expr_dict(e) for e in self.equalities],
            "psd_constraints": [expr_dict(e) for e in self.psd_constraints],
            "quad_terms": [expr_dict(e) for e in self.quad_terms],
            "linear_term": expr_dict(self.linear_term),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConicProgram":
        prog = cls()
        for v in data["variables"]:
            prog.add_variable(v["name"], tuple(v["shape"]), v["symmetric"])
        vars_by_name = {v.name: v for v in prog.variables}

        def load_expr(d):
            coeffs = {n: np.array(c, dtype=float) for n, c in d["coeffs"].items()}
            variables = {n: vars_by_name[n] for n in coeffs if n in vars_by_name}
            return MatExpr(tuple(d["shape"]), np.array(d["const"], dtype=float),
                           coeffs, variables)

        prog.equalities = [load_expr(e) for e in data["equalities"]]
        prog.psd_constraints = [load_expr(e) for e in data["psd_constraints"]]
        prog.quad_terms = [load_expr(e) for e in data["quad_terms"]]
        prog.linear_term = load_expr(data["linear_term"])
        return prog

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "ConicProgram":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump_text(self, path):
        """Human-readable debug dump: variable table and constraint list."""
        lines = ["# conic program", "## variables"]
        for v in self.variables:
            kind = "symmetric" if v.symmetric else "general"
            lines.append(f"  {v.name}: {v.shape[0]}x{v.shape[1]} {kind}")
        lines.append("## objective")
        lines.append(f"  {len(self.quad_terms)} squared-norm terms, "
                     f"linear term over {sorted(self.linear_term.coeffs) or ['const']}")
        lines.append("## equalities")
        for i, e in enumerate(self.equalities):
            lines.append(f"  eq[{i}]: {e.shape[0]}x{e.shape[1]} over {sorted(e.coeffs)}")
        lines.append("## psd constraints")
        for i, e in enumerate(self.psd_constraints):
            lines.append(f"  psd[{i}]: {e.shape[0]}x{e.shape[1]} over {sorted(e.coeffs)}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def validate(program: ConicProgram) -> list[str]:
    """Diagnostics for an ill-formed program; empty list iff well-formed."""
    diags = []
    declared = {v.name for v in program.variables}
    seen = set()
    for v in program.variables:
        if v.name in seen:
            diags.append(f"variable '{v.name}' declared more than once")
        seen.add(v.name)

    def check_expr(e: MatExpr, where: str):
        for name in e.coeffs:
            if name not in declared:
                diags.append(f"undeclared variable '{name}' in {where}")
            elif name in e.vars and e.vars[name] != next(
                    v for v in program.variables if v.name == name):
                diags.append(f"variable '{name}' in {where} conflicts with declaration")

    for i, e in enumerate(program.equalities):
        check_expr(e, f"equalities[{i}]")
    for i, e in enumerate(program.psd_constraints):
        check_expr(e, f"psd_constraints[{i}]")
        if e.shape[0] != e.shape[1]:
            diags.append(f"psd_constraints[{i}] is not square: shape {e.shape}")
        elif not e.is_symmetric(tol=1e-10):
            diags.append(f"psd_constraints[{i}] is not symmetric")
    for i, e in enumerate(program.quad_terms):
        check_expr(e, f"quad_terms[{i}]")
    check_expr(program.linear_term, "linear_term")
    return diags
