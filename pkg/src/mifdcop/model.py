"""Problem representation and global/local cost evaluation.

A problem is a set of numbered variables (one per agent), each with a
discrete value list or a continuous interval domain, plus a list of
constraints whose payload is either a dense cost table (discrete scopes
only) or an arithmetic expression.  Purely discrete/tabular and purely
continuous/functional problems are both special cases of the same type.

Problems are immutable after construction and safe to share across
concurrently stepped agents.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expressions as ex
from .errors import ValidationError

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Domain:
    kind: str
    values: tuple[float, ...] | None = None
    lb: float | None = None
    ub: float | None = None

    @staticmethod
    def discrete(values: Iterable[float]) -> "Domain":
        return Domain(DISCRETE, values=tuple(float(v) for v in values))

    @staticmethod
    def continuous(lb: float, ub: float) -> "Domain":
        return Domain(CONTINUOUS, lb=float(lb), ub=float(ub))

    def __post_init__(self):
        if self.kind == DISCRETE:
            if not self.values:
                raise ValidationError("discrete domain must list at least one value")
            if len(set(self.values)) != len(self.values):
                raise ValidationError("discrete domain values must be distinct")
        elif self.kind == CONTINUOUS:
            if self.lb is None or self.ub is None:
                raise ValidationError("continuous domain needs both bounds")
            if not (math.isfinite(self.lb) and math.isfinite(self.ub)):
                raise ValidationError("continuous bounds must be finite")
            if not self.lb < self.ub:
                raise ValidationError(f"continuous domain needs lb < ub, got [{self.lb}, {self.ub}]")
        else:
            raise ValidationError(f"unknown domain kind {self.kind!r}")

    @property
    def size(self) -> int:
        if self.kind != DISCRETE:
            raise ValidationError("size is defined for discrete domains only")
        return len(self.values)

    def contains(self, value: float) -> bool:
        if self.kind == DISCRETE:
            return value in self.values
        return self.lb <= value <= self.ub


@dataclass(frozen=True)
class Constraint:
    """Cost over an ordered scope of variables.

    Exactly one of ``table`` (dense ndarray, axis order = scope order) and
    ``expr`` is set.  Tables are only legal when every scope variable is
    discrete; table entry [i0, i1, ...] is the cost when scope variable j
    carries the i_j-th value of its domain list.
    """

    scope: tuple[int, ...]
    table: np.ndarray | None = None
    expr: ex.Expr | None = None

    def __post_init__(self):
        if len(self.scope) < 1:
            raise ValidationError("constraint scope must contain at least one variable")
        if len(set(self.scope)) != len(self.scope):
            raise ValidationError(f"constraint scope has repeated variables: {self.scope}")
        if (self.table is None) == (self.expr is None):
            raise ValidationError("constraint needs exactly one of table / expr")
        if self.table is not None:
            arr = np.asarray(self.table, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "table", arr)

    @property
    def arity(self) -> int:
        return len(self.scope)

    def __eq__(self, other):
        if not isinstance(other, Constraint):
            return NotImplemented
        if self.scope != other.scope or (self.table is None) != (other.table is None):
            return False
        if self.table is not None:
            return self.table.shape == other.table.shape and np.array_equal(self.table, other.table)
        return self.expr == other.expr


class Problem:
    """Immutable problem instance with precomputed lookup structure.

    ``domains[i]`` is the domain of variable/agent ``i``; variable ids are
    the contiguous integers ``0 .. n-1``.  The constraint graph (variables
    sharing a constraint) must be connected.
    """

    def __init__(self, domains: Sequence[Domain], constraints: Sequence[Constraint]):
        self.domains: tuple[Domain, ...] = tuple(domains)
        self.constraints: tuple[Constraint, ...] = tuple(constraints)
        n = len(self.domains)
        if n == 0:
            raise ValidationError("problem needs at least one variable")

        neighbors: list[set[int]] = [set() for _ in range(n)]
        incident: list[list[int]] = [[] for _ in range(n)]
        for ci, c in enumerate(self.constraints):
            for v in c.scope:
                if not 0 <= v < n:
                    raise ValidationError(f"constraint {ci} references unknown variable {v}")
            self._check_payload(ci, c)
            for v in c.scope:
                incident[v].append(ci)
                neighbors[v].update(u for u in c.scope if u != v)
        self.neighbors: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(s)) for s in neighbors
        )
        self.incident: tuple[tuple[int, ...], ...] = tuple(tuple(l) for l in incident)

        # value -> domain position lookups for discrete variables
        self._sorted_values: list[np.ndarray | None] = []
        self._sorted_perm: list[np.ndarray | None] = []
        for d in self.domains:
            if d.kind == DISCRETE:
                vals = np.asarray(d.values, dtype=float)
                order = np.argsort(vals, kind="stable")
                self._sorted_values.append(vals[order])
                self._sorted_perm.append(order)
            else:
                self._sorted_values.append(None)
                self._sorted_perm.append(None)

        components = self._components()
        if len(components) > 1:
            raise ValidationError(
                "constraint graph is disconnected; components: "
                + ", ".join(str(sorted(c)) for c in components)
            )

    def _check_payload(self, ci: int, c: Constraint) -> None:
        if c.table is not None:
            kinds = [self.domains[v].kind for v in c.scope]
            if any(k != DISCRETE for k in kinds):
                raise ValidationError(
                    f"constraint {ci} uses a table but its scope includes a continuous variable"
                )
            expected = tuple(self.domains[v].size for v in c.scope)
            if c.table.shape != expected:
                raise ValidationError(
                    f"constraint {ci} table shape {c.table.shape} does not match domains {expected}"
                )
        else:
            ex.check_total(c.expr)
            refs = ex.variables(c.expr)
            if not refs <= set(c.scope):
                raise ValidationError(
                    f"constraint {ci} expression references {sorted(refs - set(c.scope))} outside its scope"
                )
            for ind_var, ind_val in _indicator_terms(c.expr):
                d = self.domains[ind_var]
                if d.kind != DISCRETE:
                    raise ValidationError(
                        f"constraint {ci} indicator references continuous variable {ind_var}"
                    )
                if ind_val not in d.values:
                    raise ValidationError(
                        f"constraint {ci} indicator value {ind_val} not in domain of variable {ind_var}"
                    )

    def _components(self) -> list[set[int]]:
        n = len(self.domains)
        seen = [False] * n
        comps = []
        for start in range(n):
            if seen[start]:
                continue
            comp = {start}
            seen[start] = True
            stack = [start]
            while stack:
                u = stack.pop()
                for v in self.neighbors[u]:
                    if not seen[v]:
                        seen[v] = True
                        comp.add(v)
                        stack.append(v)
            comps.append(comp)
        return comps

    @property
    def n_variables(self) -> int:
        return len(self.domains)

    @property
    def has_continuous(self) -> bool:
        return any(d.kind == CONTINUOUS for d in self.domains)

    def value_to_pos(self, var: int, values):
        """Map discrete values (scalar or array) to their domain list positions."""
        sv, perm = self._sorted_values[var], self._sorted_perm[var]
        idx = np.searchsorted(sv, values)
        idx = np.clip(idx, 0, len(sv) - 1)
        ok = sv[idx] == values
        if not np.all(ok):
            bad = np.asarray(values)[~np.atleast_1d(ok)][:1]
            raise ValidationError(f"value {bad[0]} not in domain of variable {var}")
        return perm[idx]

    def validate_value(self, var: int, value: float) -> None:
        if not self.domains[var].contains(value):
            raise ValidationError(f"value {value} outside the domain of variable {var}")

    def validate_assignment(self, assignment) -> np.ndarray:
        arr = np.asarray(assignment, dtype=float)
        if arr.shape != (self.n_variables,):
            raise ValidationError(
                f"assignment length {arr.shape} does not match {self.n_variables} variables"
            )
        for v in range(self.n_variables):
            self.validate_value(v, arr[v])
        return arr

    def constraint_cost(self, ci: int, values: Mapping[int, float]):
        """Cost of constraint ``ci`` given scope values (scalars or arrays)."""
        c = self.constraints[ci]
        if c.table is not None:
            pos = tuple(self.value_to_pos(v, values[v]) for v in c.scope)
            return c.table[pos]
        return ex.evaluate(c.expr, values)

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return self.domains == other.domains and self.constraints == other.constraints


def _indicator_terms(expr: ex.Expr):
    if isinstance(expr, ex.Indicator):
        yield expr.index, expr.value
    elif isinstance(expr, ex.Neg):
        yield from _indicator_terms(expr.operand)
    elif isinstance(expr, (ex.Add, ex.Sub, ex.Mul)):
        yield from _indicator_terms(expr.left)
        yield from _indicator_terms(expr.right)
    elif isinstance(expr, ex.Pow):
        yield from _indicator_terms(expr.base)
        yield from _indicator_terms(expr.exponent)


def evaluate_global(problem: Problem, assignment) -> float:
    """Total cost of a complete assignment; each constraint counted once."""
    arr = problem.validate_assignment(assignment)
    total = 0.0
    for ci, c in enumerate(problem.constraints):
        total += float(problem.constraint_cost(ci, {v: arr[v] for v in c.scope}))
    return total


def _local_values(problem: Problem, var: int, own_value, neighbor_values: Mapping[int, float]):
    values = {var: own_value}
    for u in problem.neighbors[var]:
        if u not in neighbor_values:
            raise ValidationError(f"missing value for neighbor variable {u}")
        values[u] = neighbor_values[u]
    return values


def local_cost(
    problem: Problem, var: int, own_value, neighbor_values: Mapping[int, float]
) -> float:
    """Sum of the constraints containing ``var`` at the given values.

    Constraints among ``var``'s neighbors that do not include ``var`` are
    excluded.
    """
    values = _local_values(problem, var, own_value, neighbor_values)
    total = 0.0
    for ci in problem.incident[var]:
        scope = problem.constraints[ci].scope
        total += float(problem.constraint_cost(ci, {v: values[v] for v in scope}))
    return total


def local_gain(
    problem: Problem,
    var: int,
    current_value,
    candidate_value,
    neighbor_values: Mapping[int, float],
) -> float:
    """Cost improvement of switching ``var`` from current to candidate.

    Positive means the candidate lowers the local (and hence global) cost.
    """
    return local_cost(problem, var, current_value, neighbor_values) - local_cost(
        problem, var, candidate_value, neighbor_values
    )


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


def problem_to_dict(problem: Problem) -> dict:
    variables = []
    for i, d in enumerate(problem.domains):
        if d.kind == DISCRETE:
            variables.append({"id": i, "kind": DISCRETE, "domain": list(d.values)})
        else:
            variables.append({"id": i, "kind": CONTINUOUS, "domain": [d.lb, d.ub]})
    constraints = []
    for c in problem.constraints:
        entry: dict = {"scope": list(c.scope)}
        if c.table is not None:
            entry["table"] = [float(x) for x in c.table.reshape(-1)]
        else:
            entry["expr"] = ex.to_string(c.expr)
        constraints.append(entry)
    return {"variables": variables, "constraints": constraints, "sense": MINIMIZE}


def problem_from_dict(data: dict) -> Problem:
    try:
        raw_vars = data["variables"]
        raw_cons = data["constraints"]
    except KeyError as e:
        raise ValidationError(f"problem file missing field {e.args[0]!r}")
    sense = data.get("sense", MINIMIZE)
    if sense not in (MINIMIZE, MAXIMIZE):
        raise ValidationError(f"unknown sense {sense!r}")

    by_id = {}
    for rv in raw_vars:
        vid = int(rv["id"])
        if vid in by_id:
            raise ValidationError(f"duplicate variable id {vid}")
        dom = rv["domain"]
        if rv["kind"] == DISCRETE:
            by_id[vid] = Domain.discrete(dom)
        elif rv["kind"] == CONTINUOUS:
            if len(dom) != 2:
                raise ValidationError(f"continuous domain of variable {vid} must be [lb, ub]")
            by_id[vid] = Domain.continuous(dom[0], dom[1])
        else:
            raise ValidationError(f"variable {vid} has unknown kind {rv['kind']!r}")
    n = len(by_id)
    if sorted(by_id) != list(range(n)):
        raise ValidationError("variable ids must be the contiguous integers 0..n-1")
    domains = [by_id[i] for i in range(n)]

    negate = sense == MAXIMIZE
    constraints = []
    for rc in raw_cons:
        scope = tuple(int(v) for v in rc["scope"])
        if "table" in rc:
            shape = tuple(domains[v].size for v in scope if 0 <= v < n)
            flat = np.asarray(rc["table"], dtype=float)
            if len(shape) != len(scope) or flat.size != int(np.prod(shape)):
                raise ValidationError(
                    f"table for scope {scope} has {flat.size} entries, expected {np.prod(shape)}"
                )
            table = flat.reshape(shape)
            constraints.append(Constraint(scope, table=-table if negate else table))
        elif "expr" in rc:
            tree = ex.parse(rc["expr"])
            constraints.append(Constraint(scope, expr=ex.Neg(tree) if negate else tree))
        else:
            raise ValidationError(f"constraint on scope {scope} needs 'table' or 'expr'")
    return Problem(domains, constraints)


def dumps_problem(problem: Problem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2, sort_keys=True) + "\n"


def save_problem(problem: Problem, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_problem(problem))


def load_problem(path) -> Problem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
