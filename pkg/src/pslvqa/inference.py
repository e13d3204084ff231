"""MAP inference for weighted ground clause programs.

The objective is the weighted sum of hinge distances

    f(y) = sum_j w_j * max(0, 1 - sum_{i in I+_j} V(y_i) - sum_{i in I-_j} (1 - V(y_i)))

minimized over target values y in [0,1]^n subject to per-predicate caps
sum(y_scope) <= S. Every term is piecewise linear, so the problem is convex.

The solver is a consensus splitting method: each potential keeps a local
copy of its target variables, the copy update is the closed-form prox of a
hinge of an affine function, and the consensus update projects the average
onto the capped box. The grid oracle below brute-forces the same objective
on a feasibility grid and shares no code with the solver's compiled form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .grounding import GroundProgram, GroundRule
from .logic import LogicError


class InferenceError(ValueError):
    """Bad solver input (missing atoms, invalid configuration)."""


class InfeasibleProblemError(InferenceError):
    """The constraint set admits no solution."""


# -- Lukasiewicz operations ---------------------------------------------------


def _check_unit(*vals: float) -> None:
    for v in vals:
        if not (0.0 <= v <= 1.0):
            raise InferenceError(f"truth value {v} outside [0, 1]")


def luk_and(a: float, b: float) -> float:
    """max(0, a + b - 1)"""
    _check_unit(a, b)
    return max(0.0, a + b - 1.0)


def luk_or(a: float, b: float) -> float:
    """min(1, a + b)"""
    _check_unit(a, b)
    return min(1.0, a + b)


def luk_not(a: float) -> float:
    """1 - a"""
    _check_unit(a)
    return 1.0 - a


def luk_conjunction(values: Sequence[float]) -> float:
    """n-ary Lukasiewicz conjunction: max(0, sum - (n - 1))."""
    out = 1.0
    for v in values:
        out = luk_and(out, v)
    return out


def distance_to_satisfaction(gr: GroundRule, values: Mapping[int, float]) -> float:
    """Hinge distance of one ground clause under a full assignment.

    `values` must map every atom id in the clause (observed and target) to
    its truth value; a missing atom raises InferenceError.
    """
    total = 1.0
    try:
        for i in gr.i_plus:
            total -= values[i]
        for i in gr.i_minus:
            total -= 1.0 - values[i]
    except KeyError as e:
        raise InferenceError(f"assignment is missing atom id {e.args[0]}") from None
    return max(0.0, total)


def full_assignment(gp: GroundProgram, target_values: Mapping[int, float]) -> dict:
    """Merge observed database values with target values into one mapping."""
    out = {}
    for idx, _atom, value, is_target in gp.db.entries():
        if is_target:
            if idx in target_values:
                out[idx] = float(target_values[idx])
        else:
            out[idx] = value
    for idx, v in target_values.items():
        out[idx] = float(v)
    return out


def objective_value(gp: GroundProgram, target_values: Mapping[int, float]) -> float:
    """Recompute f(y) from the definition (soft potentials plus constant)."""
    assignment = full_assignment(gp, target_values)
    total = gp.constant_term
    for gr in gp.potentials:
        if gr.is_hard:
            continue
        total += gr.weight * distance_to_satisfaction(gr, assignment)
    return total


# -- solver -------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-4
    max_iterations: int = 5000
    rho: float = 1.0

    def __post_init__(self) -> None:
        if self.tolerance <= 0 or self.rho <= 0 or self.max_iterations < 1:
            raise InferenceError("solver configuration values must be positive")


@dataclass
class Solution:
    """MAP assignment: values maps target atom ids to truths in [0, 1]."""

    values: dict
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)


class _Compiled:
    """Affine compilation: potential j is w_j * max(0, b_j + sum A_ji y_i)."""

    def __init__(self, gp: GroundProgram):
        self.gp = gp
        self.targets = list(gp.targets)
        self.pos = {idx: k for k, idx in enumerate(self.targets)}
        n = len(self.targets)

        cp_t: list[int] = []
        cp_c: list[float] = []
        cp_pot: list[int] = []
        base: list[float] = []
        weight: list[float] = []
        hard: list[bool] = []
        for j, gr in enumerate(gp.potentials):
            b = 1.0
            for i in gr.i_plus:
                if gp.db.is_target(i):
                    cp_t.append(self.pos[i])
                    cp_c.append(-1.0)
                    cp_pot.append(j)
                else:
                    b -= gp.db.value_of(i)
            for i in gr.i_minus:
                if gp.db.is_target(i):
                    cp_t.append(self.pos[i])
                    cp_c.append(1.0)
                    cp_pot.append(j)
                    b -= 1.0
                else:
                    b -= 1.0 - gp.db.value_of(i)
            base.append(b)
            weight.append(0.0 if gr.is_hard else gr.weight)
            hard.append(gr.is_hard)

        self.n = n
        self.m = len(gp.potentials)
        self.cp_t = np.asarray(cp_t, dtype=np.int64)
        self.cp_c = np.asarray(cp_c, dtype=np.float64)
        self.cp_pot = np.asarray(cp_pot, dtype=np.int64)
        self.base = np.asarray(base, dtype=np.float64)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.hard = np.asarray(hard, dtype=bool)
        self.copies_per_pot = np.bincount(self.cp_pot, minlength=self.m).astype(np.float64)
        counts = np.bincount(self.cp_t, minlength=n).astype(np.float64) if n else np.zeros(0)
        # Variables without copies always arrive at the projection as 0, so
        # clamping their count to 1 leaves them untouched.
        self.step = 1.0 / np.maximum(counts, 1.0)
        self.constraints = [
            (np.asarray([self.pos[i] for i in c.scope], dtype=np.int64), float(c.bound))
            for c in gp.constraints
        ]

    def margins(self, y: np.ndarray) -> np.ndarray:
        if len(self.cp_t) == 0:
            return self.base.copy()
        return self.base + np.bincount(
            self.cp_pot, weights=self.cp_c * y[self.cp_t], minlength=self.m
        )

    def objective(self, y: np.ndarray) -> float:
        s = self.margins(y)
        return float(np.sum(self.weight * np.maximum(s, 0.0))) + self.gp.constant_term

    def hard_violation(self, y: np.ndarray) -> float:
        if not self.hard.any():
            return 0.0
        return float(np.maximum(self.margins(y)[self.hard], 0.0).max(initial=0.0))

    def project(self, y: np.ndarray) -> np.ndarray:
        """Weighted projection onto the feasible set.

        The consensus y-step minimizes sum_i c_i (y_i - m_i)^2 where c_i is
        the number of local copies of variable i, so variables pulled by many
        potentials yield less under an active summation budget. The budget
        check runs on the raw averages; clipping first would discard the
        relative pull strengths.
        """
        out = np.clip(y, 0.0, 1.0)
        for scope, bound in self.constraints:
            if out[scope].sum() > bound:
                out[scope] = _capped_box_projection(y[scope], self.step[scope], bound)
        return out


def _capped_box_projection(v: np.ndarray, step: np.ndarray, bound: float) -> np.ndarray:
    """Projection of v onto {x in [0,1]^k : sum(x) <= bound}.

    Weighted by 1/step per coordinate: the optimum has the form
    x_i = clip(v_i - theta * step_i) with theta >= 0 found by bisection
    (the feasible mass is monotone nonincreasing in theta).
    """
    out = np.clip(v, 0.0, 1.0)
    if out.sum() <= bound:
        return out
    lo = 0.0
    hi = float(np.max(v / step))
    for _ in range(100):
        theta = 0.5 * (lo + hi)
        total = np.clip(v - theta * step, 0.0, 1.0).sum()
        if total > bound:
            lo = theta
        else:
            hi = theta
    return np.clip(v - hi * step, 0.0, 1.0)


def map_inference(
    gp: GroundProgram,
    cfg: SolverConfig = SolverConfig(),
    weights: Optional[Sequence[float]] = None,
) -> Solution:
    """Minimize the weighted hinge objective over the feasible box.

    When `weights` is given it overrides each potential's weight by its
    source rule index (used by weight learning). The reported objective
    sequence is the running best and is therefore non-increasing; the
    returned assignment is the best feasible iterate.
    """
    for c in gp.constraints:
        if c.bound < 0:
            raise InfeasibleProblemError(
                f"sum constraint on {c.pred} has negative bound {c.bound}; "
                "no assignment in [0,1]^n can satisfy it"
            )

    comp = _Compiled(gp)
    if weights is not None:
        w = np.asarray(
            [0.0 if gr.is_hard else float(weights[gr.rule_index]) for gr in gp.potentials],
            dtype=np.float64,
        )
        if (w < 0).any() or not np.isfinite(w).all():
            raise InferenceError("weight overrides must be finite and >= 0")
        comp.weight = w

    n = comp.n
    if n == 0:
        return Solution({}, gp.constant_term, 0, True, [gp.constant_term])

    y = comp.project(np.zeros(n))
    if comp.m == 0 or len(comp.cp_t) == 0:
        obj = comp.objective(y)
        values = {idx: float(y[k]) for k, idx in enumerate(comp.targets)}
        return Solution(values, obj, 0, True, [obj])

    rho = cfg.rho
    z = y[comp.cp_t].copy()
    u = np.zeros_like(z)
    # Prox step threshold per potential: w / rho capped multiplier, scaled
    # by the squared coefficient norm (= copy count, coefficients are +-1).
    pot_norm2 = np.maximum(comp.copies_per_pot, 1.0)
    lam_cap = np.where(comp.hard, np.inf, comp.weight / rho)

    best_obj = comp.objective(y)
    best_y = y.copy()
    trace = [best_obj]
    tol = cfg.tolerance * 0.1
    converged = False
    iterations = 0

    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        v = y[comp.cp_t] - u
        s = comp.base + np.bincount(comp.cp_pot, weights=comp.cp_c * v, minlength=comp.m)
        lam = np.clip(s / pot_norm2, 0.0, lam_cap)
        z = v - lam[comp.cp_pot] * comp.cp_c

        sums = np.bincount(comp.cp_t, weights=z + u, minlength=n)
        counts = np.maximum(np.bincount(comp.cp_t, minlength=n), 1)
        y_new = comp.project(sums / counts)

        u = u + z - y_new[comp.cp_t]

        obj = comp.objective(y_new)
        if obj < best_obj - 1e-15 and comp.hard_violation(y_new) <= 1e-7:
            best_obj = obj
            best_y = y_new.copy()
        trace.append(best_obj)

        primal = float(np.abs(z - y_new[comp.cp_t]).max(initial=0.0))
        dual = float(np.abs(y_new - y).max(initial=0.0))
        y = y_new
        if primal <= tol and dual <= tol:
            converged = True
            break

    if comp.hard_violation(best_y) > 1e-6:
        converged = False

    values = {idx: float(best_y[k]) for k, idx in enumerate(comp.targets)}
    return Solution(values, best_obj, iterations, converged, trace)


# -- brute-force oracle ---------------------------------------------------------


def grid_oracle(gp: GroundProgram, step: float) -> Solution:
    """Exhaustive search over the feasible grid at the given resolution.

    Only usable on small problems (at most 4 targets, step in (0, 0.5]).
    Evaluates the clause distances directly from their definition; shares no
    state with the consensus solver.
    """
    if not (0.0 < step <= 0.5):
        raise InferenceError(f"oracle step must be in (0, 0.5], got {step}")
    targets = list(gp.targets)
    n = len(targets)
    if n > 4:
        raise InferenceError(f"grid oracle supports at most 4 targets, got {n}")
    for c in gp.constraints:
        if c.bound < 0:
            raise InfeasibleProblemError(
                f"sum constraint on {c.pred} has negative bound {c.bound}"
            )
    if n == 0:
        return Solution({}, gp.constant_term, 0, True, [gp.constant_term])

    pts = [k * step for k in range(int(math.floor(1.0 / step + 1e-9)) + 1)]
    if pts[-1] < 1.0 - 1e-12:
        pts.append(1.0)
    axis = np.asarray(pts, dtype=np.float64)

    pos = {idx: k for k, idx in enumerate(targets)}
    grids = np.meshgrid(*([axis] * n), indexing="ij")

    def evaluate(sel) -> np.ndarray:
        vals = [g[sel] for g in grids]
        total = np.full(vals[0].shape, gp.constant_term, dtype=np.float64)
        feasible = np.ones(vals[0].shape, dtype=bool)
        for c in gp.constraints:
            ssum = np.zeros(vals[0].shape)
            for i in c.scope:
                ssum = ssum + vals[pos[i]]
            feasible &= ssum <= c.bound + 1e-9
        for gr in gp.potentials:
            dist = np.ones(vals[0].shape, dtype=np.float64)
            for i in gr.i_plus:
                dist = dist - (vals[pos[i]] if gp.db.is_target(i) else gp.db.value_of(i))
            for i in gr.i_minus:
                dist = dist - (1.0 - (vals[pos[i]] if gp.db.is_target(i) else gp.db.value_of(i)))
            dist = np.maximum(dist, 0.0)
            if gr.is_hard:
                feasible &= dist <= 1e-9
            else:
                total = total + gr.weight * dist
        total = np.where(feasible, total, np.inf)
        return total

    best_obj = math.inf
    best_point: Optional[tuple] = None
    evaluated = 0
    if n < 4:
        total = evaluate(tuple([slice(None)] * n))
        evaluated = total.size
        flat = int(np.argmin(total))
        best_obj = float(total.flat[flat])
        best_point = np.unravel_index(flat, total.shape)
    else:
        for i0 in range(len(axis)):
            total = evaluate((i0,) + tuple([slice(None)] * (n - 1)))
            evaluated += total.size
            flat = int(np.argmin(total))
            cand = float(total.flat[flat])
            if cand < best_obj:
                best_obj = cand
                best_point = (i0,) + np.unravel_index(flat, total.shape)

    if not math.isfinite(best_obj):
        raise InfeasibleProblemError("no feasible grid point exists")
    values = {idx: float(axis[best_point[k]]) for k, idx in enumerate(targets)}
    return Solution(values, best_obj, evaluated, True, [best_obj])
