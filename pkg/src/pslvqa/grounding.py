"""Instantiate rule programs over a database into weighted ground clauses.

Bindings are enumerated by joining positive body literals against the atoms
listed in the database (closed-world: observed atoms not listed are 0.0 and
can never satisfy a positive body literal). Ground rules whose hinge is
identically zero are pruned; rules with no target atoms contribute a
constant, which is accumulated separately so pruning never changes the
objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .logic import Atom, Database, LogicError, Rule, SummationConstraint
from .parser import Program, format_atom

log = logging.getLogger(__name__)

DEFAULT_MAX_GROUND_RULES = 5_000_000


class GroundingError(LogicError):
    """Unsafe rule, unlisted target atom, or inconsistent hard evidence."""


class GroundingExplosionError(GroundingError):
    """The grounding cap was exceeded; names the offending rule."""


@dataclass(frozen=True)
class BlockingPolicy:
    """Drop bindings whose similarity atoms fall below tau."""

    tau: float = 0.25
    sim_predicates: frozenset = frozenset({"sim"})


def blocking_filter(sim_values: Sequence[float], tau: float) -> bool:
    """True iff every similarity value in the binding clears the threshold."""
    return all(v >= tau for v in sim_values)


@dataclass(frozen=True)
class GroundRule:
    """A weighted ground clause: hinge distance max(0, 1 - sum(I+) - sum(1 - I-)).

    i_plus / i_minus hold database atom ids; occurrences are preserved, so a
    repeated atom contributes one entry per occurrence. head_ids and body
    carry the rule structure for evidence reporting; binding records the
    variable assignment that produced this instance.
    """

    weight: float
    i_plus: tuple[int, ...]
    i_minus: tuple[int, ...]
    is_hard: bool = False
    rule_index: int = 0
    binding: tuple[tuple[str, str], ...] = ()
    head_ids: tuple[int, ...] = field(default=(), compare=False)
    body: tuple[tuple[int, bool], ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class GroundConstraint:
    """Grounded summation cap: sum of the scope atoms' values <= bound."""

    pred: str
    bound: float
    scope: tuple[int, ...]


@dataclass
class GroundProgram:
    """The instantiated optimization problem."""

    db: Database
    potentials: list[GroundRule]
    targets: list[int]
    constraints: list[GroundConstraint]
    constant_term: float = 0.0


def _match(pattern: Atom, fact: Atom, binding: dict) -> Optional[dict]:
    """Extend binding so that pattern matches fact, or None."""
    out = binding
    copied = False
    for t, c in zip(pattern.args, fact.args):
        if t.is_variable:
            bound = out.get(t.name)
            if bound is None:
                if not copied:
                    out = dict(out)
                    copied = True
                out[t.name] = c.name
            elif bound != c.name:
                return None
        elif t.name != c.name:
            return None
    return out if copied else dict(out)


def _bindings(
    positives: Sequence[Atom],
    db: Database,
    candidates: dict,
    prune: bool,
) -> Iterator[dict]:
    """Enumerate variable bindings by joining positive body atoms."""

    def descend(i: int, binding: dict) -> Iterator[dict]:
        if i == len(positives):
            yield binding
            return
        pattern = positives[i]
        for idx in candidates[pattern.pred]:
            value = db.value_of(idx)
            if prune and not db.is_target(idx) and value == 0.0:
                continue
            extended = _match(pattern, db.atom_of(idx), binding)
            if extended is not None:
                yield from descend(i + 1, extended)

    yield from descend(0, {})


def ground_program(
    program: Program,
    db: Database,
    blocking: BlockingPolicy = BlockingPolicy(),
    max_ground_rules: int = DEFAULT_MAX_GROUND_RULES,
    prune: bool = True,
) -> GroundProgram:
    """Ground every rule of the program against the database.

    Deterministic: rules are processed in program order and bindings in
    database insertion order, so repeated runs produce identical ground
    programs. Raises GroundingExplosionError when the number of ground rules
    would exceed max_ground_rules.
    """
    for d in program.declarations:
        db.declare(d.name, d.arity, d.is_open)

    potentials: list[GroundRule] = []
    constant_term = 0.0
    candidates = {p: db.by_pred(p) for p in db.decls}

    for ridx, rule in enumerate(program.rules):
        positives = [l.atom for l in rule.body if not l.negated]
        pos_vars = set().union(*(a.variables() for a in positives)) if positives else set()
        loose = rule.variables() - pos_vars
        if loose:
            raise GroundingError(
                "rule %d is unsafe: variables %s never occur in a positive body literal"
                % (ridx + 1, sorted(loose))
            )

        produced = 0
        for binding in _bindings(positives, db, candidates, prune):
            produced += 1
            if len(potentials) >= max_ground_rules or produced > max_ground_rules:
                raise GroundingExplosionError(
                    f"rule {ridx + 1} exceeded the grounding cap of {max_ground_rules}"
                )
            gr = _instantiate(rule, ridx, binding, db, blocking, prune)
            if gr is None:
                continue
            if isinstance(gr, float):
                if rule.is_hard and gr > 1e-9:
                    raise GroundingError(
                        f"hard rule {ridx + 1} is violated by observed data "
                        f"(distance {gr:.6f}) under binding {binding}"
                    )
                constant_term += rule.weight * gr
                continue
            potentials.append(gr)

    targets = db.target_ids()
    target_set = set(targets)
    constraints = []
    for c in program.constraints:
        scope = tuple(i for i in db.by_pred(c.pred) if i in target_set)
        if scope:
            constraints.append(GroundConstraint(c.pred, c.bound, scope))

    return GroundProgram(db, potentials, targets, constraints, constant_term)


def _instantiate(rule, ridx, binding, db, blocking, prune):
    """Build one ground rule; returns None (dropped), a float (constant), or GroundRule."""
    sim_values = []
    body_pairs = []
    for lit in rule.body:
        ga = _resolve(lit.atom, binding, ridx, db)
        idx = _atom_id(ga, db)
        body_pairs.append((idx, lit.negated))
        if (
            not lit.negated
            and ga.pred in blocking.sim_predicates
            and not db.is_target(idx)
        ):
            sim_values.append(db.value_of(idx))
    if prune and not blocking_filter(sim_values, blocking.tau):
        return None

    head_ids = []
    i_plus: list[int] = []
    i_minus: list[int] = []
    for lit in rule.head:
        ga = _resolve(lit.atom, binding, ridx, db)
        idx = _atom_id(ga, db)
        head_ids.append(idx)
        (i_minus if lit.negated else i_plus).append(idx)
    for idx, negated in body_pairs:
        (i_plus if negated else i_minus).append(idx)

    # Upper bound of the hinge over target values: observed terms are fixed,
    # targets contribute 0 at their favourable extreme.
    ub = 1.0
    has_target = False
    for idx in i_plus:
        if db.is_target(idx):
            has_target = True
        else:
            ub -= db.value_of(idx)
    for idx in i_minus:
        if db.is_target(idx):
            has_target = True
        else:
            ub -= 1.0 - db.value_of(idx)

    if not has_target:
        return max(0.0, ub)
    if prune and ub <= 0.0:
        return None
    return GroundRule(
        weight=rule.weight,
        i_plus=tuple(i_plus),
        i_minus=tuple(i_minus),
        is_hard=rule.is_hard,
        rule_index=ridx,
        binding=tuple(sorted(binding.items())),
        head_ids=tuple(head_ids),
        body=tuple(body_pairs),
    )


def _resolve(pattern: Atom, binding: dict, ridx: int, db: Database) -> Atom:
    if pattern.is_ground:
        return pattern
    from .logic import substitute

    try:
        return substitute(pattern, binding)
    except LogicError as e:
        raise GroundingError(f"rule {ridx + 1}: {e}") from None


def _atom_id(ga: Atom, db: Database) -> int:
    entry = db.lookup(ga)
    if entry is not None:
        return db.atom_id(ga)
    decl = db.decl_of(ga.pred)
    if decl.is_open:
        raise GroundingError(
            f"target atom {ga} is not listed in the database; open-predicate "
            "atoms must be enumerated before grounding"
        )
    return db.intern_constant_zero(ga)


def dump_grounding(gp: GroundProgram) -> str:
    """Text dump, one line per ground rule: weight | I+ | I- | originating rule."""
    lines = []
    for gr in gp.potentials:
        plus = ", ".join(format_atom(gp.db.atom_of(i)) for i in gr.i_plus)
        minus = ", ".join(format_atom(gp.db.atom_of(i)) for i in gr.i_minus)
        bind = " ".join(f"{k}={v}" for k, v in gr.binding)
        prov = f"rule {gr.rule_index + 1}" + (f" [{bind}]" if bind else "")
        w = "hard" if gr.is_hard else f"{gr.weight:.6f}"
        lines.append(f"{w} | {plus} | {minus} | {prov}")
    for c in gp.constraints:
        atoms = ", ".join(format_atom(gp.db.atom_of(i)) for i in c.scope)
        lines.append(f"sum {c.pred} <= {c.bound:.6f} | {atoms}")
    return "\n".join(lines) + ("\n" if lines else "")
