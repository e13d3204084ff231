"""Core types for weighted soft-logic programs: terms, atoms, rules, databases.

Truth values live in [0, 1]. A rule is a weighted implication

    weight : h1 | h2 | ... <- b1 & b2 & ...

whose clause form is the disjunction of the head literals and the negated
body literals. Atoms are either observed (value fixed by the database) or
targets (value chosen by inference).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

log = logging.getLogger(__name__)

# Reserved constant marking the unknown slot of a question triplet.
FOCUS = "?x"


class LogicError(ValueError):
    """Malformed logical object, binding, or database record."""


@dataclass(frozen=True)
class Term:
    """A variable (uppercase-initial name) or a constant (anything else)."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise LogicError("term name must be non-empty")

    @property
    def is_variable(self) -> bool:
        return self.name[0].isupper()

    def __str__(self) -> str:
        return self.name


def _as_term(t: "Term | str") -> Term:
    return t if isinstance(t, Term) else Term(t)


@dataclass(frozen=True)
class Atom:
    """A predicate applied to terms, e.g. has_img(horses, standing near, fence)."""

    pred: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        if not self.pred:
            raise LogicError("atom predicate name must be non-empty")
        object.__setattr__(self, "args", tuple(_as_term(a) for a in self.args))

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return all(not a.is_variable for a in self.args)

    def variables(self) -> set[str]:
        return {a.name for a in self.args if a.is_variable}

    def __str__(self) -> str:
        return "%s(%s)" % (self.pred, ", ".join(str(a) for a in self.args))


def atom(pred: str, *args: str) -> Atom:
    """Shorthand constructor: atom("word", "barn")."""
    return Atom(pred, tuple(Term(a) for a in args))


@dataclass(frozen=True)
class Literal:
    """An atom or its negation."""

    atom: Atom
    negated: bool = False

    def __str__(self) -> str:
        return ("!" if self.negated else "") + str(self.atom)


def substitute(target: "Atom | Literal | Rule", binding: Mapping[str, str]):
    """Replace every variable by the constant the binding assigns to it.

    The binding maps variable names to constant names. Every variable
    occurring in the target must be bound; a partial binding raises
    LogicError. Substitution is compositional: applying the union of two
    bindings with disjoint domains equals applying them in sequence.
    """
    if isinstance(target, Rule):
        return Rule(
            head=tuple(substitute(l, binding) for l in target.head),
            body=tuple(substitute(l, binding) for l in target.body),
            weight=target.weight,
            is_hard=target.is_hard,
        )
    if isinstance(target, Literal):
        return Literal(substitute(target.atom, binding), target.negated)
    new_args = []
    for t in target.args:
        if t.is_variable:
            if t.name not in binding:
                raise LogicError(f"unbound variable {t.name} in {target}")
            const = binding[t.name]
            if const and const[0].isupper():
                raise LogicError(
                    f"binding for {t.name} is {const!r}, which names a variable"
                )
            new_args.append(Term(const))
        else:
            new_args.append(t)
    return Atom(target.pred, tuple(new_args))


@dataclass(frozen=True)
class Rule:
    """A weighted implication: disjunctive head, conjunctive body.

    An empty body means the head is asserted unconditionally. Hard rules
    (is_hard) act as constraints with infinite weight; their weight field
    is ignored.
    """

    head: tuple[Literal, ...]
    body: tuple[Literal, ...]
    weight: float
    is_hard: bool = False

    def __post_init__(self) -> None:
        if not self.head:
            raise LogicError("rule must have at least one head literal")
        if not self.is_hard:
            if not math.isfinite(self.weight) or self.weight < 0:
                raise LogicError(f"rule weight must be finite and >= 0, got {self.weight}")
        head_vars = set().union(*(l.atom.variables() for l in self.head))
        body_vars = (
            set().union(*(l.atom.variables() for l in self.body)) if self.body else set()
        )
        loose = head_vars - body_vars
        if loose:
            raise LogicError(
                "head variables %s do not appear in the body" % sorted(loose)
            )

    def variables(self) -> set[str]:
        out: set[str] = set()
        for l in self.head + self.body:
            out |= l.atom.variables()
        return out

    def __str__(self) -> str:
        head = " | ".join(str(l) for l in self.head)
        body = " & ".join(str(l) for l in self.body) if self.body else "true"
        prefix = "hard" if self.is_hard else format_weight(self.weight)
        return f"{prefix}: {head} <- {body}"


def format_weight(w: float) -> str:
    """Render a weight so that parsing it back gives the same float."""
    return repr(float(w))


def clause_form(rule: Rule) -> tuple[list[Atom], list[Atom]]:
    """Return the clause index lists (I+, I-) of a rule.

    I+ holds the atoms appearing non-negated in the clause (positive head
    literals and negated body literals); I- holds the negated ones (negated
    head literals and positive body literals). Occurrences are preserved:
    an atom appearing twice contributes two entries.
    """
    i_plus: list[Atom] = []
    i_minus: list[Atom] = []
    for l in rule.head:
        (i_minus if l.negated else i_plus).append(l.atom)
    for l in rule.body:
        (i_plus if l.negated else i_minus).append(l.atom)
    return i_plus, i_minus


@dataclass(frozen=True)
class PredicateDecl:
    """Predicate signature. Open predicates hold target (inferred) atoms."""

    name: str
    arity: int
    is_open: bool = False

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise LogicError(f"predicate {self.name} must have arity >= 1")


@dataclass(frozen=True)
class SummationConstraint:
    """Cap on the total truth mass of a predicate's target atoms: sum <= bound."""

    pred: str
    arity: int
    bound: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.bound) or self.bound <= 0.0:
            raise LogicError("summation bound must be a positive finite number")


@dataclass
class _Entry:
    atom: Atom
    value: Optional[float]
    is_target: bool


class Database:
    """Ground atom store with closed-world semantics for observed predicates.

    Atoms are interned: each distinct ground atom gets a stable integer id
    in insertion order. Querying an unlisted atom of a closed predicate
    yields 0.0; an unlisted atom of an open predicate is simply unknown
    (grounding requires targets to be listed explicitly). Values are never
    mutated after load; `intern_constant_zero` only caches the closed-world
    default as an explicit entry so ground rules can reference it by id.
    """

    def __init__(self) -> None:
        self.decls: dict[str, PredicateDecl] = {}
        self._entries: list[_Entry] = []
        self._index: dict[Atom, int] = {}

    # -- declarations ------------------------------------------------------

    def declare(self, name: str, arity: int, is_open: bool = False) -> None:
        decl = PredicateDecl(name, arity, is_open)
        old = self.decls.get(name)
        if old is not None and old != decl:
            raise LogicError(f"conflicting redeclaration of {name}/{arity}")
        self.decls[name] = decl

    def decl_of(self, pred: str) -> PredicateDecl:
        try:
            return self.decls[pred]
        except KeyError:
            raise LogicError(f"predicate {pred} is not declared") from None

    # -- load phase --------------------------------------------------------

    def add(self, a: Atom, value: Optional[float] = None, target: bool = False) -> int:
        decl = self.decl_of(a.pred)
        if a.arity != decl.arity:
            raise LogicError(
                f"{a} has arity {a.arity}, declared {decl.name}/{decl.arity}"
            )
        if not a.is_ground:
            raise LogicError(f"database atoms must be ground, got {a}")
        if target and not decl.is_open:
            raise LogicError(f"target atom {a} requires an open predicate")
        if not target and value is None:
            raise LogicError(f"observed atom {a} requires a value")
        if value is not None:
            value = float(value)
            if not (0.0 <= value <= 1.0) or not math.isfinite(value):
                raise LogicError(f"value {value} for {a} outside [0, 1]")
        if a in self._index:
            idx = self._index[a]
            log.warning("duplicate atom %s: last value wins", a)
            self._entries[idx] = _Entry(a, value, target)
            return idx
        idx = len(self._entries)
        self._entries.append(_Entry(a, value, target))
        self._index[a] = idx
        return idx

    def intern_constant_zero(self, a: Atom) -> int:
        """Intern an unlisted closed-predicate atom at its closed-world value."""
        decl = self.decl_of(a.pred)
        if decl.is_open:
            raise LogicError(f"{a} belongs to open predicate {a.pred}; cannot default it")
        if a in self._index:
            return self._index[a]
        idx = len(self._entries)
        self._entries.append(_Entry(a, 0.0, False))
        self._index[a] = idx
        return idx

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, a: Atom) -> bool:
        return a in self._index

    def atom_id(self, a: Atom) -> int:
        try:
            return self._index[a]
        except KeyError:
            raise LogicError(f"atom {a} is not listed in the database") from None

    def atom_of(self, idx: int) -> Atom:
        return self._entries[idx].atom

    def value_of(self, idx: int) -> Optional[float]:
        return self._entries[idx].value

    def is_target(self, idx: int) -> bool:
        return self._entries[idx].is_target

    def lookup(self, a: Atom) -> Optional[_Entry]:
        idx = self._index.get(a)
        return self._entries[idx] if idx is not None else None

    def truth(self, a: Atom) -> Optional[float]:
        """Observed truth of a ground atom; None if the atom is a target.

        Unlisted atoms of closed predicates take the closed-world value 0.0.
        Unlisted atoms of open predicates raise.
        """
        entry = self.lookup(a)
        if entry is None:
            decl = self.decl_of(a.pred)
            if decl.is_open:
                raise LogicError(f"target atom {a} is not listed in the database")
            return 0.0
        return None if entry.is_target else entry.value

    def entries(self) -> Iterator[tuple[int, Atom, Optional[float], bool]]:
        for i, e in enumerate(self._entries):
            yield i, e.atom, e.value, e.is_target

    def by_pred(self, pred: str) -> list[int]:
        return [i for i, e in enumerate(self._entries) if e.atom.pred == pred]

    def target_ids(self) -> list[int]:
        return [i for i, e in enumerate(self._entries) if e.is_target]
