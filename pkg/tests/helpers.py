"""Builders and independent reference implementations shared across test modules."""

import random
from pathlib import Path

from pslvqa import Database, SimilarityOracle, parse_data, parse_program
from pslvqa.grounding import GroundConstraint, GroundProgram, GroundRule
from pslvqa.logic import Atom, Term
from pslvqa.similarity import normalize_phrase

FIXTURES = Path(__file__).parent / "fixtures"


def load_problem(rules_path, data_path):
    """Parse a rules file plus a data file into a fresh database."""
    prog = parse_program(Path(rules_path).read_text(encoding="utf-8"))
    db = Database()
    for d in prog.declarations:
        db.declare(d.name, d.arity, d.is_open)
    parse_data(Path(data_path).read_text(encoding="utf-8").splitlines(), db)
    return prog, db


def problem_from_text(rules_text, records=()):
    """Same as load_problem, from in-memory strings."""
    prog = parse_program(rules_text)
    db = Database()
    for d in prog.declarations:
        db.declare(d.name, d.arity, d.is_open)
    parse_data(records, db)
    return prog, db


def sim_table(*entries):
    """Stub override table from (phrase1, phrase2, value) triples."""
    table = {}
    for p1, p2, value in entries:
        a, b = normalize_phrase(p1), normalize_phrase(p2)
        table[(a, b) if a <= b else (b, a)] = float(value)
    return table


def stub_oracle(*entries):
    return SimilarityOracle(overrides=sim_table(*entries))


def clipped_or_distance(plus_values, minus_values):
    """Reference hinge distance built from the clipped disjunction.

    Folds the clause truth as a running Lukasiewicz disjunction of the
    positive values and the negated negative values; the distance is one
    minus that truth. Because min(1, .) clamping is monotone, the fold
    equals min(1, sum of contributions), so this matches the affine form
    without sharing any code with it.
    """
    truth = 0.0
    for v in plus_values:
        truth = min(1.0, truth + v)
    for v in minus_values:
        truth = min(1.0, truth + (1.0 - v))
    return 1.0 - truth


def random_hinge_program(rng: random.Random) -> GroundProgram:
    """A random instance small enough for the exhaustive grid oracle.

    At most 3 targets and 6 potentials, weights in [0, 2], and half the
    instances carry a summation budget of 0.5 or 1.0 over the targets.
    Atoms appear at most once per clause and observed values sit on the
    0.02 grid, which keeps the piecewise-linear optima representable on the
    0.01 grid the exhaustive oracle searches.
    """
    db = Database()
    db.declare("p", 1, is_open=True)
    db.declare("q", 1)
    n_targets = rng.randint(1, 3)
    targets = [db.add(Atom("p", (Term(f"t{i}"),)), target=True) for i in range(n_targets)]
    observed = [
        db.add(Atom("q", (Term(f"o{i}"),)), rng.randint(0, 50) / 50.0)
        for i in range(rng.randint(0, 2))
    ]
    pool = targets + observed

    potentials = []
    for j in range(rng.randint(1, 6)):
        i_plus, i_minus = [], []
        size = rng.randint(1, min(3, len(pool)))
        for i in rng.sample(pool, size):
            side = i_plus if rng.random() < 0.5 else i_minus
            side.append(i)
        potentials.append(
            GroundRule(
                weight=rng.uniform(0.0, 2.0),
                i_plus=tuple(i_plus),
                i_minus=tuple(i_minus),
                rule_index=j,
            )
        )

    constraints = []
    if rng.random() < 0.5:
        bound = rng.choice([0.5, 1.0])
        constraints.append(GroundConstraint("p", bound, tuple(targets)))
    return GroundProgram(db, potentials, targets, constraints)
