"""Weight learning: structured-perceptron approximation of the MLE gradient.

For each rule j the feature Phi_j(assignment) is the total hinge distance of
its ground instances. The gradient estimate per epoch is

    g_j = Phi_j(labels) - Phi_j(MAP under current weights)

summed over instances, followed by w_j <- max(0, w_j - lr * g_j). Groundings
are built once per instance and reused across epochs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .grounding import BlockingPolicy, GroundProgram, ground_program
from .inference import (
    InferenceError,
    SolverConfig,
    distance_to_satisfaction,
    full_assignment,
    map_inference,
)
from .logic import Database, LogicError, Rule
from .parser import Program

log = logging.getLogger(__name__)


class LearningError(ValueError):
    """Unlabeled targets, empty instance list, or a diverging update."""


@dataclass(frozen=True)
class LearningConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    solver: SolverConfig = SolverConfig()
    blocking: BlockingPolicy = BlockingPolicy()

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.epochs < 1:
            raise LearningError("learning rate must be >= 0 and epochs >= 1")


@dataclass
class EpochStats:
    """Diagnostics for one pass: weights at entry, gradient, surrogate loss."""

    weights: tuple
    gradient: tuple
    surrogate: float
    label_features: tuple
    map_features: tuple


@dataclass
class LearningResult:
    weights: list
    trace: list
    program: Program


def rule_feature_sums(
    gp: GroundProgram, target_values: Mapping[int, float], n_rules: int
) -> list:
    """Phi_j: per-rule sums of ground distances under the given targets."""
    assignment = full_assignment(gp, target_values)
    sums = [0.0] * n_rules
    for gr in gp.potentials:
        sums[gr.rule_index] += distance_to_satisfaction(gr, assignment)
    return sums


def _labels_of(gp: GroundProgram, instance_no: int) -> dict:
    labels = {}
    for idx in gp.targets:
        v = gp.db.value_of(idx)
        if v is None:
            raise LearningError(
                f"instance {instance_no}: target {gp.db.atom_of(idx)} has no label"
            )
        labels[idx] = v
    return labels


def learn_weights(
    program: Program,
    instances: Sequence[Database],
    cfg: LearningConfig = LearningConfig(),
) -> LearningResult:
    """Fit rule weights so MAP states reproduce the labeled targets.

    Every target atom in every instance database must carry a label value.
    Returns the learned weights, a per-epoch trace, and a copy of the
    program with the weights substituted.
    """
    if not instances:
        raise LearningError("no training instances given")
    n_rules = len(program.rules)
    weights = [float(r.weight) for r in program.rules]

    grounded = []
    for ino, db in enumerate(instances, start=1):
        gp = ground_program(program, db, blocking=cfg.blocking)
        labels = _labels_of(gp, ino)
        label_phi = rule_feature_sums(gp, labels, n_rules)
        grounded.append((gp, label_phi))

    trace: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        grad = [0.0] * n_rules
        label_tot = [0.0] * n_rules
        map_tot = [0.0] * n_rules
        for gp, label_phi in grounded:
            sol = map_inference(gp, cfg.solver, weights=weights)
            map_phi = rule_feature_sums(gp, sol.values, n_rules)
            for j in range(n_rules):
                grad[j] += label_phi[j] - map_phi[j]
                label_tot[j] += label_phi[j]
                map_tot[j] += map_phi[j]
        if any(not math.isfinite(g) for g in grad):
            raise LearningError(f"non-finite gradient at epoch {epoch}")
        surrogate = sum(w * g for w, g in zip(weights, grad))
        trace.append(
            EpochStats(tuple(weights), tuple(grad), surrogate, tuple(label_tot), tuple(map_tot))
        )
        weights = [max(0.0, w - cfg.learning_rate * g) for w, g in zip(weights, grad)]
        if max((abs(g) for g in grad), default=0.0) <= 1e-9:
            break

    learned = Program(
        declarations=list(program.declarations),
        rules=[
            Rule(r.head, r.body, w, r.is_hard) for r, w in zip(program.rules, weights)
        ],
        constraints=list(program.constraints),
        options=dict(program.options),
    )
    return LearningResult(weights, trace, learned)
