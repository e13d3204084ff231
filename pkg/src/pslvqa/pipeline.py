"""End-to-end question answering over extracted triplets.

Builds a six-template rule program per question instance:

    w1: has_img_ans(Z, A1, R1, B1) <- word(Z) & has_img(A1, R1, B1)
                                       & sim(Z, A1) & sim(Z, B1)
    w2: candidate(Z) <- word(Z)
    w3: candidate(Z) <- word(Z) & has_q(A, R, B) & has_img_ans(Z, A1, R1, B1)
                                       & sim(R, R1) & sim(A, A1) & sim(B, B1)
    w4: ans(Z) <- has_q(?x, R, B) & has_img(Z, R, B) & candidate(Z)
    w5: ans(Z) <- has_q(?x, R, B) & has_img(Z1, R, B) & candidate(Z) & sim(Z, Z1)
    w6: ans(Z) <- has_q(?x, R, B) & has_img(Z1, R1, B1) & candidate(Z)
                                       & sim(Z, Z1) & sim(R, R1) & sim(B, B1)
    sum ans/1 <= S

w4 demands an exact relation/context match between the focus question
triplet and an image triplet, w5 relaxes the answer slot through phrase
similarity, w6 relaxes everything; w1/w3 accumulate per-answer relatedness
evidence from image triplets. Answers are ranked by the inferred value of
ans(Z); ties break by prior, then lexicographically.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .extraction import Triplet
from .grounding import BlockingPolicy, GroundProgram, ground_program
from .inference import (
    InferenceError,
    Solution,
    SolverConfig,
    distance_to_satisfaction,
    full_assignment,
    map_inference,
)
from .logic import (
    FOCUS,
    Atom,
    Database,
    Literal,
    LogicError,
    PredicateDecl,
    Rule,
    SummationConstraint,
    Term,
)
from .parser import Program
from .similarity import SimilarityOracle, load_stub_table, normalize_phrase

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
RULE_LABELS = ("w1", "w2", "w3", "w4", "w5", "w6")
EVIDENCE_PREDICATES = ("ans", "candidate", "has_img_ans")


class PipelineError(LogicError):
    """Bad question instance or configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    s_bound: float = 1.0
    tau: float = 0.25
    weights: tuple = DEFAULT_WEIGHTS
    word_values: str = "one"  # "one" or "prior"
    evidence_epsilon: float = 1e-3
    solver: SolverConfig = SolverConfig()

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 6:
            raise PipelineError(f"expected 6 rule weights, got {len(self.weights)}")
        if self.word_values not in ("one", "prior"):
            raise PipelineError("word_values must be 'one' or 'prior'")
        if self.s_bound < 0:
            raise PipelineError("answer budget S must be >= 0")


@dataclass
class QuestionInstance:
    """Answer lexicon with priors plus the extracted triplets."""

    answers: dict
    image_triplets: list
    question_triplets: list

    def __post_init__(self) -> None:
        normalized = {}
        for phrase, prior in self.answers.items():
            p = normalize_phrase(phrase)
            if not p:
                raise PipelineError("answer phrase must be non-empty")
            prior = float(prior)
            if not (0.0 <= prior <= 1.0):
                raise PipelineError(f"prior {prior} for {p!r} outside [0, 1]")
            normalized[p] = prior
        if not normalized:
            raise PipelineError("instance needs at least one answer")
        self.answers = normalized
        self.image_triplets = [_normalize_triplet(t, "image") for t in self.image_triplets]
        self.question_triplets = [
            _normalize_triplet(t, "question") for t in self.question_triplets
        ]


def _normalize_triplet(t: Triplet, source: str) -> Triplet:
    n1, r, n2 = normalize_phrase(t.node1), normalize_phrase(t.rel), normalize_phrase(t.node2)
    if not (n1 and r and n2):
        raise PipelineError(f"triplet {t} has an empty field")
    conf = float(t.confidence)
    if not (0.0 <= conf <= 1.0) or not math.isfinite(conf):
        raise PipelineError(f"triplet confidence {conf} outside [0, 1]")
    return Triplet(n1, r, n2, conf, source)


def _lit(pred: str, *args: str, negated: bool = False) -> Literal:
    return Literal(Atom(pred, tuple(Term(a) for a in args)), negated)


def build_templates(weights: Sequence[float] = DEFAULT_WEIGHTS) -> list:
    w = [float(x) for x in weights]
    return [
        Rule(
            (_lit("has_img_ans", "Z", "A1", "R1", "B1"),),
            (
                _lit("word", "Z"),
                _lit("has_img", "A1", "R1", "B1"),
                _lit("sim", "Z", "A1"),
                _lit("sim", "Z", "B1"),
            ),
            w[0],
        ),
        Rule((_lit("candidate", "Z"),), (_lit("word", "Z"),), w[1]),
        Rule(
            (_lit("candidate", "Z"),),
            (
                _lit("word", "Z"),
                _lit("has_q", "A", "R", "B"),
                _lit("has_img_ans", "Z", "A1", "R1", "B1"),
                _lit("sim", "R", "R1"),
                _lit("sim", "A", "A1"),
                _lit("sim", "B", "B1"),
            ),
            w[2],
        ),
        Rule(
            (_lit("ans", "Z"),),
            (
                _lit("has_q", FOCUS, "R", "B"),
                _lit("has_img", "Z", "R", "B"),
                _lit("candidate", "Z"),
            ),
            w[3],
        ),
        Rule(
            (_lit("ans", "Z"),),
            (
                _lit("has_q", FOCUS, "R", "B"),
                _lit("has_img", "Z1", "R", "B"),
                _lit("candidate", "Z"),
                _lit("sim", "Z", "Z1"),
            ),
            w[4],
        ),
        Rule(
            (_lit("ans", "Z"),),
            (
                _lit("has_q", FOCUS, "R", "B"),
                _lit("has_img", "Z1", "R1", "B1"),
                _lit("candidate", "Z"),
                _lit("sim", "Z", "Z1"),
                _lit("sim", "R", "R1"),
                _lit("sim", "B", "B1"),
            ),
            w[5],
        ),
    ]


def build_program(
    instance: QuestionInstance,
    oracle: SimilarityOracle,
    config: PipelineConfig = PipelineConfig(),
) -> tuple:
    """Assemble the rule program and database for one question.

    The database holds word/has_q/has_img observations, every similarity
    atom the templates can query (zero similarities are left to the closed
    world), and the target atoms: ans/candidate per answer plus has_img_ans
    for each answer x image-triplet pair whose similarities clear tau.
    """
    prog = Program(
        declarations=[
            PredicateDecl("word", 1),
            PredicateDecl("has_q", 3),
            PredicateDecl("has_img", 3),
            PredicateDecl("sim", 2),
            PredicateDecl("has_img_ans", 4, is_open=True),
            PredicateDecl("candidate", 1, is_open=True),
            PredicateDecl("ans", 1, is_open=True),
        ],
        rules=build_templates(config.weights),
        constraints=[SummationConstraint("ans", 1, config.s_bound)],
    )

    db = Database()
    for d in prog.declarations:
        db.declare(d.name, d.arity, d.is_open)

    for phrase, prior in instance.answers.items():
        value = 1.0 if config.word_values == "one" else prior
        db.add(Atom("word", (Term(phrase),)), value)

    def dedup(triplets):
        best: dict = {}
        for t in triplets:
            key = (t.node1, t.rel, t.node2)
            if key not in best or t.confidence > best[key]:
                best[key] = t.confidence
        return best

    q_facts = dedup(instance.question_triplets)
    img_facts = dedup(instance.image_triplets)
    for (n1, r, n2), conf in q_facts.items():
        db.add(Atom("has_q", (Term(n1), Term(r), Term(n2))), conf)
    for (n1, r, n2), conf in img_facts.items():
        db.add(Atom("has_img", (Term(n1), Term(r), Term(n2))), conf)

    sims: dict = {}

    def ask(a: str, b: str) -> float:
        key = (a, b)
        if key not in sims:
            sims[key] = oracle.similarity(a, b)
        return sims[key]

    img_keys = list(img_facts)
    for z in instance.answers:
        for n1, _r, n2 in img_keys:
            ask(z, n1)
            ask(z, n2)
    for qn1, qr, qn2 in q_facts:
        for in1, ir, in2 in img_keys:
            ask(qr, ir)
            ask(qn1, in1)
            ask(qn2, in2)
    for (a, b), v in sims.items():
        if v > 0.0:
            db.add(Atom("sim", (Term(a), Term(b))), v)

    for z in instance.answers:
        db.add(Atom("ans", (Term(z),)), target=True)
    for z in instance.answers:
        db.add(Atom("candidate", (Term(z),)), target=True)
    for z in instance.answers:
        for n1, r, n2 in img_keys:
            if sims[(z, n1)] >= config.tau and sims[(z, n2)] >= config.tau:
                db.add(
                    Atom("has_img_ans", (Term(z), Term(n1), Term(r), Term(n2))),
                    target=True,
                )
    return prog, db


@dataclass
class RankedAnswer:
    phrase: str
    value: float
    prior: float


@dataclass
class RankingResult:
    ranking: list
    converged: bool
    solution: Solution
    ground_program: GroundProgram
    program: Program
    config: PipelineConfig

    def value_of(self, answer: str) -> float:
        z = normalize_phrase(answer)
        for r in self.ranking:
            if r.phrase == z:
                return r.value
        raise PipelineError(f"{answer!r} is not one of the instance answers")


def rank_answers(
    instance: QuestionInstance,
    oracle: SimilarityOracle,
    config: PipelineConfig = PipelineConfig(),
) -> RankingResult:
    """Infer ans(Z) for every answer and rank by value, prior, phrase."""
    prog, db = build_program(instance, oracle, config)
    gp = ground_program(prog, db, blocking=BlockingPolicy(tau=config.tau))
    sol = map_inference(gp, config.solver)
    if not sol.converged:
        log.warning("solver did not converge after %d iterations", sol.iterations)

    values = {}
    total = 0.0
    for z in instance.answers:
        idx = db.atom_id(Atom("ans", (Term(z),)))
        values[z] = sol.values[idx]
        total += values[z]
    if total > config.s_bound + 1e-6:
        raise InferenceError(
            f"answer mass {total:.6f} exceeds the budget {config.s_bound:.6f}"
        )

    ranked = sorted(
        (RankedAnswer(z, values[z], instance.answers[z]) for z in instance.answers),
        key=lambda r: (-r.value, -r.prior, r.phrase),
    )
    return RankingResult(ranked, sol.converged, sol, gp, prog, config)


@dataclass
class EvidenceItem:
    rule: str
    weight: float
    body: list  # (Atom, truth value, negated)
    body_truth: float
    score: float


@dataclass
class EvidenceSet:
    answer: str
    items: list
    converged: bool


def extract_evidence(result: RankingResult, answer: str) -> EvidenceSet:
    """Satisfied ground rules whose head mentions the answer.

    A ground rule counts as evidence when its distance to satisfaction under
    the MAP state is at most evidence_epsilon and its head atom is
    ans/candidate/has_img_ans over the answer. Items are sorted by
    weight x body truth, descending. An answer with value 0 yields no
    evidence; an unconverged solve is passed through as a flag.
    """
    z = normalize_phrase(answer)
    value = result.value_of(z)
    if value <= 0.0:
        return EvidenceSet(z, [], result.converged)

    gp = result.ground_program
    assignment = full_assignment(gp, result.solution.values)
    eps = result.config.evidence_epsilon
    items = []
    for gr in gp.potentials:
        heads = [gp.db.atom_of(i) for i in gr.head_ids]
        if not any(
            h.pred in EVIDENCE_PREDICATES and h.args and h.args[0].name == z
            for h in heads
        ):
            continue
        if distance_to_satisfaction(gr, assignment) > eps:
            continue
        body = []
        truths = []
        for idx, negated in gr.body:
            v = assignment[idx]
            body.append((gp.db.atom_of(idx), v, negated))
            truths.append(1.0 - v if negated else v)
        body_truth = 1.0
        for t in truths:
            body_truth = max(0.0, body_truth + t - 1.0)
        label = RULE_LABELS[gr.rule_index] if gr.rule_index < len(RULE_LABELS) else str(
            gr.rule_index + 1
        )
        items.append(
            EvidenceItem(label, gr.weight, body, body_truth, gr.weight * body_truth)
        )
    items.sort(key=lambda it: (-it.score, it.rule, str([str(a) for a, _v, _n in it.body])))
    return EvidenceSet(z, items, result.converged)


# -- instance directory loading --------------------------------------------------


def load_instance(path) -> tuple:
    """Read a question-instance directory.

    Expects `answers` (phrase TAB prior, or phrase,prior), `image_triplets`
    and `question_triplets` (JSON-lines records over has_img / has_q), and
    optionally `sims` (stub similarity table). Returns (instance, overrides)
    where overrides is None when no sims file is present.
    """
    root = Path(path)
    if not root.is_dir():
        raise PipelineError(f"{root} is not an instance directory")

    answers: dict = {}
    answers_path = root / "answers"
    if not answers_path.exists():
        raise PipelineError(f"missing answers file in {root}")
    for lineno, line in enumerate(answers_path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            phrase, _, prior = line.rpartition("\t")
        else:
            phrase, _, prior = line.rpartition(",")
        phrase = phrase.strip()
        if not phrase:
            raise PipelineError(f"answers line {lineno}: expected 'phrase<TAB>prior'")
        try:
            answers[phrase] = float(prior)
        except ValueError:
            raise PipelineError(f"answers line {lineno}: bad prior {prior!r}") from None

    def read_triplets(name: str, pred: str, source: str) -> list:
        p = root / name
        if not p.exists():
            raise PipelineError(f"missing {name} file in {root}")
        out = []
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise PipelineError(f"{name} line {lineno}: invalid JSON ({e.msg})") from None
            if rec.get("pred") != pred or len(rec.get("args", [])) != 3:
                raise PipelineError(
                    f"{name} line {lineno}: expected a {pred} record with 3 args"
                )
            if "value" not in rec:
                raise PipelineError(f"{name} line {lineno}: missing confidence value")
            a = rec["args"]
            out.append(Triplet(a[0], a[1], a[2], float(rec["value"]), source))
        return out

    img = read_triplets("image_triplets", "has_img", "image")
    q = read_triplets("question_triplets", "has_q", "question")
    overrides = None
    if (root / "sims").exists():
        overrides = load_stub_table(root / "sims")
    return QuestionInstance(answers, img, q), overrides
