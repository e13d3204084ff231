"""Hinge-loss rule inference for visual question answering.

The package grounds weighted first-order rules over a fact database,
relaxes atoms to [0, 1] truth values under Lukasiewicz semantics, and
finds the most probable state by convex optimization subject to
summation budgets. On top of the engine sit phrase similarity from word
embeddings, triplet extraction from dependency parses, and a six-rule
program that ranks candidate answers to a visual question.
"""

__version__ = "0.1.0"

from .extraction import (
    RelationVocabulary,
    Triplet,
    captions_to_triplets,
    load_vocabulary,
    question_to_triplets,
    read_parses,
)
from .grounding import BlockingPolicy, GroundProgram, dump_grounding, ground_program
from .inference import (
    SolverConfig,
    Solution,
    grid_oracle,
    luk_and,
    luk_not,
    luk_or,
    map_inference,
    objective_value,
)
from .learning import LearningConfig, LearningResult, learn_weights
from .logic import Atom, Database, Literal, LogicError, Rule, Term
from .parser import ParseError, Program, parse_data, parse_program
from .pipeline import (
    PipelineConfig,
    QuestionInstance,
    RankingResult,
    build_program,
    extract_evidence,
    load_instance,
    rank_answers,
)
from .similarity import EmbeddingStore, SimilarityOracle, load_embeddings, load_stub_table

__all__ = [
    "__version__",
    "Atom",
    "BlockingPolicy",
    "Database",
    "EmbeddingStore",
    "GroundProgram",
    "LearningConfig",
    "LearningResult",
    "Literal",
    "LogicError",
    "ParseError",
    "PipelineConfig",
    "Program",
    "QuestionInstance",
    "RankingResult",
    "RelationVocabulary",
    "Rule",
    "SimilarityOracle",
    "Solution",
    "SolverConfig",
    "Term",
    "Triplet",
    "build_program",
    "captions_to_triplets",
    "dump_grounding",
    "extract_evidence",
    "grid_oracle",
    "ground_program",
    "learn_weights",
    "load_embeddings",
    "load_instance",
    "load_stub_table",
    "load_vocabulary",
    "luk_and",
    "luk_not",
    "luk_or",
    "map_inference",
    "objective_value",
    "parse_data",
    "parse_program",
    "question_to_triplets",
    "rank_answers",
    "read_parses",
]
