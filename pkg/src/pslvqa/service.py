"""HTTP service exposing inference, answering, and extraction.

A thin FastAPI layer over the core package. Embedding files are a CLI
concern; requests carry stub similarity tables instead, which keeps the
payloads small and the endpoints deterministic.

Run with: uvicorn pslvqa.service:app
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .extraction import (
    ExtractionError,
    captions_to_triplets,
    load_vocabulary,
    question_to_triplets,
    read_parses,
)
from .grounding import BlockingPolicy, ground_program
from .inference import InferenceError, InfeasibleProblemError, SolverConfig, map_inference
from .learning import LearningError
from .logic import Database, LogicError
from .parser import ParseError, format_atom, parse_data, parse_program
from .pipeline import (
    PipelineConfig,
    QuestionInstance,
    extract_evidence,
    rank_answers,
)
from .extraction import Triplet
from .similarity import SimilarityError, SimilarityOracle


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    s_bound: Optional[float] = None
    tau: Optional[float] = None
    weights: Optional[list[float]] = None
    word_values: Optional[Literal["one", "prior"]] = None
    evidence_epsilon: Optional[float] = None
    tolerance: Optional[float] = None
    max_iterations: Optional[int] = None
    rho: Optional[float] = None

    def solver(self) -> SolverConfig:
        return SolverConfig(
            tolerance=self.tolerance if self.tolerance is not None else 1e-4,
            max_iterations=self.max_iterations if self.max_iterations is not None else 5000,
            rho=self.rho if self.rho is not None else 1.0,
        )

    def pipeline(self) -> PipelineConfig:
        kwargs = {"solver": self.solver()}
        for key in ("s_bound", "tau", "word_values", "evidence_epsilon"):
            v = getattr(self, key)
            if v is not None:
                kwargs[key] = v
        if self.weights is not None:
            kwargs["weights"] = tuple(self.weights)
        return PipelineConfig(**kwargs)


class SimPair(BaseModel):
    model_config = ConfigDict(extra="forbid")

    p1: str
    p2: str
    value: float = Field(ge=0.0, le=1.0)


def _overrides(sims: Optional[list]) -> Optional[dict]:
    if not sims:
        return None
    lines = [f"{s.p1} | {s.p2} | {s.value}" for s in sims]
    from .similarity import load_stub_table

    return load_stub_table(lines)


class AtomRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pred: str
    args: list[str]
    value: Optional[float] = None
    target: bool = False


class InferRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rules: str
    data: list[AtomRecord]
    config: Optional[ConfigModel] = None


class InferResponse(BaseModel):
    values: dict[str, float]
    objective: float
    iterations: int
    converged: bool


class TripletModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node1: str
    rel: str
    node2: str
    confidence: float = Field(ge=0.0, le=1.0)


class AnswerRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    answers: dict[str, float]
    image_triplets: list[TripletModel]
    question_triplets: list[TripletModel]
    sims: Optional[list[SimPair]] = None
    config: Optional[ConfigModel] = None
    evidence: bool = False


class RankedAnswerModel(BaseModel):
    phrase: str
    value: float
    prior: float


class EvidenceModel(BaseModel):
    rule: str
    weight: float
    body_truth: float
    score: float
    body: list[str]


class AnswerResponse(BaseModel):
    ranking: list[RankedAnswerModel]
    converged: bool
    evidence: Optional[dict[str, list[EvidenceModel]]] = None


class ExtractRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    parses: str
    vocab: list[str]
    mode: Literal["caption", "question"] = "caption"
    sims: Optional[list[SimPair]] = None


class ExtractResponse(BaseModel):
    triplets: list[dict]


def create_app() -> FastAPI:
    app = FastAPI(title="pslvqa", version=__version__)

    @app.exception_handler(LogicError)
    @app.exception_handler(ParseError)
    @app.exception_handler(SimilarityError)
    @app.exception_handler(ExtractionError)
    @app.exception_handler(LearningError)
    @app.exception_handler(InfeasibleProblemError)
    async def bad_request(_req: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(InferenceError)
    async def solver_failure(_req: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/infer", response_model=InferResponse)
    async def infer(req: InferRequest) -> InferResponse:
        prog = parse_program(req.rules)
        db = Database()
        for d in prog.declarations:
            db.declare(d.name, d.arity, d.is_open)
        lines = [json.dumps(r.model_dump(exclude_none=True)) for r in req.data]
        parse_data(lines, db)
        cfg = req.config or ConfigModel()
        tau = cfg.tau if cfg.tau is not None else 0.25
        gp = ground_program(prog, db, blocking=BlockingPolicy(tau=tau))
        sol = map_inference(gp, cfg.solver())
        values = {format_atom(db.atom_of(i)): v for i, v in sol.values.items()}
        return InferResponse(
            values=dict(sorted(values.items())),
            objective=sol.objective,
            iterations=sol.iterations,
            converged=sol.converged,
        )

    @app.post("/answer", response_model=AnswerResponse)
    async def answer(req: AnswerRequest) -> AnswerResponse:
        instance = QuestionInstance(
            answers=dict(req.answers),
            image_triplets=[
                Triplet(t.node1, t.rel, t.node2, t.confidence, "image")
                for t in req.image_triplets
            ],
            question_triplets=[
                Triplet(t.node1, t.rel, t.node2, t.confidence, "question")
                for t in req.question_triplets
            ],
        )
        oracle = SimilarityOracle([], overrides=_overrides(req.sims))
        config = (req.config or ConfigModel()).pipeline()
        result = rank_answers(instance, oracle, config)
        ranking = [
            RankedAnswerModel(phrase=r.phrase, value=r.value, prior=r.prior)
            for r in result.ranking
        ]
        evidence = None
        if req.evidence:
            evidence = {}
            for r in result.ranking:
                ev = extract_evidence(result, r.phrase)
                evidence[r.phrase] = [
                    EvidenceModel(
                        rule=item.rule,
                        weight=item.weight,
                        body_truth=item.body_truth,
                        score=item.score,
                        body=[
                            f"{'!' if neg else ''}{format_atom(a)}={v:.6f}"
                            for a, v, neg in item.body
                        ],
                    )
                    for item in ev.items
                ]
        return AnswerResponse(ranking=ranking, converged=result.converged, evidence=evidence)

    @app.post("/extract", response_model=ExtractResponse)
    async def extract(req: ExtractRequest) -> ExtractResponse:
        sentences = read_parses(req.parses.splitlines())
        vocab = load_vocabulary(req.vocab)
        oracle = SimilarityOracle([], overrides=_overrides(req.sims))
        out = []
        if req.mode == "question":
            for s in sentences:
                for t in question_to_triplets(s, vocab, oracle):
                    out.append(
                        {"pred": "has_q", "args": [t.node1, t.rel, t.node2],
                         "value": round(t.confidence, 6)}
                    )
        else:
            for t in captions_to_triplets(sentences, vocab, oracle):
                out.append(
                    {"pred": "has_img", "args": [t.node1, t.rel, t.node2],
                     "value": round(t.confidence, 6)}
                )
        return ExtractResponse(triplets=out)

    return app


app = create_app()
