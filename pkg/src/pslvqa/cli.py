"""Command-line interface.

Five subcommands cover the workflow: `infer` runs MAP inference over a rules
file and a data file, `oracle` does the same by exhaustive grid search (small
problems only), `extract` turns dependency parses into triplet records,
`answer` ranks the candidate answers of a question instance, and `learn`
fits rule weights from labeled data. All float output uses six decimal
places and every listing is sorted, so repeated runs are byte-identical.

Exit codes: 0 on success, 2 when the solver fails to converge (results are
still written), 1 on any error (missing files, syntax, bad configuration).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .extraction import (
    ExtractionError,
    captions_to_triplets,
    load_vocabulary,
    question_to_triplets,
    read_parses,
)
from .grounding import BlockingPolicy, dump_grounding, ground_program
from .inference import (
    InferenceError,
    InfeasibleProblemError,
    SolverConfig,
    grid_oracle,
    map_inference,
)
from .learning import LearningConfig, LearningError, learn_weights
from .logic import Database, LogicError
from .parser import (
    ParseError,
    format_atom,
    format_program,
    format_record,
    parse_data,
    parse_program,
    rewrite_weights,
)
from .pipeline import (
    PipelineConfig,
    PipelineError,
    extract_evidence,
    load_instance,
    rank_answers,
)
from .similarity import SimilarityError, SimilarityOracle, load_embeddings, load_stub_table

log = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "s_bound",
    "tau",
    "weights",
    "word_values",
    "evidence_epsilon",
    "tolerance",
    "max_iterations",
    "rho",
    "learning_rate",
    "epochs",
}

EXPECTED_ERRORS = (
    ParseError,
    LogicError,  # covers grounding and pipeline errors
    SimilarityError,
    ExtractionError,
    LearningError,
    InferenceError,
    InfeasibleProblemError,
    OSError,
)

# Command-line flags that override config-file keys of the same name.
_OVERRIDE_FLAGS = ("tau", "s_bound", "tolerance", "max_iterations")


def _load_config(args) -> dict:
    cfg = {}
    path = getattr(args, "config", None)
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise PipelineError(f"config {path}: invalid JSON ({e.msg})") from None
        if not isinstance(cfg, dict):
            raise PipelineError(f"config {path}: expected a JSON object")
        unknown = set(cfg) - _CONFIG_KEYS
        if unknown:
            raise PipelineError(f"config {path}: unknown keys {sorted(unknown)}")
    for flag in _OVERRIDE_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    return cfg


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        tolerance=float(cfg.get("tolerance", 1e-4)),
        max_iterations=int(cfg.get("max_iterations", 5000)),
        rho=float(cfg.get("rho", 1.0)),
    )


def _pipeline_config(cfg: dict) -> PipelineConfig:
    kwargs = {"solver": _solver_config(cfg)}
    for key in ("s_bound", "tau", "word_values", "evidence_epsilon"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "weights" in cfg:
        kwargs["weights"] = tuple(cfg["weights"])
    return PipelineConfig(**kwargs)


def _emit(text: str, output) -> None:
    if text and not text.endswith("\n"):
        text += "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump(gp_sections, path) -> None:
    if path is None:
        return
    parts = []
    sections = gp_sections if isinstance(gp_sections, list) else [(None, gp_sections)]
    for title, gp in sections:
        if title:
            parts.append(f"# {title}")
        parts.append(dump_grounding(gp))
    text = "\n".join(parts)
    if text and not text.endswith("\n"):
        text += "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_problem(args):
    prog = parse_program(Path(args.rules).read_text(encoding="utf-8"))
    db = Database()
    for d in prog.declarations:
        db.declare(d.name, d.arity, d.is_open)
    with open(args.data, encoding="utf-8") as fh:
        parse_data(fh, db)
    cfg = _load_config(args)
    tau = float(cfg.get("tau", 0.25))
    gp = ground_program(prog, db, blocking=BlockingPolicy(tau=tau))
    return prog, db, gp, cfg


def _summary_record(objective: float, iterations: int, converged: bool) -> str:
    return '{"objective": %.6f, "iterations": %d, "converged": %s}' % (
        objective,
        iterations,
        "true" if converged else "false",
    )


def _solution_lines(db, sol) -> str:
    pairs = sorted(
        ((db.atom_of(i), v) for i, v in sol.values.items()),
        key=lambda av: format_atom(av[0]),
    )
    lines = [
        format_record(a.pred, (t.name for t in a.args), value=v) for a, v in pairs
    ]
    lines.append(_summary_record(sol.objective, sol.iterations, sol.converged))
    return "\n".join(lines)


def cmd_infer(args) -> int:
    _prog, db, gp, cfg = _load_problem(args)
    _dump(gp, args.dump_grounding)
    sol = map_inference(gp, _solver_config(cfg))
    _emit(_solution_lines(db, sol), args.output)
    return 0 if sol.converged else 2


def cmd_oracle(args) -> int:
    _prog, db, gp, _cfg = _load_problem(args)
    _dump(gp, args.dump_grounding)
    sol = grid_oracle(gp, step=args.step)
    _emit(_solution_lines(db, sol), args.output)
    return 0 if sol.converged else 2


def _build_oracle(embedding_paths, overrides) -> SimilarityOracle:
    stores = [load_embeddings(p, name=str(p)) for p in embedding_paths or []]
    return SimilarityOracle(stores, overrides=overrides)


def cmd_extract(args) -> int:
    sentences = read_parses(args.parses)
    vocab = load_vocabulary(args.vocab)
    overrides = load_stub_table(args.sims) if args.sims else None
    oracle = _build_oracle(args.embeddings, overrides)
    # Extraction builds no ground program; honor the flag with an empty dump.
    _dump([], args.dump_grounding)
    lines = []
    if args.mode == "question":
        for s in sentences:
            for t in question_to_triplets(s, vocab, oracle):
                lines.append(format_record("has_q", (t.node1, t.rel, t.node2), t.confidence))
    else:
        for t in captions_to_triplets(sentences, vocab, oracle):
            lines.append(format_record("has_img", (t.node1, t.rel, t.node2), t.confidence))
    _emit("\n".join(lines) if lines else "", args.output)
    return 0


def _evidence_block(result, phrase: str) -> list:
    ev = extract_evidence(result, phrase)
    lines = []
    for item in ev.items:
        body = ", ".join(
            '{"atom": %s, "value": %.6f, "negated": %s}'
            % (json.dumps(format_atom(a)), v, "true" if negated else "false")
            for a, v, negated in item.body
        )
        lines.append(
            '{"answer": %s, "rule": %s, "weight": %.6f, "score": %.6f, "body": [%s]}'
            % (json.dumps(ev.answer), json.dumps(item.rule), item.weight, item.score, body)
        )
    return lines


def cmd_answer(args) -> int:
    instance, overrides = load_instance(args.instance)
    oracle = _build_oracle(args.embeddings, overrides)
    config = _pipeline_config(_load_config(args))
    result = rank_answers(instance, oracle, config)
    _dump(result.ground_program, args.dump_grounding)
    lines = [
        '{"rank": %d, "answer": %s, "value": %.6f, "prior": %.6f}'
        % (rank, json.dumps(r.phrase), r.value, r.prior)
        for rank, r in enumerate(result.ranking, start=1)
    ]
    lines.append(
        _summary_record(result.solution.objective, result.solution.iterations, result.converged)
    )
    if args.evidence:
        wanted = (
            [r.phrase for r in result.ranking]
            if args.evidence == "all"
            else [args.evidence]
        )
        for phrase in wanted:
            lines.extend(_evidence_block(result, phrase))
    _emit("\n".join(lines), args.output)
    return 0 if result.converged else 2


def cmd_learn(args) -> int:
    prog = parse_program(Path(args.rules).read_text(encoding="utf-8"))
    cfg = _load_config(args)
    instances = []
    for path in args.data:
        db = Database()
        for d in prog.declarations:
            db.declare(d.name, d.arity, d.is_open)
        with open(path, encoding="utf-8") as fh:
            parse_data(fh, db)
        instances.append(db)
    lcfg = LearningConfig(
        learning_rate=float(cfg.get("learning_rate", 0.1)),
        epochs=int(cfg.get("epochs", 50)),
        solver=_solver_config(cfg),
        blocking=BlockingPolicy(tau=float(cfg.get("tau", 0.25))),
    )
    result = learn_weights(prog, instances, lcfg)
    for epoch, stats in enumerate(result.trace, start=1):
        log.info(
            "epoch %d: weights=%s gradient=%s surrogate=%.6f",
            epoch,
            [f"{w:.6f}" for w in stats.weights],
            [f"{g:.6f}" for g in stats.gradient],
            stats.surrogate,
        )
    if args.dump_grounding:
        sections = []
        for ino, db in enumerate(instances, start=1):
            gp = ground_program(prog, db, blocking=lcfg.blocking)
            sections.append((f"instance {ino}", gp))
        _dump(sections, args.dump_grounding)
    if prog.source_lines:
        text = rewrite_weights(prog, result.weights)
    else:
        text = format_program(result.program)
    _emit(text, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pslvqa",
        description="Hinge-loss rule inference for visual question answering.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, grounding=True):
        p.add_argument("--config", help="JSON config file (flags override its keys)")
        p.add_argument("--output", help="write results here instead of stdout")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="accepted for compatibility; the solver is single-threaded",
        )
        if grounding:
            p.add_argument("--tau", type=float, help="blocking threshold (default 0.25)")
            p.add_argument("--s-bound", dest="s_bound", type=float,
                           help="answer budget S (default 1.0)")
            p.add_argument("--tolerance", type=float, help="solver tolerance (default 1e-4)")
            p.add_argument("--max-iterations", dest="max_iterations", type=int,
                           help="solver iteration cap (default 5000)")
            p.add_argument(
                "--dump-grounding",
                metavar="PATH",
                help="write the ground program to PATH ('-' for stdout)",
            )

    p = sub.add_parser("infer", help="MAP inference over a rules file and a data file")
    p.add_argument("--rules", required=True)
    p.add_argument("--data", required=True)
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle", help="exhaustive grid-search inference (small problems)")
    p.add_argument("--rules", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--step", type=float, default=0.01, help="grid resolution (default 0.01)")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("extract", help="extract triplets from dependency parses")
    p.add_argument("--parses", required=True, help="CoNLL-style parse file")
    p.add_argument("--vocab", required=True, help="relation vocabulary, one phrase per line")
    p.add_argument("--embeddings", action="append", help="embedding file (repeatable, max 2)")
    p.add_argument("--sims", help="stub similarity table")
    p.add_argument(
        "--mode", choices=("caption", "question"), default="caption",
        help="caption mode emits has_img records, question mode has_q",
    )
    common(p, grounding=False)
    p.add_argument(
        "--dump-grounding",
        metavar="PATH",
        help="accepted for audit parity; extraction grounds nothing",
    )
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("answer", help="rank the candidate answers of a question instance")
    p.add_argument("--instance", required=True, help="instance directory")
    p.add_argument("--embeddings", action="append", help="embedding file (repeatable, max 2)")
    p.add_argument(
        "--evidence",
        metavar="PHRASE",
        help="also print evidence for PHRASE (or 'all')",
    )
    common(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("learn", help="fit rule weights from labeled data files")
    p.add_argument("--rules", required=True)
    p.add_argument(
        "--data", required=True, action="append",
        help="labeled data file, one per training instance (repeatable)",
    )
    common(p)
    p.set_defaults(func=cmd_learn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except EXPECTED_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        log.exception("unexpected failure")
        print(f"internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
