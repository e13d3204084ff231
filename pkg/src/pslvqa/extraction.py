"""Triplet extraction from dependency-parsed captions and questions.

Input sentences are pre-parsed, CoNLL-style: one token per line with six
tab- or space-separated columns (index, form, lemma, pos, head, deprel),
sentences separated by blank lines, optional `#conf=FLOAT` comment carrying
the caption confidence.

Candidate nodes are nouns and adjectives (noun-phrase heads: nouns serving
as compound modifiers of another noun are folded into their head). In
questions the Wh word becomes the focus node `?x`. For every ordered node
pair the connecting evidence is the surface linking phrase between them and
the lemmas interior to their dependency path; the predicted relation is the
vocabulary entry most similar to either feature.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .logic import FOCUS
from .similarity import SimilarityOracle, normalize_phrase

log = logging.getLogger(__name__)

FALLBACK_RELATION = "near"
DEFAULT_MAX_PAIR_DISTANCE = 10

NOUN_POS = {"NOUN", "PROPN", "NN", "NNS", "NNP", "NNPS"}
ADJ_POS = {"ADJ", "JJ", "JJR", "JJS"}
WH_POS = {"WP", "WP$", "WDT", "WRB"}
WH_WORDS = {"what", "which", "who", "whom", "whose", "where", "when", "why", "how"}
COMPOUND_RELS = {"compound", "nn", "flat", "mwe"}


class ExtractionError(ValueError):
    """Malformed parse input."""


@dataclass(frozen=True)
class Token:
    index: int  # 1-based position
    form: str
    lemma: str
    pos: str
    head: int  # 0 means root
    deprel: str


@dataclass
class ParsedSentence:
    tokens: list
    confidence: float = 1.0

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]


@dataclass(frozen=True)
class Node:
    """A candidate entity/attribute mention; focus nodes stand for `?x`."""

    index: int
    phrase: str
    is_focus: bool = False


@dataclass(frozen=True)
class Features:
    """Connecting evidence for a node pair."""

    linking_phrase: str
    dep_path_phrase: str


@dataclass(frozen=True)
class Triplet:
    node1: str
    rel: str
    node2: str
    confidence: float
    source: str  # "image" or "question"


_CONF_RE = re.compile(r"#\s*conf\s*=\s*([-+0-9.eE]+)")


def read_parses(source: Union[str, Path, Iterable[str]]) -> list:
    """Read blank-line-separated CoNLL-style sentences.

    Strings and Paths name a file; pass an iterable of lines for in-memory
    content (matching the other loaders in this package).
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)

    sentences: list[ParsedSentence] = []
    tokens: list[Token] = []
    conf = 1.0

    def flush(lineno: int) -> None:
        nonlocal tokens, conf
        if tokens:
            sentences.append(_validate_sentence(tokens, conf, lineno))
        tokens = []
        conf = 1.0

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            flush(lineno)
            continue
        if line.startswith("#"):
            m = _CONF_RE.match(line)
            if m:
                try:
                    conf = float(m.group(1))
                except ValueError:
                    raise ExtractionError(f"line {lineno}: bad confidence {m.group(1)!r}")
                if not (0.0 <= conf <= 1.0):
                    raise ExtractionError(f"line {lineno}: confidence {conf} outside [0, 1]")
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) != 6:
            raise ExtractionError(
                f"line {lineno}: expected 6 columns (index form lemma pos head deprel), got {len(cols)}"
            )
        try:
            idx, head = int(cols[0]), int(cols[4])
        except ValueError:
            raise ExtractionError(f"line {lineno}: index and head must be integers") from None
        tokens.append(Token(idx, cols[1], cols[2], cols[3], head, cols[5]))
    flush(len(lines) + 1)
    return sentences


def _validate_sentence(tokens: list, conf: float, lineno: int) -> ParsedSentence:
    n = len(tokens)
    where = f"sentence ending before line {lineno}"
    for want, tok in enumerate(tokens, start=1):
        if tok.index != want:
            raise ExtractionError(f"{where}: token indices must run 1..{n}")
        if not (0 <= tok.head <= n) or tok.head == tok.index:
            raise ExtractionError(f"{where}: token {tok.index} has bad head {tok.head}")
    roots = [t for t in tokens if t.head == 0]
    if len(roots) != 1:
        raise ExtractionError(f"{where}: expected exactly one root, found {len(roots)}")
    for tok in tokens:
        seen = set()
        cur = tok.index
        while cur != 0:
            if cur in seen:
                raise ExtractionError(f"{where}: dependency cycle at token {cur}")
            seen.add(cur)
            cur = tokens[cur - 1].head
    return ParsedSentence(tokens, conf)


# -- node and pair extraction ---------------------------------------------------


def _is_wh(tok: Token) -> bool:
    return tok.pos in WH_POS or tok.form.lower() in WH_WORDS


def extract_nodes(sentence: ParsedSentence, source: str) -> list:
    """Nouns, adjectives, and (for questions) the Wh focus word."""
    nodes = []
    for tok in sentence.tokens:
        if source == "question" and _is_wh(tok):
            nodes.append(Node(tok.index, FOCUS, True))
            continue
        if tok.pos in NOUN_POS:
            head = sentence.token(tok.head) if tok.head else None
            if (
                tok.deprel in COMPOUND_RELS
                and head is not None
                and head.pos in NOUN_POS
            ):
                continue  # folded into its noun-phrase head
            nodes.append(Node(tok.index, tok.form.lower()))
        elif tok.pos in ADJ_POS:
            nodes.append(Node(tok.index, tok.form.lower()))
    return nodes


def extract_pairs(
    sentence: ParsedSentence,
    source: str = "image",
    max_distance: int = DEFAULT_MAX_PAIR_DISTANCE,
) -> list:
    """Ordered candidate node pairs (first node precedes the second)."""
    if source not in ("image", "question"):
        raise ExtractionError(f"source must be 'image' or 'question', got {source!r}")
    nodes = extract_nodes(sentence, source)
    pairs = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            a, b = nodes[i], nodes[j]
            if a.is_focus and b.is_focus:
                continue
            if b.index - a.index > max_distance:
                continue
            pairs.append((a, b))
    return pairs


def connecting_features(sentence: ParsedSentence, pair: tuple) -> Features:
    """Surface linking phrase and dependency-path interior lemmas."""
    a, b = pair
    lo, hi = min(a.index, b.index), max(a.index, b.index)
    linking = " ".join(t.form.lower() for t in sentence.tokens[lo : hi - 1])

    path = _tree_path(sentence, a.index, b.index)
    interior = [sentence.token(i).lemma.lower() for i in path[1:-1]]
    return Features(linking, " ".join(interior))


def _tree_path(sentence: ParsedSentence, start: int, end: int) -> list:
    """Unique undirected path between two tokens in the dependency tree."""
    if start == end:
        return [start]
    up_a = []
    cur = start
    while cur != 0:
        up_a.append(cur)
        cur = sentence.token(cur).head
    pos_in_a = {tok: i for i, tok in enumerate(up_a)}
    up_b = []
    cur = end
    while cur != 0 and cur not in pos_in_a:
        up_b.append(cur)
        cur = sentence.token(cur).head
    if cur == 0:
        raise ExtractionError(f"tokens {start} and {end} are not connected")
    return up_a[: pos_in_a[cur] + 1] + list(reversed(up_b))


# -- relation prediction ----------------------------------------------------------


@dataclass
class RelationVocabulary:
    """Candidate relation phrases, normalized, unique, lexicographically sorted."""

    phrases: list

    def __post_init__(self) -> None:
        seen = []
        met = set()
        for p in self.phrases:
            q = normalize_phrase(p)
            if not q:
                continue
            if q in met:
                log.warning("duplicate vocabulary phrase %r dropped", q)
                continue
            met.add(q)
            seen.append(q)
        self.phrases = sorted(seen)
        if not self.phrases:
            raise ExtractionError("relation vocabulary is empty")


def load_vocabulary(source: Union[str, Path, Iterable[str]]) -> RelationVocabulary:
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    return RelationVocabulary([l for l in lines if l.strip()])


def predict_relation(
    features: Features, vocab: RelationVocabulary, oracle: SimilarityOracle
) -> tuple:
    """Best-matching vocabulary relation and its confidence.

    Scores each candidate by the larger of its similarity to the linking
    phrase and to the dependency-path phrase. Ties break lexicographically
    (the vocabulary is sorted). Empty or fully unmatched features fall back
    to ("near", 0.0).
    """
    feats = [f for f in (features.linking_phrase, features.dep_path_phrase) if f.strip()]
    if not feats:
        log.debug("no connecting features; falling back to %r", FALLBACK_RELATION)
        return FALLBACK_RELATION, 0.0
    best_rel: Optional[str] = None
    best = 0.0
    for rel in vocab.phrases:
        score = max(oracle.similarity(f, rel) for f in feats)
        if score > best:
            best, best_rel = score, rel
    if best_rel is None:
        log.debug("no vocabulary match; falling back to %r", FALLBACK_RELATION)
        return FALLBACK_RELATION, 0.0
    return best_rel, best


# -- triplet assembly ---------------------------------------------------------------


def captions_to_triplets(
    sentences: Sequence[ParsedSentence],
    vocab: RelationVocabulary,
    oracle: SimilarityOracle,
    max_distance: int = DEFAULT_MAX_PAIR_DISTANCE,
) -> list:
    """Image triplets; confidence = caption confidence x relation confidence.

    Duplicate (node1, rel, node2) triplets keep the maximum confidence;
    first-occurrence order is preserved.
    """
    out: dict = {}
    for sent in sentences:
        for pair in extract_pairs(sent, "image", max_distance):
            feats = connecting_features(sent, pair)
            rel, conf = predict_relation(feats, vocab, oracle)
            key = (pair[0].phrase, rel, pair[1].phrase)
            conf = sent.confidence * conf
            if key not in out or conf > out[key]:
                out[key] = conf
    return [Triplet(n1, r, n2, c, "image") for (n1, r, n2), c in out.items()]


def question_to_triplets(
    sentence: ParsedSentence,
    vocab: RelationVocabulary,
    oracle: SimilarityOracle,
    max_distance: int = DEFAULT_MAX_PAIR_DISTANCE,
) -> list:
    """Question triplets; confidence is the relation confidence alone.

    The Wh word appears as the focus constant `?x`. Questions without any
    candidate node produce no triplets (logged).
    """
    pairs = extract_pairs(sentence, "question", max_distance)
    if not pairs:
        log.warning("question yields no candidate node pairs")
        return []
    out: dict = {}
    for pair in pairs:
        feats = connecting_features(sentence, pair)
        rel, conf = predict_relation(feats, vocab, oracle)
        key = (pair[0].phrase, rel, pair[1].phrase)
        if key not in out or conf > out[key]:
            out[key] = conf
    return [Triplet(n1, r, n2, c, "question") for (n1, r, n2), c in out.items()]
