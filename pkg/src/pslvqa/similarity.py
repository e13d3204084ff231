"""Phrase similarity from word embeddings, with a stub-table variant for tests.

A phrase vector is the arithmetic mean of its in-vocabulary token vectors.
Similarity is cosine clamped to [0, 1]; with two embedding stores the score
is the average of the two clamped cosines. Phrases with no in-vocabulary
token fall back to exact string match (1.0 iff equal after normalization).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)


class SimilarityError(ValueError):
    """Malformed embedding file or stub table."""


@dataclass
class EmbeddingStore:
    """Word -> vector map; all vectors share one dimension, keys lowercase."""

    name: str
    dim: int
    vectors: dict

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(source: Union[str, Path, Iterable[str]], name: str = "") -> EmbeddingStore:
    """Read a text embedding file: optional `COUNT DIM` header, then
    `word v1 v2 ... vd` per line. Malformed lines raise with their number."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        lines = path.read_text(encoding="utf-8").splitlines()
        name = name or path.name
    else:
        lines = list(source)
    vectors: dict = {}
    dim: Optional[int] = None
    start = 0
    if lines:
        first = lines[0].split()
        if len(first) == 2:
            try:
                _count, dim = int(first[0]), int(first[1])
                start = 1
            except ValueError:
                pass
    for lineno in range(start, len(lines)):
        line = lines[lineno].rstrip("\n")
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 2:
            raise SimilarityError(f"line {lineno + 1}: no vector components")
        word = parts[0].lower()
        try:
            vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError:
            raise SimilarityError(f"line {lineno + 1}: non-numeric vector component") from None
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise SimilarityError(
                f"line {lineno + 1}: dimension {vec.shape[0]} != expected {dim}"
            )
        if word in vectors:
            log.warning("duplicate embedding for %r: last one wins", word)
        vectors[word] = vec
    if not vectors:
        raise SimilarityError("embedding source contains no vectors")
    return EmbeddingStore(name or "embeddings", int(dim), vectors)


def normalize_phrase(phrase: str) -> str:
    return " ".join(phrase.lower().split())


def phrase_vector(store: EmbeddingStore, phrase: Union[str, Sequence[str]]) -> Optional[np.ndarray]:
    """Mean of the in-vocabulary token vectors; None if every token is OOV."""
    tokens = phrase.split() if isinstance(phrase, str) else list(phrase)
    if not tokens:
        raise SimilarityError("phrase must contain at least one token")
    hits = [store.vectors[t.lower()] for t in tokens if t.lower() in store.vectors]
    if not hits:
        return None
    return np.mean(hits, axis=0)


def _clamped_cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v) / (nu * nv))
    if math.isnan(c):
        return 0.0
    return min(1.0, max(0.0, c))


def load_stub_table(source: Union[str, Path, Iterable[str]]) -> dict:
    """Parse `phrase1 | phrase2 | sim` lines into a symmetric override map."""
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    table: dict = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            raise SimilarityError(f"line {lineno}: expected 'phrase1 | phrase2 | sim'")
        a, b = normalize_phrase(parts[0]), normalize_phrase(parts[1])
        if not a or not b:
            raise SimilarityError(f"line {lineno}: empty phrase")
        try:
            value = float(parts[2])
        except ValueError:
            raise SimilarityError(f"line {lineno}: bad similarity {parts[2]!r}") from None
        if not (0.0 <= value <= 1.0):
            raise SimilarityError(f"line {lineno}: similarity {value} outside [0, 1]")
        key = (a, b) if a <= b else (b, a)
        if key in table:
            log.warning("duplicate stub entry %s | %s: last one wins", a, b)
        table[key] = value
    return table


class SimilarityOracle:
    """Scores phrase pairs via overrides first, then embedding stores.

    With no stores and no override hit, the score is the exact-match
    fallback: 1.0 iff the normalized phrases are equal, else 0.0. Results
    are cached; scoring is symmetric and always lands in [0, 1].
    """

    def __init__(
        self,
        stores: Sequence[EmbeddingStore] = (),
        overrides: Optional[Mapping] = None,
    ):
        if len(stores) > 2:
            raise SimilarityError("at most two embedding stores are supported")
        self.stores = list(stores)
        self.overrides = dict(overrides or {})
        self._cache: dict = {}
        self._vec_cache: dict = {}

    def _vector(self, store_idx: int, phrase: str) -> Optional[np.ndarray]:
        key = (store_idx, phrase)
        if key not in self._vec_cache:
            self._vec_cache[key] = phrase_vector(self.stores[store_idx], phrase)
        return self._vec_cache[key]

    def similarity(self, p1: str, p2: str) -> float:
        a, b = normalize_phrase(p1), normalize_phrase(p2)
        if not a or not b:
            raise SimilarityError("phrases must be non-empty")
        key = (a, b) if a <= b else (b, a)
        if key in self._cache:
            return self._cache[key]
        if key in self.overrides:
            out = float(self.overrides[key])
        else:
            sims = []
            for k in range(len(self.stores)):
                va = self._vector(k, a)
                vb = self._vector(k, b)
                if va is not None and vb is not None:
                    sims.append(_clamped_cosine(va, vb))
            if sims:
                out = float(sum(sims) / len(sims))
            else:
                out = 1.0 if a == b else 0.0
        self._cache[key] = out
        return out
