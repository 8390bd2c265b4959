"""Word embedding tables: loading, normalization and exact nearest-neighbor search."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

BLOCK_ROWS = 4096


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    words: tuple[str, ...]
    vectors: np.ndarray
    normalized: bool = False
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.words):
            raise EmbeddingFormatError(
                f"expected {len(self.words)} rows, got matrix of shape {vectors.shape}")
        index = {}
        for i, w in enumerate(self.words):
            if w in index:
                raise EmbeddingFormatError(f"duplicate word {w!r}")
            index[w] = i
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "index", index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        try:
            return self.vectors[self.index[word]]
        except KeyError:
            raise KeyError(f"unknown word {word!r}") from None

    def head(self, n: int) -> "EmbeddingTable":
        """Table restricted to the ``n`` most frequent words."""
        n = min(n, len(self))
        return EmbeddingTable(self.words[:n], self.vectors[:n], self.normalized)


def load_embeddings(stream: TextIO | Iterable[str]) -> EmbeddingTable:
    """Parse word2vec-style text: a ``<count> <dim>`` header, then one word per line."""
    lines = iter(stream)
    try:
        header = next(lines)
    except StopIteration:
        raise EmbeddingFormatError("malformed header: empty input") from None
    parts = header.split()
    try:
        count, dim = (int(p) for p in parts)
    except ValueError:
        raise EmbeddingFormatError(f"malformed header: {header.strip()!r}") from None
    if count < 0 or dim <= 0:
        raise EmbeddingFormatError(f"malformed header: {header.strip()!r}")

    words = []
    vectors = np.empty((count, dim), dtype=np.float64)
    for lineno, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if len(words) == count:
            raise EmbeddingFormatError(f"row count mismatch: more than {count} rows")
        word, *values = line.rstrip().split(" ")
        if len(values) != dim:
            raise EmbeddingFormatError(
                f"line {lineno}: dimension mismatch, expected {dim} values, got {len(values)}")
        try:
            row = np.array([float(v) for v in values])
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: non-numeric component") from None
        if not np.all(np.isfinite(row)):
            raise EmbeddingFormatError(f"line {lineno}: non-finite component")
        if not np.any(row):
            raise EmbeddingFormatError(f"line {lineno}: zero vector for {word!r}")
        vectors[len(words)] = row
        words.append(word)
    if len(words) != count:
        raise EmbeddingFormatError(f"row count mismatch: header says {count}, found {len(words)}")
    return EmbeddingTable(tuple(words), vectors)


def read_embeddings(path, normalize_rows: bool = True) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        table = load_embeddings(f)
    return normalize(table) if normalize_rows else table


def write_embeddings(table: EmbeddingTable, stream: TextIO) -> None:
    stream.write(f"{len(table)} {table.dim}\n")
    for word, row in zip(table.words, table.vectors):
        stream.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")


def dumps_embeddings(table: EmbeddingTable) -> str:
    buf = io.StringIO()
    write_embeddings(table, buf)
    return buf.getvalue()


def normalize(table: EmbeddingTable) -> EmbeddingTable:
    norms = np.linalg.norm(table.vectors, axis=1)
    if np.any(norms == 0):
        bad = table.words[int(np.argmin(norms))]
        raise EmbeddingFormatError(f"zero-norm row for {bad!r}")
    return EmbeddingTable(table.words, table.vectors / norms[:, None], normalized=True)


def normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector")
    return m / norms


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, descending, ties to the lower index."""
    scores = np.asarray(scores)
    n = scores.shape[0]
    if k <= 0:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of candidates ({n})")
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        pool = np.flatnonzero(scores >= kth)
    else:
        pool = np.arange(n)
    order = np.argsort(-scores[pool], kind="stable")
    return pool[order[:k]]


def top_k_neighbors(table: EmbeddingTable, query, k: int, scores=None) -> list[tuple[int, float]]:
    """Exact top-``k`` rows of ``table`` for ``query``.

    Ranks by cosine unless a precomputed score vector over the table
    (e.g. CSLS) is passed as ``scores``.
    """
    if len(table) == 0:
        raise ValueError("empty table")
    if not table.normalized:
        raise ValueError("table must be normalized")
    if scores is None:
        q = np.asarray(query, dtype=np.float64)
        scores = table.vectors @ (q / np.linalg.norm(q))
    else:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(table),):
            raise ValueError("score vector does not match the table")
    idx = top_k(scores, k)
    return [(int(i), float(scores[i])) for i in idx]


def batch_top_k(queries: np.ndarray, targets: np.ndarray, k: int,
                block: int = BLOCK_ROWS) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-``k`` dot-product neighbors of every query row, in row blocks.

    Returns ``(indices, scores)``, each of shape ``(len(queries), k)``.
    """
    n = queries.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    val = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, block):
        sims = queries[start:start + block] @ targets.T
        for r, row in enumerate(sims):
            best = top_k(row, k)
            idx[start + r] = best
            val[start + r] = row[best]
    return idx, val


def mean_top_k_similarity(queries: np.ndarray, targets: np.ndarray, k: int,
                          block: int = BLOCK_ROWS) -> np.ndarray:
    """Mean of the ``k`` largest dot products of each query row against ``targets``."""
    if k > targets.shape[0]:
        raise ValueError(f"k={k} exceeds the opposing vocabulary size {targets.shape[0]}")
    out = np.empty(queries.shape[0], dtype=np.float64)
    for start in range(0, queries.shape[0], block):
        sims = queries[start:start + block] @ targets.T
        m = sims.shape[1]
        top = np.partition(sims, m - k, axis=1)[:, m - k:]
        out[start:start + block] = top.mean(axis=1)
    return out
