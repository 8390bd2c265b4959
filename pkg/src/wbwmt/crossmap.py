"""Unsupervised cross-lingual mapping between two embedding spaces.

The mapping is a d x d matrix ``W`` applied to row vectors (``x @ W``).
It is initialized adversarially, then refined by alternating a
mutual-nearest-neighbor dictionary under CSLS with an orthogonal
Procrustes fit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .embed import BLOCK_ROWS, EmbeddingTable, mean_top_k_similarity, normalize_rows

log = logging.getLogger(__name__)


class EmptyDictionaryError(RuntimeError):
    """No mutual nearest neighbors were found; the mapping is degenerate."""


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class LinearMap:
    matrix: np.ndarray
    orthogonal: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(np.eye(dim), orthogonal=False)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Map row vectors and rescale them to unit length."""
        return normalize_rows(np.asarray(vectors, dtype=np.float64) @ self.matrix)

    def orthogonality_error(self) -> float:
        m = self.matrix
        return float(np.linalg.norm(m.T @ m - np.eye(m.shape[0])))


def write_map(linmap: LinearMap, stream: TextIO) -> None:
    d = linmap.dim
    stream.write(f"{d}\n")
    for row in linmap.matrix:
        stream.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_map(stream: TextIO) -> LinearMap:
    lines = [line for line in stream if line.strip()]
    if not lines:
        raise ValueError("empty mapping file")
    try:
        d = int(lines[0])
    except ValueError:
        raise ValueError(f"malformed mapping header {lines[0].strip()!r}") from None
    if len(lines) - 1 != d:
        raise ValueError(f"mapping file declares {d} rows, found {len(lines) - 1}")
    m = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    if m.shape != (d, d):
        raise ValueError(f"mapping matrix has shape {m.shape}, expected {(d, d)}")
    orthogonal = bool(np.linalg.norm(m.T @ m - np.eye(d)) < 1e-6)
    return LinearMap(m, orthogonal=orthogonal)


@dataclass(frozen=True)
class BilingualDictionary:
    pairs: tuple[tuple[int, int], ...]
    source_vocab_limit: int
    target_vocab_limit: int

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate dictionary pairs")
        for i, j in self.pairs:
            if not (0 <= i < self.source_vocab_limit and 0 <= j < self.target_vocab_limit):
                raise ValueError(f"pair {(i, j)} outside the vocabulary limits")

    def __len__(self):
        return len(self.pairs)

    @property
    def source_indices(self) -> np.ndarray:
        return np.array([i for i, _ in self.pairs], dtype=np.int64)

    @property
    def target_indices(self) -> np.ndarray:
        return np.array([j for _, j in self.pairs], dtype=np.int64)


def write_dictionary(dictionary: BilingualDictionary, src: EmbeddingTable,
                     tgt: EmbeddingTable, stream: TextIO) -> None:
    for i, j in dictionary.pairs:
        stream.write(f"{src.words[i]}\t{tgt.words[j]}\n")


def read_dictionary(stream: TextIO, src: EmbeddingTable, tgt: EmbeddingTable) -> BilingualDictionary:
    """Read ``source<TAB>target`` lines, skipping pairs with an out-of-vocabulary side."""
    pairs = []
    seen = set()
    for line in stream:
        line = line.rstrip("\n")
        if not line:
            continue
        s, _, t = line.partition("\t")
        if s in src.index and t in tgt.index:
            pair = (src.index[s], tgt.index[t])
            if pair not in seen:
                seen.add(pair)
                pairs.append(pair)
        else:
            log.debug("skipping OOV dictionary entry %r", line)
    return BilingualDictionary(tuple(pairs), len(src), len(tgt))


@dataclass
class AdversarialConfig:
    discriminator_hidden: int = 512
    epochs: int = 10
    iterations_per_epoch: int = 1000
    discriminator_steps: int = 5
    batch_size: int = 32
    learning_rate: float = 0.1
    map_learning_rate: float | None = None
    smoothing: float = 0.1
    beta_ortho: float = 0.01
    leaky_slope: float = 0.2
    selection_vocab: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.smoothing < 0.5:
            raise ValueError("smoothing must be in [0, 0.5)")
        if self.beta_ortho <= 0:
            raise ValueError("beta_ortho must be positive")
        if self.discriminator_hidden < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid adversarial configuration")


@dataclass
class CrossmapConfig:
    v_cross_train: int = 100000
    refinement_iters: int = 10
    csls_k: int = 10
    mutual_metric: str = "csls"
    adversarial: AdversarialConfig = field(default_factory=AdversarialConfig)

    def __post_init__(self):
        if isinstance(self.adversarial, dict):
            self.adversarial = AdversarialConfig(**self.adversarial)
        if self.v_cross_train < 1 or self.csls_k < 1 or self.refinement_iters < 0:
            raise ValueError("invalid crossmap configuration")
        if self.mutual_metric not in ("csls", "cosine"):
            raise ValueError("mutual_metric must be 'csls' or 'cosine'")


# -- linear algebra ---------------------------------------------------------

def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U diag(s) V^T`` with a deterministic sign convention.

    The largest-magnitude entry of every column of ``U`` is made positive
    (first one wins on exact ties) and the matching column of ``V`` flipped.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("svd expects a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input has non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    v = vt.T
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, s, v * signs


def procrustes_solve(dictionary: BilingualDictionary, src: EmbeddingTable,
                     tgt: EmbeddingTable) -> LinearMap:
    """Orthogonal ``W`` minimizing ``||X W - Y||_F`` over the dictionary pairs."""
    if len(dictionary) == 0:
        raise EmptyDictionaryError("cannot solve Procrustes on an empty dictionary")
    x = src.vectors[dictionary.source_indices]
    y = tgt.vectors[dictionary.target_indices]
    return procrustes(x, y)


def procrustes(x: np.ndarray, y: np.ndarray) -> LinearMap:
    if x.shape != y.shape or x.shape[0] == 0:
        raise ValueError("Procrustes needs two non-empty matrices of equal shape")
    u, _, v = svd(x.T @ y)
    return LinearMap(u @ v.T, orthogonal=True)


def orthogonalize_step(w: np.ndarray, beta: float) -> np.ndarray:
    """One step of ``W <- (1 + beta) W - beta (W W^T) W``."""
    return (1 + beta) * w - beta * (w @ w.T) @ w


# -- CSLS -------------------------------------------------------------------

def hub_penalties(queries: np.ndarray, targets: np.ndarray, k: int) -> np.ndarray:
    """Mean cosine of each (unit) query row to its ``k`` nearest target rows."""
    return mean_top_k_similarity(queries, targets, k)


def csls_penalties(mapped_src: np.ndarray, tgt_vectors: np.ndarray, k: int):
    """Return ``(r_src, r_tgt)`` for unit-norm mapped source and target rows."""
    return hub_penalties(mapped_src, tgt_vectors, k), hub_penalties(tgt_vectors, mapped_src, k)


def csls_scores(src_vec_mapped, tgt: EmbeddingTable, k: int, r_tgt) -> np.ndarray:
    """CSLS of one mapped source vector against every target word.

    ``score[j] = 2 cos(x, y_j) - r_src(x) - r_tgt[j]`` where ``r_src(x)`` is
    the mean cosine of ``x`` to its ``k`` nearest target words.
    """
    if k > len(tgt):
        raise ValueError(f"k={k} exceeds the target vocabulary size {len(tgt)}")
    x = np.asarray(src_vec_mapped, dtype=np.float64)
    x = x / np.linalg.norm(x)
    cos = tgt.vectors @ x
    top = np.partition(cos, len(cos) - k)[len(cos) - k:]
    return 2 * cos - top.mean() - np.asarray(r_tgt, dtype=np.float64)


def _mutual_argmax(a: np.ndarray, b: np.ndarray, k: int, metric: str):
    """Best b-row for every a-row and best a-row for every b-row, plus forward scores."""
    na, nb = a.shape[0], b.shape[0]
    k = min(k, na, nb)
    if metric == "csls":
        r_a, r_b = csls_penalties(a, b, k)
    else:
        r_a, r_b = np.zeros(na), np.zeros(nb)
    fwd = np.empty(na, dtype=np.int64)
    fwd_score = np.empty(na)
    bwd = np.zeros(nb, dtype=np.int64)
    bwd_score = np.full(nb, -np.inf)
    for start in range(0, na, BLOCK_ROWS):
        sims = a[start:start + BLOCK_ROWS] @ b.T
        scale = 2.0 if metric == "csls" else 1.0
        rows = np.arange(sims.shape[0])
        f = scale * sims - r_b[None, :]
        fwd[start:start + len(rows)] = np.argmax(f, axis=1)
        g = scale * sims - r_a[start:start + len(rows), None]
        col_best = np.argmax(g, axis=0)
        col_val = g[col_best, np.arange(nb)]
        better = col_val > bwd_score
        bwd[better] = col_best[better] + start
        bwd_score[better] = col_val[better]
        chosen = fwd[start:start + len(rows)]
        fwd_score[start:start + len(rows)] = (scale * sims[rows, chosen]
                                              - r_a[start:start + len(rows)] - r_b[chosen])
    return fwd, bwd, fwd_score


def mutual_pairs(src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap,
                 limit: int, k: int, metric: str = "csls"):
    """Mutual nearest-neighbor pairs among the top ``limit`` words of each side.

    Returns ``(source_indices, target_indices, scores)`` sorted by source index.
    """
    ns, nt = min(limit, len(src)), min(limit, len(tgt))
    a = linmap.apply(src.vectors[:ns])
    b = tgt.vectors[:nt]
    fwd, bwd, score = _mutual_argmax(a, b, k, metric)
    keep = bwd[fwd] == np.arange(ns)
    i = np.flatnonzero(keep)
    return i, fwd[i], score[i]


def build_mutual_nn_dictionary(src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap,
                               cfg: CrossmapConfig) -> BilingualDictionary:
    if linmap.dim != src.dim or src.dim != tgt.dim:
        raise ValueError("mapping dimension does not match the embeddings")
    i, j, _ = mutual_pairs(src, tgt, linmap, cfg.v_cross_train, cfg.csls_k, cfg.mutual_metric)
    if len(i) == 0:
        raise EmptyDictionaryError("no mutual nearest neighbors")
    return BilingualDictionary(tuple(zip(i.tolist(), j.tolist())),
                               min(cfg.v_cross_train, len(src)), min(cfg.v_cross_train, len(tgt)))


def mean_mutual_csls(src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap,
                     limit: int = 10000, k: int = 10) -> float:
    """Unsupervised model-selection criterion: mean CSLS over mutual pairs."""
    _, _, score = mutual_pairs(src, tgt, linmap, limit, k, "csls")
    return float(score.mean()) if len(score) else -math.inf


def translate_indices(src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap,
                      source_indices, k: int = 10) -> np.ndarray:
    """CSLS-nearest target index for each of the given source words."""
    source_indices = np.asarray(source_indices, dtype=np.int64)
    mapped_all = linmap.apply(src.vectors)
    k = min(k, len(src), len(tgt))
    r_tgt = hub_penalties(tgt.vectors, mapped_all, k)
    q = mapped_all[source_indices]
    # r_src is constant along a row, so it cannot change the argmax
    out = np.empty(len(q), dtype=np.int64)
    for start in range(0, len(q), BLOCK_ROWS):
        s = 2 * q[start:start + BLOCK_ROWS] @ tgt.vectors.T - r_tgt[None, :]
        out[start:start + BLOCK_ROWS] = np.argmax(s, axis=1)
    return out


def precision_at_1(src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap,
                   gold: BilingualDictionary, k: int = 10) -> float:
    """Fraction of gold source words whose CSLS translation is a gold target.

    Source words with several gold targets count as correct if any matches.
    """
    if len(gold) == 0:
        raise ValueError("empty gold dictionary")
    allowed: dict[int, set[int]] = {}
    for i, j in gold.pairs:
        allowed.setdefault(i, set()).add(j)
    sources = sorted(allowed)
    pred = translate_indices(src, tgt, linmap, sources, k)
    hits = sum(int(p) in allowed[s] for s, p in zip(sources, pred))
    return hits / len(sources)


# -- adversarial initialization --------------------------------------------

class Discriminator:
    """One-hidden-layer leaky-ReLU classifier predicting "comes from the source side"."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, slope: float = 0.2):
        self.slope = np.float32(slope)
        self.w1 = (rng.standard_normal((dim, hidden)) * math.sqrt(2.0 / dim)).astype(np.float32)
        self.b1 = np.zeros(hidden, dtype=np.float32)
        self.w2 = (rng.standard_normal(hidden) * math.sqrt(1.0 / hidden)).astype(np.float32)
        self.b2 = np.float32(0.0)

    def _forward(self, z):
        pre = z @ self.w1
        pre += self.b1
        # arithmetic gate; a masked select is several times slower here
        gate = (pre > 0).astype(np.float32)
        gate *= np.float32(1.0) - self.slope
        gate += self.slope
        hidden = pre * gate
        return hidden, gate, hidden @ self.w2 + self.b2

    def logits(self, z) -> np.ndarray:
        return self._forward(np.asarray(z, dtype=np.float32))[2]

    def train_step(self, z, targets, lr: float) -> float:
        """One SGD step on mean logistic loss; returns the loss before the step."""
        hidden, gate, logit = self._forward(z)
        prob = _sigmoid(logit)
        loss = _bce(logit, targets)
        g = (prob - targets) / len(targets)
        gh = g[:, None] * self.w2
        gh *= gate
        self.w2 -= lr * (hidden.T @ g)
        self.b2 -= lr * g.sum()
        self.w1 -= lr * (z.T @ gh)
        self.b1 -= lr * gh.sum(axis=0)
        return loss

    def input_gradient(self, z, targets) -> tuple[np.ndarray, float]:
        """Gradient of mean logistic loss w.r.t. the inputs (parameters untouched)."""
        _, gate, logit = self._forward(z)
        g = (_sigmoid(logit) - targets) / len(targets)
        return (g[:, None] * self.w2 * gate) @ self.w1.T, _bce(logit, targets)

    def accuracy(self, z, labels) -> float:
        return float(np.mean((self.logits(z) > 0) == (np.asarray(labels) > 0.5)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _bce(logit, targets) -> float:
    # log(1 + exp(-|x|)) form avoids overflow
    return float(np.mean(np.maximum(logit, 0) - logit * targets + np.log1p(np.exp(-np.abs(logit)))))


# overflow surfaces as a non-finite loss, which is checked explicitly
@np.errstate(over="ignore", invalid="ignore")
def adversarial_init(src: EmbeddingTable, tgt: EmbeddingTable, cfg: CrossmapConfig,
                     history: list | None = None) -> LinearMap:
    """Learn an initial mapping with no seed dictionary by fooling a discriminator.

    Each iteration trains the discriminator for a few steps on mapped
    source vs. target batches, then takes one SGD step on ``W`` with
    flipped labels followed by an orthogonalization step.  The ``W`` with
    the best mean mutual-pair CSLS at the end of an epoch is returned.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("empty embedding table")
    if src.dim != tgt.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {tgt.dim}")
    acfg = cfg.adversarial
    d = src.dim
    w = np.eye(d)
    if acfg.epochs == 0:
        return LinearMap(w, orthogonal=False)

    rng = np.random.default_rng(acfg.seed)
    disc = Discriminator(d, acfg.discriminator_hidden, rng, acfg.leaky_slope)
    xs = src.vectors[:min(cfg.v_cross_train, len(src))].astype(np.float32)
    ys = tgt.vectors[:min(cfg.v_cross_train, len(tgt))].astype(np.float32)
    bs = acfg.batch_size
    sm = np.float32(acfg.smoothing)
    dis_targets = np.concatenate([np.full(bs, 1 - sm), np.full(bs, sm)]).astype(np.float32)
    map_targets = np.full(bs, sm, dtype=np.float32)
    lr = acfg.learning_rate
    map_lr = lr if acfg.map_learning_rate is None else acfg.map_learning_rate
    steps = acfg.discriminator_steps

    best_w, best_crit = w.copy(), -math.inf
    for epoch in range(acfg.epochs):
        src_idx = rng.integers(0, len(xs), (acfg.iterations_per_epoch, steps + 1, bs))
        tgt_idx = rng.integers(0, len(ys), (acfg.iterations_per_epoch, steps, bs))
        for it in range(acfg.iterations_per_epoch):
            w32 = w.astype(np.float32)
            for s in range(steps):
                z = np.concatenate([xs[src_idx[it, s]] @ w32, ys[tgt_idx[it, s]]])
                dis_loss = disc.train_step(z, dis_targets, lr)
                if not math.isfinite(dis_loss):
                    raise DivergenceError("discriminator loss is not finite; lower the learning rate")
            xb = xs[src_idx[it, steps]]
            gz, map_loss = disc.input_gradient(xb @ w32, map_targets)
            if not math.isfinite(map_loss):
                raise DivergenceError("mapping loss is not finite; lower the learning rate")
            w = orthogonalize_step(w - map_lr * (xb.T @ gz).astype(np.float64), acfg.beta_ortho)
        if not np.all(np.isfinite(w)):
            raise DivergenceError("mapping diverged")
        crit = mean_mutual_csls(src, tgt, LinearMap(w), acfg.selection_vocab, cfg.csls_k)
        log.info("adversarial epoch %d: criterion %.5f", epoch, crit)
        if history is not None:
            history.append({"epoch": epoch, "criterion": crit})
        if crit > best_crit:
            best_w, best_crit = w.copy(), crit
    return LinearMap(best_w, orthogonal=False)


def refine(src: EmbeddingTable, tgt: EmbeddingTable, w0: LinearMap, cfg: CrossmapConfig,
           history: list | None = None) -> LinearMap:
    """Alternate dictionary induction and Procrustes ``cfg.refinement_iters`` times.

    Per-iteration dictionary sizes and mean CSLS are appended to ``history``.
    """
    w = w0
    for it in range(cfg.refinement_iters):
        dictionary = build_mutual_nn_dictionary(src, tgt, w, cfg)
        w = procrustes_solve(dictionary, src, tgt)
        if history is not None:
            crit = mean_mutual_csls(src, tgt, w, cfg.v_cross_train, cfg.csls_k)
            history.append({"iteration": it, "dictionary_size": len(dictionary), "mean_csls": crit})
        log.info("refinement %d: %d pairs", it, len(dictionary))
    return w
