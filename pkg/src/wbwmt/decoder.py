"""Word-by-word translation with a language-model-guided beam search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ngram_lm
from .crossmap import LinearMap, hub_penalties
from .embed import EmbeddingTable, top_k

# q values below this are treated as zero (cosine of exactly -1)
Q_EPSILON = 1e-12


@dataclass
class DecoderConfig:
    lambda_emb: float = 1.0
    lambda_lm: float = 0.1
    beam_size: int = 10
    candidates_per_word: int = 100
    translate_vocab_limit: int = 50000
    csls_k: int = 10
    # "cosine" keeps d(f, e) a raw cosine; "csls" feeds the clipped CSLS score
    lexical_similarity: str = "cosine"

    def __post_init__(self):
        if self.lambda_emb < 0 or self.lambda_lm < 0:
            raise ValueError("interpolation weights must be non-negative")
        if self.beam_size < 1 or self.candidates_per_word < 1 or self.translate_vocab_limit < 1:
            raise ValueError("beam_size, candidates_per_word and translate_vocab_limit must be >= 1")
        if self.lexical_similarity not in ("cosine", "csls"):
            raise ValueError("lexical_similarity must be 'cosine' or 'csls'")


@dataclass(frozen=True)
class Candidate:
    word: str
    similarity: float


@dataclass(frozen=True)
class CopyMarker:
    """A source token passed through verbatim."""
    token: str


@dataclass(frozen=True)
class TranslationHypothesis:
    target_words: tuple[str, ...]
    accumulated_score: float
    ranks: tuple[int, ...] = ()
    lm_history: tuple[str, ...] = ()


def lexical_score(d: float) -> float:
    """Map a similarity in [-1, 1] linearly onto [0, 1]."""
    if d < -1 - 1e-9 or d > 1 + 1e-9:
        raise ValueError(f"similarity {d} outside [-1, 1]")
    return (min(max(d, -1.0), 1.0) + 1.0) / 2.0


def combined_score(q: float, lm_logprob: float, cfg: DecoderConfig) -> float:
    """``lambda_emb * ln q + lambda_lm * lm_logprob`` (natural-log LM probability)."""
    if q <= 0:
        raise ValueError("lexical score must be positive")
    return cfg.lambda_emb * math.log(q) + cfg.lambda_lm * lm_logprob


class Lexicon:
    """Mapped source space plus CSLS penalties, computed once per mapping."""

    def __init__(self, src: EmbeddingTable, tgt: EmbeddingTable, linmap: LinearMap, csls_k: int = 10):
        if not (src.normalized and tgt.normalized):
            raise ValueError("embedding tables must be normalized")
        if linmap.dim != src.dim or src.dim != tgt.dim:
            raise ValueError("mapping dimension does not match the embeddings")
        self.src = src
        self.tgt = tgt
        self.mapped = linmap.apply(src.vectors)
        self.k = min(csls_k, len(src), len(tgt))
        self.r_tgt = hub_penalties(tgt.vectors, self.mapped, self.k)

    def scores(self, source_index: int) -> tuple[np.ndarray, np.ndarray]:
        """``(cosine, csls)`` of one source word against every target word."""
        x = self.mapped[source_index]
        cos = self.tgt.vectors @ x
        n = len(cos)
        r_src = np.partition(cos, n - self.k)[n - self.k:].mean()
        return cos, 2 * cos - r_src - self.r_tgt

    def shortlist(self, word: str, cfg: DecoderConfig) -> list[Candidate] | CopyMarker:
        i = self.src.index.get(word)
        if i is None or i >= cfg.translate_vocab_limit:
            return CopyMarker(word)
        cos, csls = self.scores(i)
        best = top_k(csls, min(cfg.candidates_per_word, len(csls)))
        sim = cos if cfg.lexical_similarity == "cosine" else np.clip(csls, -1.0, 1.0)
        out = []
        for j in best:
            d = float(np.clip(sim[j], -1.0, 1.0))
            if lexical_score(d) <= Q_EPSILON:
                continue
            out.append(Candidate(self.tgt.words[j], d))
        return out


def build_shortlists(src_sentence: Sequence[str], lexicon: Lexicon, cfg: DecoderConfig):
    """One candidate list (or copy marker) per source token."""
    cache: dict[str, list[Candidate] | CopyMarker] = {}
    out = []
    for tok in src_sentence:
        if tok not in cache:
            cache[tok] = lexicon.shortlist(tok, cfg)
        out.append(cache[tok])
    return out


def _lm_ln(lm: ngram_lm.NgramModel, history: Sequence[str], word: str) -> float:
    return ngram_lm.score_word(lm, history, word) * ngram_lm.LN10


def _sort_key(h: TranslationHypothesis):
    return (-h.accumulated_score, h.ranks, h.target_words)


def beam_search(shortlists, lm: ngram_lm.NgramModel, cfg: DecoderConfig) -> TranslationHypothesis:
    """Monotone beam search; returns the best complete hypothesis.

    Copy markers extend every hypothesis with the copied token at q = 1; the
    language model sees them as the unknown token.  After the last position
    the sentence-end probability is added.
    """
    lm_ctx = lm.order - 1
    beam = [TranslationHypothesis((), 0.0, (), (ngram_lm.BOS,))]
    lm_cache: dict[tuple, float] = {}

    def lm_term(history, word):
        key = (history[len(history) - lm_ctx:] if lm_ctx else (), word)
        if key not in lm_cache:
            lm_cache[key] = _lm_ln(lm, key[0], word)
        return lm_cache[key]

    for entry in shortlists:
        if isinstance(entry, CopyMarker):
            options = [(entry.token, 1.0, ngram_lm.UNK)]
        else:
            options = [(c.word, lexical_score(c.similarity), c.word) for c in entry]
        if not options:
            raise ValueError("empty candidate list")
        extended = []
        for hyp in beam:
            for rank, (word, q, lm_word) in enumerate(options):
                s = hyp.accumulated_score + combined_score(q, lm_term(hyp.lm_history, lm_word), cfg)
                extended.append(TranslationHypothesis(
                    hyp.target_words + (word,), s, hyp.ranks + (rank,), hyp.lm_history + (lm_word,)))
        extended.sort(key=_sort_key)
        beam = extended[:cfg.beam_size]

    finals = [
        TranslationHypothesis(h.target_words,
                              h.accumulated_score + cfg.lambda_lm * lm_term(h.lm_history, ngram_lm.EOS),
                              h.ranks, h.lm_history)
        for h in beam
    ]
    finals.sort(key=_sort_key)
    return finals[0]


def beam_translate(src_sentence: Sequence[str], shortlists, lm: ngram_lm.NgramModel,
                   cfg: DecoderConfig) -> list[str]:
    if len(src_sentence) == 0:
        return []
    if len(shortlists) != len(src_sentence):
        raise ValueError("one shortlist per source position is required")
    return list(beam_search(shortlists, lm, cfg).target_words)


def path_score(words: Sequence[str], qs: Sequence[float], lm_words: Sequence[str],
               lm: ngram_lm.NgramModel, cfg: DecoderConfig) -> float:
    """Total score of one complete path, end-of-sentence term included."""
    history = [ngram_lm.BOS]
    total = 0.0
    for q, w in zip(qs, lm_words):
        total += combined_score(q, _lm_ln(lm, history, w), cfg)
        history.append(w)
    return total + cfg.lambda_lm * _lm_ln(lm, history, ngram_lm.EOS)


class Translator:
    """Shortlist construction and beam search bundled for whole sentences."""

    def __init__(self, lexicon: Lexicon, lm: ngram_lm.NgramModel, cfg: DecoderConfig):
        self.lexicon = lexicon
        self.lm = lm
        self.cfg = cfg
        self._shortlists: dict[str, list[Candidate] | CopyMarker] = {}

    def shortlists(self, tokens: Sequence[str]):
        out = []
        for tok in tokens:
            entry = self._shortlists.get(tok)
            if entry is None:
                entry = self._shortlists[tok] = self.lexicon.shortlist(tok, self.cfg)
            out.append(entry)
        return out

    def translate(self, tokens: Sequence[str]) -> TranslationHypothesis:
        if not tokens:
            return TranslationHypothesis((), 0.0)
        return beam_search(self.shortlists(tokens), self.lm, self.cfg)
