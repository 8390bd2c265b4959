"""Deterministic synthetic data: a rotated-embedding pair and a toy language.

``python -m wbwmt.fixtures OUTDIR`` writes the files used by the tests and
the README walkthrough.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass

import numpy as np

from . import ngram_lm
from .crossmap import BilingualDictionary, LinearMap, write_dictionary, write_map
from .embed import EmbeddingTable, normalize, write_embeddings


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@dataclass
class RotationFixture:
    src: EmbeddingTable
    tgt: EmbeddingTable
    gold: BilingualDictionary
    rotation: np.ndarray


def clustered_points(n: int, d: int, rng: np.random.Generator, clusters: int = 8,
                     spread: float = 0.6) -> np.ndarray:
    """Unit vectors drawn from a Gaussian mixture with unequal cluster weights."""
    centers = rng.standard_normal((clusters, d))
    weights = rng.dirichlet(np.full(clusters, 2.0))
    labels = rng.choice(clusters, size=n, p=weights)
    x = centers[labels] + rng.standard_normal((n, d)) * spread
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def rotation_fixture(n: int = 500, d: int = 10, seed: int = 0, noise: float = 0.0,
                     shuffle: bool = True) -> RotationFixture:
    """Target vectors are source vectors times a random orthogonal matrix.

    Target rows are shuffled (unless ``shuffle`` is false) so that index
    equality carries no information; ``gold`` holds the true pairs.
    """
    rng = np.random.default_rng(seed)
    x = clustered_points(n, d, rng)
    q = random_orthogonal(d, rng)
    y = x @ q
    if noise:
        y = y + rng.standard_normal(y.shape) * noise
    perm = rng.permutation(n) if shuffle else np.arange(n)
    # source word i lands at target row inv[i]
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    src = EmbeddingTable(tuple(f"s{i}" for i in range(n)), x)
    tgt = EmbeddingTable(tuple(f"t{perm[r]}" for r in range(n)), y[perm])
    gold = BilingualDictionary(tuple((i, int(inv[i])) for i in range(n)), n, n)
    return RotationFixture(normalize(src), normalize(tgt), gold, q)


@dataclass
class ToyLanguage:
    src: EmbeddingTable
    tgt: EmbeddingTable
    mapping: LinearMap
    lm_corpus: list[list[str]]
    test_source: list[list[str]]
    test_reference: list[list[str]]


TOY_PAIRS = 10
TOY_CONTEXTS = 5
TOY_FILLERS = 20


def _toy_target_sentence(rng: np.random.Generator) -> list[str]:
    words = []
    for _ in range(2):
        words.append(f"f{rng.integers(TOY_FILLERS)}")
        kind = "ab"[rng.integers(2)]
        words.append(f"c{kind}{rng.integers(TOY_CONTEXTS)}")
        words.append(f"syn{rng.integers(TOY_PAIRS)}{kind}")
    words.append(f"f{rng.integers(TOY_FILLERS)}")
    return words


def _toy_source_word(target_word: str) -> str:
    # both members of a synonym pair come from one source word
    if target_word.startswith("syn"):
        return "src_" + target_word[:-1]
    return "src_" + target_word


def toy_language(seed: int = 0, d: int = 20, n_lm: int = 2000, n_test: int = 100,
                 synonym_noise: float = 0.25) -> ToyLanguage:
    """A 50-word target language whose synonym pairs differ only in bigram context.

    Every ``synNa`` follows an ``ca*`` word and every ``synNb`` a ``cb*``
    word.  The source language has one word per synonym pair, so embedding
    similarity alone cannot choose the right member; the pair member that is
    nearer in embedding space is random per pair.
    """
    rng = np.random.default_rng(seed)
    fillers = [f"f{i}" for i in range(TOY_FILLERS)]
    contexts = [f"c{k}{i}" for k in "ab" for i in range(TOY_CONTEXTS)]
    pair_heads = [f"syn{i}" for i in range(TOY_PAIRS)]
    src_words = ["src_" + w for w in fillers + contexts + pair_heads]
    x = rng.standard_normal((len(src_words), d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    q = random_orthogonal(d, rng)
    src_vec = dict(zip(src_words, x))

    tgt_words, tgt_rows = [], []
    for w in fillers + contexts:
        tgt_words.append(w)
        tgt_rows.append(src_vec["src_" + w] @ q)
    for head in pair_heads:
        base = src_vec["src_" + head] @ q
        for kind in "ab":
            tgt_words.append(head + kind)
            v = base + rng.standard_normal(d) * synonym_noise
            tgt_rows.append(v / np.linalg.norm(v))

    def corpus(n):
        return [_toy_target_sentence(rng) for _ in range(n)]

    lm_corpus = corpus(n_lm)
    reference = corpus(n_test)
    source = [[_toy_source_word(w) for w in sent] for sent in reference]
    return ToyLanguage(
        normalize(EmbeddingTable(tuple(src_words), x)),
        normalize(EmbeddingTable(tuple(tgt_words), np.array(tgt_rows))),
        LinearMap(q, orthogonal=True),
        lm_corpus, source, reference)


def identity_fixture(words: int = 12, d: int = 8, seed: int = 0) -> EmbeddingTable:
    """One table used as both source and target (identity translation)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((words, d))
    return normalize(EmbeddingTable(tuple(f"w{i}" for i in range(words)), x))


def uniform_arpa(words) -> str:
    """ARPA text of a unigram model uniform over ``words`` plus the end marker and unknown token."""
    vocab = sorted(set(words) | {ngram_lm.EOS, ngram_lm.UNK})
    lp = -np.log10(len(vocab))
    lines = ["", "\\data\\", f"ngram 1={len(vocab) + 1}", "", "\\1-grams:"]
    lines.append(f"{ngram_lm.BOS_LOGPROB:.10g}\t{ngram_lm.BOS}")
    lines += [f"{lp:.10g}\t{w}" for w in vocab]
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def _write_lines(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")


def write_fixtures(outdir: str, seed: int = 0) -> dict[str, str]:
    """Write every fixture file into ``outdir``; returns name -> path."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}

    def path(name):
        paths[name] = os.path.join(outdir, name)
        return paths[name]

    rot = rotation_fixture(seed=seed)
    with open(path("rot.src.vec"), "w", encoding="utf-8") as f:
        write_embeddings(rot.src, f)
    with open(path("rot.tgt.vec"), "w", encoding="utf-8") as f:
        write_embeddings(rot.tgt, f)
    with open(path("rot.gold.tsv"), "w", encoding="utf-8") as f:
        write_dictionary(rot.gold, rot.src, rot.tgt, f)

    toy = toy_language(seed=seed)
    with open(path("toy.src.vec"), "w", encoding="utf-8") as f:
        write_embeddings(toy.src, f)
    with open(path("toy.tgt.vec"), "w", encoding="utf-8") as f:
        write_embeddings(toy.tgt, f)
    with open(path("toy.map"), "w", encoding="utf-8") as f:
        write_map(toy.mapping, f)
    _write_lines(path("toy.lm.txt"), toy.lm_corpus)
    _write_lines(path("toy.test.src"), toy.test_source)
    _write_lines(path("toy.test.ref"), toy.test_reference)

    ident = identity_fixture()
    with open(path("ident.vec"), "w", encoding="utf-8") as f:
        write_embeddings(ident, f)
    with open(path("ident.map"), "w", encoding="utf-8") as f:
        write_map(LinearMap.identity(ident.dim), f)
    with open(path("ident.uniform.arpa"), "w", encoding="utf-8") as f:
        f.write(uniform_arpa(ident.words))
    rng = np.random.default_rng(seed)
    ident_text = [[ident.words[i] for i in rng.integers(len(ident), size=rng.integers(1, 8))]
                  for _ in range(20)]
    ident_text[0] = ident_text[0] + ["42", "3.14"]
    _write_lines(path("ident.txt"), ident_text)
    return paths


def main(argv=None):
    parser = argparse.ArgumentParser(description="write synthetic fixture files")
    parser.add_argument("outdir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for name, p in write_fixtures(args.outdir, args.seed).items():
        print(f"{name}\t{p}")


if __name__ == "__main__":
    main()
