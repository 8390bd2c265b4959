"""Corpus preprocessing, number masking, vocabularies, unknown replacement and BLEU."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

NUM = "<num>"
UNK = "<unk>"
MAX_LEN = 100

NUMBER_RE = re.compile(r"^[+-]?[0-9]+(?:[.,][0-9]+)?$")


def preprocess(line: str, max_len: int = MAX_LEN) -> list[str] | None:
    """Lowercase and whitespace-tokenize; ``None`` if longer than ``max_len`` tokens."""
    tokens = line.lower().split()
    if len(tokens) > max_len:
        return None
    return tokens


def preprocess_corpus(lines: Iterable[str], max_len: int = MAX_LEN) -> tuple[list[list[str]], int]:
    """Returns the kept sentences and the number of rejected ones."""
    kept, rejected = [], 0
    for line in lines:
        tokens = preprocess(line, max_len)
        if tokens is None:
            rejected += 1
        else:
            kept.append(tokens)
    return kept, rejected


@dataclass(frozen=True)
class NumberMask:
    masked_tokens: tuple[str, ...]
    numbers: tuple[str, ...]


def is_number(token: str) -> bool:
    return NUMBER_RE.match(token) is not None


def mask_numbers(tokens: Sequence[str]) -> NumberMask:
    masked, numbers = [], []
    for tok in tokens:
        if is_number(tok):
            masked.append(NUM)
            numbers.append(tok)
        else:
            masked.append(tok)
    return NumberMask(tuple(masked), tuple(numbers))


def unmask_numbers(translated: Sequence[str], source_mask: NumberMask) -> tuple[list[str], int]:
    """Put the source numbers back in order; returns tokens and the count of unfilled labels."""
    out, k, surplus = [], 0, 0
    for tok in translated:
        if tok == NUM:
            if k < len(source_mask.numbers):
                out.append(source_mask.numbers[k])
                k += 1
                continue
            surplus += 1
        out.append(tok)
    return out, surplus


def write_mask_sidecar(masks: Iterable[NumberMask], stream: TextIO) -> None:
    for m in masks:
        stream.write("\t".join(m.numbers) + "\n")


def read_mask_sidecar(stream: TextIO) -> list[tuple[str, ...]]:
    return [tuple(line.rstrip("\n").split("\t")) if line.strip() else () for line in stream]


@dataclass(frozen=True)
class Vocabulary:
    entries: tuple[tuple[str, int], ...]
    min_count: int = 1

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def write(self, stream: TextIO) -> None:
        for w, c in self.entries:
            stream.write(f"{w}\t{c}\n")

    @classmethod
    def read(cls, stream: TextIO) -> "Vocabulary":
        entries = []
        for line in stream:
            line = line.rstrip("\n")
            if line:
                w, _, c = line.partition("\t")
                entries.append((w, int(c) if c else 0))
        return cls(tuple(entries), min((c for _, c in entries), default=1))


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1, limit: int | None = None) -> Vocabulary:
    counts = Counter()
    for sentence in corpus:
        counts.update(sentence)
    ranked = sorted(((w, c) for w, c in counts.items() if c >= min_count), key=lambda wc: (-wc[1], wc[0]))
    if limit is not None:
        ranked = ranked[:limit]
    return Vocabulary(tuple(ranked), min_count)


def replace_unknowns(denoised: Sequence[str], noisy_input: Sequence[str], unk: str = UNK) -> list[str]:
    """Fill each unknown with the next unused noisy-input word absent from the denoised output.

    The cursor over the noisy input only moves forward; an unknown with no
    remaining candidate is dropped.
    """
    present = set(denoised)
    out = []
    cursor = 0
    for tok in denoised:
        if tok != unk:
            out.append(tok)
            continue
        while cursor < len(noisy_input):
            cand = noisy_input[cursor]
            cursor += 1
            if cand != unk and cand not in present:
                out.append(cand)
                present.add(cand)
                break
    return out


# -- BLEU -------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(candidates, references, max_order: int = 4):
    """Clipped n-gram matches and totals per order, plus candidate and reference lengths."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} references")
    if len(candidates) == 0:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        c = _tokens(cand)
        r = _tokens(ref)
        cand_len += len(c)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            cn, rn = _ngrams(c, n), _ngrams(r, n)
            matches[n - 1] += sum(min(k, rn[g]) for g, k in cn.items())
            totals[n - 1] += max(len(c) - n + 1, 0)
    return matches, totals, cand_len, ref_len


def bleu(candidates, references, max_order: int = 4) -> float:
    """Corpus BLEU in percent, case-insensitive, unsmoothed."""
    matches, totals, c, r = bleu_stats(candidates, references, max_order)
    if c == 0 or any(m == 0 for m in matches):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100.0 * bp * math.exp(log_prec)


def _tokens(sentence) -> list[str]:
    if isinstance(sentence, str):
        return sentence.lower().split()
    return [t.lower() for t in sentence]
