"""Count-based backoff n-gram language model with interpolated modified Kneser-Ney.

Probabilities are stored the way ARPA files store them: for every seen
n-gram the interpolated log10 probability, and for every context the log10
backoff weight (the interpolation mass left over by discounting).
"""

from __future__ import annotations

import io
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
# log10 probability ARPA files give the context-only begin marker
BOS_LOGPROB = -99.0
FALLBACK_DISCOUNT = 0.5
LN10 = math.log(10.0)

Ngram = tuple[str, ...]


class ArpaFormatError(ValueError):
    pass


@dataclass
class NgramCounts:
    order: int
    raw: list[Counter]
    adjusted: list[dict[Ngram, int]]
    num_sentences: int

    def counts_of_order(self, n: int) -> Counter:
        return self.raw[n - 1]


@dataclass
class NgramModel:
    order: int
    logprob: list[dict[Ngram, float]]
    backoff: list[dict[Ngram, float]]
    vocab: frozenset[str] = field(init=False)

    def __post_init__(self):
        self.vocab = frozenset(w for (w,) in self.logprob[0])

    def score(self, history: Sequence[str], word: str) -> float:
        return score_word(self, history, word)

    def predictable_words(self) -> list[str]:
        """Every token the model can predict (vocabulary minus the begin marker)."""
        return sorted(w for w in self.vocab if w != BOS)


def _sentence_tokens(sentence) -> list[str]:
    return sentence.split() if isinstance(sentence, str) else list(sentence)


def count_ngrams(corpus: Iterable, order: int) -> NgramCounts:
    """Raw and Kneser-Ney adjusted counts for orders ``1..order``.

    Each sentence is padded with one begin marker (context only) and one end
    marker.  Adjusted counts of a lower-order n-gram are the number of
    distinct words preceding it, except for n-grams starting with the begin
    marker, which keep their raw counts.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    raw = [Counter() for _ in range(order)]
    num_sentences = 0
    for sentence in corpus:
        tokens = [BOS] + _sentence_tokens(sentence) + [EOS]
        num_sentences += 1
        for n in range(1, order + 1):
            counter = raw[n - 1]
            for i in range(len(tokens) - n + 1):
                gram = tuple(tokens[i:i + n])
                if gram == (BOS,):
                    continue
                counter[gram] += 1
    if num_sentences == 0:
        raise ValueError("empty corpus")

    adjusted: list[dict[Ngram, int]] = [dict() for _ in range(order)]
    adjusted[order - 1] = dict(raw[order - 1])
    for n in range(order - 1, 0, -1):
        left_contexts = Counter(gram[1:] for gram in raw[n])
        adj = adjusted[n - 1]
        for gram, c in raw[n - 1].items():
            adj[gram] = c if gram[0] == BOS else left_contexts[gram]
    return NgramCounts(order, raw, adjusted, num_sentences)


def discounts(adjusted: dict[Ngram, int], n: int | None = None) -> tuple[float, float, float]:
    """Modified-KN discounts (D1, D2, D3+) from count-of-counts.

    Falls back to a single absolute discount of 0.5 when the count-of-counts
    are degenerate or give a discount outside ``(0, k)``.
    """
    coc = Counter(min(c, 5) for c in adjusted.values())
    t1, t2, t3, t4 = (coc[k] for k in (1, 2, 3, 4))
    try:
        y = t1 / (t1 + 2 * t2)
        d = (1 - 2 * y * t2 / t1, 2 - 3 * y * t3 / t2, 3 - 4 * y * t4 / t3)
    except ZeroDivisionError:
        d = None
    if d is None or not all(0 < dk < k for k, dk in enumerate(d, start=1)):
        log.warning("order %s: degenerate count-of-counts %s, using absolute discount %.1f",
                    n if n is not None else "?", (t1, t2, t3, t4), FALLBACK_DISCOUNT)
        return (FALLBACK_DISCOUNT,) * 3
    return d


def estimate(counts: NgramCounts, order: int | None = None) -> NgramModel:
    """Interpolated modified Kneser-Ney estimate, stored in backoff form."""
    order = counts.order if order is None else order
    if order > counts.order:
        raise ValueError(f"counts only go up to order {counts.order}")
    if counts.num_sentences == 0:
        raise ValueError("empty corpus")

    logprob: list[dict[Ngram, float]] = [dict() for _ in range(order)]
    backoff: list[dict[Ngram, float]] = [dict() for _ in range(order)]

    # probabilities of the previous order, linear domain
    lower: dict[Ngram, float] = {}
    for n in range(1, order + 1):
        adj = counts.adjusted[n - 1] if n < order else counts.raw[order - 1]
        d1, d2, d3 = discounts(adj, n)
        disc = (0.0, d1, d2, d3)

        by_context: dict[Ngram, list[tuple[str, int]]] = defaultdict(list)
        for gram, c in adj.items():
            by_context[gram[:-1]].append((gram[-1], c))

        probs: dict[Ngram, float] = {}
        gammas: dict[Ngram, float] = {}
        for ctx, entries in by_context.items():
            total = sum(c for _, c in entries)
            mass = sum(disc[min(c, 3)] for _, c in entries)
            gammas[ctx] = mass / total
            for w, c in entries:
                probs[ctx + (w,)] = (c - disc[min(c, 3)]) / total

        if n == 1:
            words = {w for (w,) in probs} | {UNK}
            uniform = gammas[()] / len(words)
            unigram = {(w,): probs.get((w,), 0.0) + uniform for w in words}
            lower = unigram
            logprob[0] = {g: math.log10(p) for g, p in unigram.items()}
            logprob[0][(BOS,)] = BOS_LOGPROB
        else:
            # every suffix of a seen n-gram is itself seen one order down
            current = {gram: p + gammas[gram[:-1]] * lower[gram[1:]] for gram, p in probs.items()}
            logprob[n - 1] = {g: math.log10(p) for g, p in current.items()}
            for ctx, g in gammas.items():
                backoff[n - 2][ctx] = math.log10(g)
            lower = current
    return NgramModel(order, logprob, backoff)


def score_word(model: NgramModel, history: Sequence[str], word: str) -> float:
    """log10 p(word | history) by standard backoff evaluation."""
    vocab = model.vocab
    word = word if word in vocab and word != BOS else UNK
    keep = model.order - 1
    ctx = tuple(h if h in vocab else UNK for h in history[len(history) - keep:]) if keep else ()
    total = 0.0
    for start in range(len(ctx) + 1):
        c = ctx[start:]
        gram = c + (word,)
        lp = model.logprob[len(gram) - 1].get(gram)
        if lp is not None:
            return total + lp
        if c:
            total += model.backoff[len(c) - 1].get(c, 0.0)
    raise AssertionError("unigram table lacks the unknown token")


def score_sentence(model: NgramModel, tokens: Sequence[str]) -> float:
    """Total log10 probability of a sentence including its end marker."""
    history = [BOS]
    total = 0.0
    for w in list(tokens) + [EOS]:
        total += score_word(model, history, w)
        history.append(w)
    return total


def perplexity(model: NgramModel, corpus: Iterable) -> float:
    total = 0.0
    n_tokens = 0
    for sentence in corpus:
        tokens = _sentence_tokens(sentence)
        total += score_sentence(model, tokens)
        n_tokens += len(tokens) + 1
    if n_tokens == 0:
        raise ValueError("empty corpus")
    return 10.0 ** (-total / n_tokens)


def train(corpus: Iterable, order: int = 5) -> NgramModel:
    return estimate(count_ngrams(corpus, order), order)


# -- ARPA ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.10g}"


def write_arpa(model: NgramModel, stream: TextIO) -> None:
    stream.write("\n\\data\\\n")
    for n in range(1, model.order + 1):
        stream.write(f"ngram {n}={len(model.logprob[n - 1])}\n")
    for n in range(1, model.order + 1):
        stream.write(f"\n\\{n}-grams:\n")
        bo = model.backoff[n - 1] if n < model.order else {}
        for gram in sorted(model.logprob[n - 1]):
            line = f"{_fmt(model.logprob[n - 1][gram])}\t{' '.join(gram)}"
            if gram in bo:
                line += f"\t{_fmt(bo[gram])}"
            stream.write(line + "\n")
    stream.write("\n\\end\\\n")


def dumps_arpa(model: NgramModel) -> str:
    buf = io.StringIO()
    write_arpa(model, buf)
    return buf.getvalue()


_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


def read_arpa(stream: TextIO | Iterable[str]) -> NgramModel:
    lines = (line.strip() for line in stream)
    declared: dict[int, int] = {}
    state = "start"
    current = 0
    logprob: dict[int, dict[Ngram, float]] = {}
    backoff: dict[int, dict[Ngram, float]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        if state == "start":
            if line == "\\data\\":
                state = "data"
            continue
        if state == "data":
            m = _COUNT_RE.match(line)
            if m:
                declared[int(m.group(1))] = int(m.group(2))
                continue
            state = "body"
        if state == "body":
            if line == "\\end\\":
                state = "end"
                break
            m = _SECTION_RE.match(line)
            if m:
                current = int(m.group(1))
                if current not in declared:
                    raise ArpaFormatError(f"line {lineno}: section {current}-grams not declared")
                if current in logprob:
                    raise ArpaFormatError(f"line {lineno}: duplicate section {current}-grams")
                logprob[current] = {}
                backoff[current] = {}
                continue
            if line.startswith("\\"):
                raise ArpaFormatError(f"line {lineno}: malformed section header {line!r}")
            if current == 0:
                raise ArpaFormatError(f"line {lineno}: entry outside any n-gram section")
            fields = line.split("\t") if "\t" in line else line.split()
            if "\t" in line:
                prob_s, gram_s, *rest = fields
                gram = tuple(gram_s.split())
            else:
                prob_s, *rest = fields
                gram, rest = tuple(rest[:current]), rest[current:]
            if len(gram) != current or len(rest) > 1:
                raise ArpaFormatError(f"line {lineno}: malformed {current}-gram entry {line!r}")
            try:
                logprob[current][gram] = float(prob_s)
                if rest:
                    backoff[current][gram] = float(rest[0])
            except ValueError:
                raise ArpaFormatError(f"line {lineno}: non-numeric value in {line!r}") from None
    if state != "end":
        raise ArpaFormatError("missing \\data\\ or \\end\\ marker")
    if not declared or sorted(declared) != list(range(1, max(declared) + 1)):
        raise ArpaFormatError(f"n-gram orders declared are not contiguous: {sorted(declared)}")
    order = max(declared)
    for n, c in declared.items():
        found = len(logprob.get(n, {}))
        if n not in logprob:
            raise ArpaFormatError(f"missing section {n}-grams")
        if found != c:
            raise ArpaFormatError(f"{n}-grams: declared {c} entries, found {found}")
    if (UNK,) not in logprob[1]:
        logprob[1][(UNK,)] = BOS_LOGPROB
    return NgramModel(order,
                      [logprob[n] for n in range(1, order + 1)],
                      [backoff[n] for n in range(1, order + 1)])


def loads_arpa(text: str) -> NgramModel:
    return read_arpa(io.StringIO(text))


def to_natural_log(log10_value: float) -> float:
    return log10_value * LN10
