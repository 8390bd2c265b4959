"""Synthetic corruption of clean sentences for training a denoiser.

Random numbers come from SplitMix64 (Steele, Lea & Flood 2014): a 64-bit
state advanced by the golden-ratio increment and finalized with the
``mix64`` variant-13 mixer.  Uniform floats use the top 53 bits.  The
generator is tiny, portable and fully specified, so a corpus generated on
one machine is byte-identical on any other.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from a tuple of non-negative integers."""
    data = b"".join(struct.pack("<Q", p & MASK64) for p in parts)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class NoiseSpec:
    p_ins: float = 0.1
    v_ins: int = 50
    p_del: float = 0.1
    d_per: int = 3
    base_seed: int = 0

    def __post_init__(self):
        for name in ("p_ins", "p_del"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.v_ins < 1:
            raise ValueError("v_ins must be >= 1")
        if self.d_per < 0:
            raise ValueError("d_per must be >= 0")


@dataclass(frozen=True)
class NoisePair:
    noisy: tuple[str, ...]
    clean: tuple[str, ...]
    sentence_index: int
    batch_index: int
    epoch: int = 0


def insert_noise(tokens: Sequence[str], p_ins: float, v_ins: int, vocab: Sequence[str],
                 rng: SplitMix64) -> list[str]:
    """Before each position, with probability ``p_ins``, insert one of the ``v_ins`` most frequent words."""
    if v_ins > len(vocab):
        raise ValueError(f"v_ins={v_ins} exceeds the vocabulary size {len(vocab)}")
    out = []
    for tok in tokens:
        if rng.random() < p_ins:
            out.append(vocab[rng.randrange(v_ins)])
        out.append(tok)
    return out


def delete_noise(tokens: Sequence[str], p_del: float, rng: SplitMix64) -> list[str]:
    return [tok for tok in tokens if not rng.random() < p_del]


def permute_noise(tokens: Sequence[str], d_per: int, rng: SplitMix64) -> list[str]:
    """Stable sort of positions by ``i + delta_i`` with ``delta_i`` uniform in ``{0..d_per}``."""
    keys = [i + rng.randrange(d_per + 1) for i in range(len(tokens))]
    order = sorted(range(len(tokens)), key=keys.__getitem__)
    return [tokens[i] for i in order]


def corrupt(tokens: Sequence[str], spec: NoiseSpec, seed: int, vocab: Sequence[str] = ()) -> list[str]:
    """Permute, then delete, then insert, all from one generator seeded by ``seed``."""
    rng = SplitMix64(seed)
    out = permute_noise(tokens, spec.d_per, rng)
    out = delete_noise(out, spec.p_del, rng)
    if spec.p_ins > 0:
        out = insert_noise(out, spec.p_ins, spec.v_ins, vocab, rng)
    return out


def make_denoising_corpus(corpus: Sequence[Sequence[str]], spec: NoiseSpec, num_epochs: int,
                          batch_size: int, vocab: Sequence[str]) -> Iterator[NoisePair]:
    """One noisy/clean pair per sentence per epoch, in (epoch, index) order.

    Each pair's generator is seeded from ``(base_seed, epoch, batch, slot)``
    so every epoch and batch sees a different corruption.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    for epoch in range(num_epochs):
        for idx, sentence in enumerate(corpus):
            batch, slot = divmod(idx, batch_size)
            seed = derive_seed(spec.base_seed, epoch, batch, slot)
            noisy = corrupt(sentence, spec, seed, vocab)
            yield NoisePair(tuple(noisy), tuple(sentence), idx, batch, epoch)


def make_validation_pairs(corpus: Iterable[Sequence[str]]) -> Iterator[NoisePair]:
    for idx, sentence in enumerate(corpus):
        yield NoisePair(tuple(sentence), tuple(sentence), idx, 0)
