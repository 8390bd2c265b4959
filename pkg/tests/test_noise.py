import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbwmt.noise import (NoiseSpec, SplitMix64, corrupt, delete_noise, derive_seed, insert_noise,
                         make_denoising_corpus, make_validation_pairs, permute_noise)

VOCAB = [f"v{i}" for i in range(100)]


class Scripted:
    """Stand-in generator that replays fixed draws."""

    def __init__(self, floats=(), ints=()):
        self.floats = list(floats)
        self.ints = list(ints)

    def random(self):
        return self.floats.pop(0)

    def randrange(self, n):
        v = self.ints.pop(0)
        assert 0 <= v < n
        return v


def is_subsequence(small, big):
    it = iter(big)
    return all(any(x == y for y in it) for x in small)


class TestSplitMix64:
    # reference outputs from the published C implementation
    @pytest.mark.parametrize("seed, expected", [
        (0, [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]),
        (42, [0xBDD732262FEB6E95, 0x28EFE333B266F103, 0x47526757130F9F52]),
        (2 ** 64 - 1, [0xE4D971771B652C20, 0xE99FF867DBF682C9, 0x382FF84CB27281E9]),
    ])
    def test_reference_values(self, seed, expected):
        rng = SplitMix64(seed)
        assert [rng.next_u64() for _ in range(3)] == expected

    def test_float_uses_top_53_bits(self):
        rng = SplitMix64(0)
        assert rng.random() == (0xE220A8397B1DCDAF >> 11) / 2 ** 53

    def test_randrange_range_and_balance(self):
        rng = SplitMix64(7)
        draws = [rng.randrange(6) for _ in range(60000)]
        assert set(draws) == set(range(6))
        for v in range(6):
            assert abs(draws.count(v) / 60000 - 1 / 6) < 0.01
        with pytest.raises(ValueError):
            rng.randrange(0)

    def test_derive_seed_stable_and_distinct(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        seeds = {derive_seed(0, e, b, s) for e in range(3) for b in range(3) for s in range(3)}
        assert len(seeds) == 27
        assert 0 <= derive_seed(5) < 2 ** 64


class TestInsert:
    def test_zero_probability(self):
        rng = SplitMix64(0)
        assert insert_noise(["a", "b"], 0.0, 5, VOCAB, rng) == ["a", "b"]

    def test_hand_trace(self):
        vocab = ["the", "of", "and"]
        rng = Scripted(floats=[0.05, 0.9], ints=[0])
        assert insert_noise(["x", "y"], 0.1, 3, vocab, rng) == ["the", "x", "y"]

    def test_never_appends_after_last(self):
        rng = Scripted(floats=[0.0, 0.0], ints=[1, 2])
        assert insert_noise(["x", "y"], 0.5, 3, ["a", "b", "c"], rng) == ["b", "x", "c", "y"]

    def test_vocab_too_small(self):
        with pytest.raises(ValueError):
            insert_noise(["x"], 0.1, 5, ["a"], SplitMix64(0))

    def test_inserted_words_from_top_slice(self):
        rng = random.Random(0)
        for t in range(1000):
            toks = [f"w{i}" for i in range(rng.randint(0, 15))]
            v = rng.randint(1, 30)
            out = insert_noise(toks, 0.3, v, VOCAB, SplitMix64(t))
            assert is_subsequence(toks, out)
            assert all(w in VOCAB[:v] for w in out if not w.startswith("w"))


class TestDelete:
    def test_hand_trace(self):
        assert delete_noise(["x", "y", "z"], 0.1, Scripted(floats=[0.05, 0.5, 0.02])) == ["y"]

    def test_extremes(self):
        toks = ["a", "b", "c"]
        assert delete_noise(toks, 0.0, SplitMix64(1)) == toks
        assert delete_noise(toks, 1.0, SplitMix64(1)) == []


class TestPermute:
    def test_hand_trace(self):
        # keys (2, 1, 2): stable sort keeps a before c
        assert permute_noise(["a", "b", "c"], 2, Scripted(ints=[2, 0, 0])) == ["b", "a", "c"]

    def test_zero_distance_is_identity(self):
        toks = list("abcdef")
        assert permute_noise(toks, 0, SplitMix64(3)) == toks

    def test_long_range_order_preserved(self):
        rng = random.Random(1)
        for t in range(1000):
            n = rng.randint(0, 20)
            d = rng.randint(0, 5)
            out = permute_noise(list(range(n)), d, SplitMix64(t))
            assert sorted(out) == list(range(n))
            pos = {v: p for p, v in enumerate(out)}
            assert all(pos[i] < pos[j] for i in range(n) for j in range(i + d, n) if j > i)


class TestCorrupt:
    def test_zero_noise_identity(self):
        spec = NoiseSpec(p_ins=0, p_del=0, d_per=0)
        assert corrupt(list("abc"), spec, 9) == list("abc")

    def test_deterministic(self):
        spec = NoiseSpec()
        toks = [f"t{i}" for i in range(15)]
        assert corrupt(toks, spec, 123, VOCAB) == corrupt(toks, spec, 123, VOCAB)

    def test_matches_independent_trace(self):
        spec = NoiseSpec(p_ins=0.3, v_ins=10, p_del=0.3, d_per=2)
        toks = [f"t{i}" for i in range(12)]
        for seed in range(50):
            rng = SplitMix64(seed)
            keys = [i + rng.randrange(3) for i in range(len(toks))]
            stage = [w for _, _, w in sorted(zip(keys, range(len(toks)), toks))]
            stage = [w for w in stage if rng.random() >= 0.3]
            out = []
            for w in stage:
                if rng.random() < 0.3:
                    out.append(VOCAB[rng.randrange(10)])
                out.append(w)
            assert corrupt(toks, spec, seed, VOCAB) == out

    def test_fixed_trace(self):
        # seed 0: permutation keys (1, 1, 3, 3) keep a b c d; deletion draws
        # (.106, .327, .174, .772) at p_del .5 leave [d]; insertion draw .246
        # fires and the next draw picks rank 2 -> "z"
        spec = NoiseSpec(p_ins=0.5, v_ins=3, p_del=0.5, d_per=1)
        rng = SplitMix64(0)
        assert [i + rng.randrange(2) for i in range(4)] == [1, 1, 3, 3]
        assert [round(rng.random(), 3) for _ in range(5)] == [0.106, 0.327, 0.174, 0.772, 0.246]
        assert rng.randrange(3) == 2
        assert corrupt(["a", "b", "c", "d"], spec, 0, ["x", "y", "z"]) == ["z", "d"]

    def test_survivor_long_range_order(self):
        spec = NoiseSpec()
        rng = random.Random(2)
        for t in range(500):
            toks = [f"t{i}" for i in range(rng.randint(1, 20))]
            out = corrupt(toks, spec, t, VOCAB)
            pos = {w: p for p, w in enumerate(out) if w.startswith("t")}
            idx = sorted(int(w[1:]) for w in pos)
            for a in idx:
                for b in idx:
                    if b - a >= spec.d_per:
                        assert pos[f"t{a}"] < pos[f"t{b}"]


@settings(max_examples=200)
@given(st.lists(st.sampled_from("abcdefgh"), max_size=20), st.integers(0, 2 ** 64 - 1),
       st.floats(0, 1), st.integers(0, 5))
def test_stage_invariants(tokens, seed, p, d):
    assert is_subsequence(delete_noise(tokens, p, SplitMix64(seed)), tokens)
    out = insert_noise(tokens, p, 5, VOCAB, SplitMix64(seed))
    assert is_subsequence(tokens, out) and len(out) - len(tokens) >= 0
    assert sorted(permute_noise(tokens, d, SplitMix64(seed))) == sorted(tokens)


def test_expected_rates():
    toks = [f"t{i}" for i in range(20)]
    inserted = deleted = 0
    for t in range(10000):
        inserted += len(insert_noise(toks, 0.1, 50, VOCAB, SplitMix64(2 * t))) - 20
        deleted += 20 - len(delete_noise(toks, 0.1, SplitMix64(2 * t + 1)))
    assert abs(inserted / 10000 - 2.0) <= 0.2
    assert abs(deleted / 10000 - 2.0) <= 0.2


class TestCorpus:
    def test_counts_and_clean_side(self):
        corpus = [["a", "b", "c"], ["d", "e"], ["f"]]
        pairs = list(make_denoising_corpus(corpus, NoiseSpec(), 3, 2, VOCAB))
        assert len(pairs) == 9
        assert [p.clean for p in pairs] == [tuple(s) for s in corpus] * 3
        assert [(p.epoch, p.batch_index) for p in pairs[:3]] == [(0, 0), (0, 0), (0, 1)]

    def test_epochs_differ(self):
        sent = [[f"w{i}" for i in range(20)]]
        a, b = make_denoising_corpus(sent, NoiseSpec(), 2, 1, VOCAB)
        assert a.clean == b.clean and a.noisy != b.noisy

    def test_reproducible(self):
        corpus = [[f"w{i}" for i in range(n)] for n in range(1, 30)]
        spec = NoiseSpec(base_seed=17)
        first = list(make_denoising_corpus(corpus, spec, 2, 4, VOCAB))
        assert first == list(make_denoising_corpus(corpus, spec, 2, 4, VOCAB))
        other = list(make_denoising_corpus(corpus, NoiseSpec(base_seed=18), 2, 4, VOCAB))
        assert first != other

    def test_errors(self):
        with pytest.raises(ValueError):
            list(make_denoising_corpus([["a"]], NoiseSpec(), 1, 0, VOCAB))
        with pytest.raises(ValueError):
            list(make_denoising_corpus([], NoiseSpec(), 1, 1, VOCAB))
        with pytest.raises(ValueError):
            NoiseSpec(p_del=1.5)

    def test_validation_pairs(self):
        corpus = [["a", "b"], ["c"]]
        pairs = list(make_validation_pairs(corpus))
        assert len(pairs) == 2 and all(p.noisy == p.clean for p in pairs)
        assert list(make_validation_pairs([])) == []
