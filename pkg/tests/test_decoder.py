import math
import random

import numpy as np
import pytest

from oracles import exhaustive_best, random_lm, random_shortlists
from wbwmt import ngram_lm
from wbwmt.crossmap import LinearMap
from wbwmt.decoder import (Candidate, CopyMarker, DecoderConfig, Lexicon, Translator, beam_search,
                           beam_translate, build_shortlists, combined_score, lexical_score)
from wbwmt.embed import EmbeddingTable, normalize
from wbwmt.fixtures import identity_fixture, uniform_arpa


def unit_table(rows, words):
    return normalize(EmbeddingTable(tuple(words), np.asarray(rows, dtype=float)))


class TestScores:
    @pytest.mark.parametrize("d, q", [(1, 1.0), (-1, 0.0), (0, 0.5), (0.5, 0.75)])
    def test_lexical(self, d, q):
        assert lexical_score(d) == q

    def test_lexical_range(self):
        assert lexical_score(1 + 1e-12) == 1.0
        with pytest.raises(ValueError):
            lexical_score(1.01)
        with pytest.raises(ValueError):
            lexical_score(-1.5)

    def test_combined(self):
        cfg = DecoderConfig()
        assert combined_score(1.0, 0.0, cfg) == 0.0
        # ln .5 + 0.1 ln .25
        assert combined_score(0.5, math.log(0.25), cfg) == pytest.approx(-0.83178, abs=1e-5)
        with pytest.raises(ValueError):
            combined_score(0.0, 0.0, cfg)

    def test_config_validation(self):
        for bad in ({"beam_size": 0}, {"candidates_per_word": 0}, {"lambda_lm": -1},
                    {"lexical_similarity": "dot"}):
            with pytest.raises(ValueError):
                DecoderConfig(**bad)


class TestShortlists:
    def test_unknown_word_copied(self):
        t = identity_fixture()
        lex = Lexicon(t, t, LinearMap.identity(t.dim))
        assert lex.shortlist("zzz", DecoderConfig()) == CopyMarker("zzz")

    def test_rank_beyond_vocab_limit_copied(self):
        t = identity_fixture()
        lex = Lexicon(t, t, LinearMap.identity(t.dim))
        assert lex.shortlist("w5", DecoderConfig(translate_vocab_limit=5)) == CopyMarker("w5")
        assert isinstance(lex.shortlist("w4", DecoderConfig(translate_vocab_limit=5)), list)

    def test_identity_top1_is_self(self):
        t = identity_fixture()
        lex = Lexicon(t, t, LinearMap.identity(t.dim), csls_k=3)
        for w in t.words:
            top = lex.shortlist(w, DecoderConfig(candidates_per_word=3))
            assert top[0].word == w and top[0].similarity == pytest.approx(1.0)

    def test_three_words_match_brute_force(self):
        src = unit_table([[1, 0.2], [0.3, 1], [-1, 0.5]], ["a", "b", "c"])
        tgt = unit_table([[1, 0], [0.7, 0.7], [0, 1]], ["x", "y", "z"])
        k = 2
        lex = Lexicon(src, tgt, LinearMap.identity(2), csls_k=k)
        cos = src.vectors @ tgt.vectors.T
        r_src = [np.mean(sorted(row, reverse=True)[:k]) for row in cos]
        r_tgt = [np.mean(sorted(col, reverse=True)[:k]) for col in cos.T]
        for i, w in enumerate(src.words):
            csls = [2 * cos[i, j] - r_src[i] - r_tgt[j] for j in range(3)]
            order = sorted(range(3), key=lambda j: (-csls[j], j))
            got = lex.shortlist(w, DecoderConfig(candidates_per_word=3))
            assert [c.word for c in got] == [tgt.words[j] for j in order]
            # the score kept for q is the raw cosine
            np.testing.assert_allclose([c.similarity for c in got], [cos[i, j] for j in order])
            got_csls = lex.shortlist(w, DecoderConfig(candidates_per_word=3, lexical_similarity="csls"))
            # a clipped score of -1 means q = 0, which is dropped
            kept = [np.clip(csls[j], -1, 1) for j in order if csls[j] > -1]
            np.testing.assert_allclose([c.similarity for c in got_csls], kept)

    def test_opposite_vector_dropped(self):
        src = unit_table([[1, 0]], ["a"])
        tgt = unit_table([[1, 0], [-1, 0]], ["x", "anti"])
        lex = Lexicon(src, tgt, LinearMap.identity(2), csls_k=1)
        assert [c.word for c in lex.shortlist("a", DecoderConfig())] == ["x"]

    def test_build_shortlists_per_position(self):
        t = identity_fixture()
        lex = Lexicon(t, t, LinearMap.identity(t.dim))
        sl = build_shortlists(["w1", "q", "w1"], lex, DecoderConfig(candidates_per_word=2))
        assert len(sl) == 3 and sl[1] == CopyMarker("q") and sl[0] == sl[2]
        assert all(len(s) == 2 for s in (sl[0], sl[2]))

    def test_unnormalized_rejected(self):
        raw = EmbeddingTable(("a",), np.array([[2.0, 0.0]]))
        with pytest.raises(ValueError):
            Lexicon(raw, raw, LinearMap.identity(2))


@pytest.fixture(scope="module")
def ident():
    t = identity_fixture()
    lm = ngram_lm.loads_arpa(uniform_arpa(t.words))
    return t, lm


class TestBeam:
    def test_empty_sentence(self, ident):
        _, lm = ident
        assert beam_translate([], [], lm, DecoderConfig()) == []

    def test_identity_fixed_point(self, ident):
        t, lm = ident
        tr = Translator(Lexicon(t, t, LinearMap.identity(t.dim)), lm, DecoderConfig())
        sent = ["w3", "w0", "w11", "w3"]
        assert list(tr.translate(sent).target_words) == sent

    def test_two_by_two_hand_enumeration(self):
        lm = ngram_lm.train(["x y", "x y", "z w", "x w"], order=2)
        shortlists = [[Candidate("x", 0.6), Candidate("z", 0.5)],
                      [Candidate("w", 0.4), Candidate("y", 0.3)]]
        cfg = DecoderConfig(beam_size=4)
        ln10 = math.log(10)
        paths = {}
        for a, da in (("x", 0.6), ("z", 0.5)):
            for b, db in (("w", 0.4), ("y", 0.3)):
                lp = (ngram_lm.score_word(lm, ["<s>"], a) + ngram_lm.score_word(lm, ["<s>", a], b)
                      + ngram_lm.score_word(lm, [a, b], "</s>")) * ln10
                paths[(a, b)] = math.log((da + 1) / 2) + math.log((db + 1) / 2) + 0.1 * lp
        best = max(paths, key=paths.get)
        hyp = beam_search(shortlists, lm, cfg)
        assert hyp.target_words == best
        assert hyp.accumulated_score == pytest.approx(paths[best], abs=1e-12)

    def test_language_model_flips_lexical_choice(self):
        # "kitty" is slightly nearer lexically but "cat" is what follows "the"
        lm = ngram_lm.train(["the cat sleeps"] * 20 + ["a kitty sleeps"], order=2)
        shortlists = [[Candidate("the", 0.9)], [Candidate("kitty", 0.80), Candidate("cat", 0.78)]]
        nn = beam_search(shortlists, lm, DecoderConfig(lambda_lm=0.0))
        assert nn.target_words == ("the", "kitty")
        with_lm = beam_search(shortlists, lm, DecoderConfig(lambda_lm=0.1))
        assert with_lm.target_words == ("the", "cat")

    def test_full_beam_is_exhaustive(self):
        rng = random.Random(1)
        for _ in range(60):
            lm = random_lm(rng)
            sl = random_shortlists(rng)
            cfg = DecoderConfig(lambda_lm=rng.choice([0.0, 0.1, 1.0]), beam_size=1024)
            words, score, _ = exhaustive_best(sl, lm, cfg.lambda_emb, cfg.lambda_lm)
            hyp = beam_search(sl, lm, cfg)
            assert list(hyp.target_words) == words
            assert hyp.accumulated_score == pytest.approx(score, abs=1e-9)

    def test_output_length_and_copy_through(self):
        rng = random.Random(2)
        for _ in range(100):
            lm = random_lm(rng)
            sl = random_shortlists(rng, max_len=8, copy_rate=0.3)
            src = [f"s{i}" for i in range(len(sl))]
            out = beam_translate(src, sl, lm, DecoderConfig(beam_size=rng.randint(1, 5)))
            assert len(out) == len(src)
            for pos, entry in enumerate(sl):
                if isinstance(entry, CopyMarker):
                    assert out[pos] == entry.token

    def test_no_lm_single_candidate_is_nearest_neighbor(self, toy, toy_lm):
        cfg = DecoderConfig(lambda_lm=0.0, candidates_per_word=1)
        lex = Lexicon(toy.src, toy.tgt, toy.mapping, cfg.csls_k)
        tr = Translator(lex, toy_lm, cfg)
        for sent in toy.test_source[:20]:
            nn = [lex.shortlist(w, cfg)[0].word for w in sent]
            assert list(tr.translate(sent).target_words) == nn

    def test_wider_beam_never_worse_at_default_weights(self):
        rng = random.Random(3)
        for _ in range(200):
            lm = random_lm(rng)
            sl = random_shortlists(rng, max_len=6)
            scores = [beam_search(sl, lm, DecoderConfig(beam_size=b)).accumulated_score for b in (1, 2, 4, 16)]
            assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))

    def test_shortlist_length_mismatch(self, ident):
        _, lm = ident
        with pytest.raises(ValueError):
            beam_translate(["a", "b"], [[Candidate("a", 1.0)]], lm, DecoderConfig())

    def test_deterministic_tie_break(self):
        lm = ngram_lm.loads_arpa(uniform_arpa(["p", "q"]))
        # identical q and LM scores: the earlier shortlist rank wins
        sl = [[Candidate("q", 0.5), Candidate("p", 0.5)]]
        assert beam_search(sl, lm, DecoderConfig(beam_size=1)).target_words == ("q",)
        assert beam_search(sl, lm, DecoderConfig(beam_size=2)).target_words == ("q",)
