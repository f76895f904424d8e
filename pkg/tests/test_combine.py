"""Hadamard fusion, per-column decoding, and the full tagging pipeline."""

from pathlib import Path

import numpy as np
import pytest

import oracles
from ornatag.combine import CombinedMatrix, combine, decode, tag_with_knowledge
from ornatag.errors import ShapeMismatch
from ornatag.rules import RuleSet, WeightMatrix, build_weight_matrix, parse_rules
from ornatag.score import StateSequence, TagSet, parse_melody, parse_tagset
from ornatag.tagger import (
    PredictionMatrix,
    TrainConfig,
    posterior_marginals,
    train,
    viterbi_decode,
)

DATA = Path(__file__).parent / "data"

TAGS4 = TagSet(("none", "trills", "fermata", "mordent"))


def prediction(columns) -> PredictionMatrix:
    return PredictionMatrix(np.array(columns, dtype=float).T)


class TestCombine:
    """Elementwise product with shape checking."""

    def test_all_ones_is_identity(self):
        p2 = prediction([[0.5, 0.3, 0.1, 0.1], [0.25, 0.25, 0.25, 0.25]])
        p1 = WeightMatrix(np.ones((4, 2)))
        np.testing.assert_array_equal(combine(p1, p2).values, p2.values)

    def test_column_arithmetic(self):
        p2 = prediction([[0.5, 0.3, 0.1, 0.1]])
        p1 = WeightMatrix(np.array([[1.0], [1.0], [6.0], [1.0]]))
        np.testing.assert_allclose(
            combine(p1, p2).values[:, 0], [0.5, 0.3, 0.6, 0.1])

    def test_shape_mismatch(self):
        p2 = prediction([[0.5, 0.5]])
        p1 = WeightMatrix(np.ones((3, 1)))
        with pytest.raises(ShapeMismatch):
            combine(p1, p2)


class TestDecode:
    """Per-column argmax with smallest-index ties."""

    def test_boosted_column(self):
        c = CombinedMatrix(np.array([[0.5], [0.3], [0.6], [0.1]]))
        assert tuple(decode(c, TAGS4)) == (2,)

    def test_tie_goes_to_smallest_index(self):
        c = CombinedMatrix(np.array([[0.4, 0.1], [0.4, 0.5], [0.2, 0.5]]))
        assert tuple(decode(c, TagSet(("a", "b", "c")))) == (0, 1)

    def test_column_scale_invariance(self):
        rng = np.random.default_rng(19)
        values = rng.uniform(0.01, 1.0, size=(4, 6))
        scaled = values * rng.uniform(0.5, 20.0, size=(1, 6))
        assert tuple(decode(CombinedMatrix(values), TAGS4)) == tuple(
            decode(CombinedMatrix(scaled), TAGS4))

    def test_wrong_tagset_size(self):
        c = CombinedMatrix(np.ones((3, 2)))
        with pytest.raises(ShapeMismatch):
            decode(c, TAGS4)


def trained_pipeline(seed=0, h=4, epochs=8):
    rng = np.random.default_rng(seed)
    tagset = TAGS4 if h == 4 else oracles.random_tagset(h)
    corpus = oracles.random_tagged_corpus(rng, tagset, n_entries=12, max_len=8)
    model = train(corpus, TrainConfig(epochs=epochs, batch_size=4, seed=seed))
    return model, corpus


class TestTagWithKnowledge:
    """End-to-end pipeline behavior."""

    def test_empty_ruleset_matches_p2_argmax(self):
        model, corpus = trained_pipeline(seed=1)
        empty = RuleSet(model.tagset, ())
        for melody, _ in corpus:
            result = tag_with_knowledge(model, empty, melody)
            expected = np.argmax(result.p2.values, axis=0)
            assert tuple(result.final) == tuple(int(k) for k in expected)
            np.testing.assert_array_equal(result.p1.values,
                                          np.ones(result.p2.shape))
            assert result.firing_log == ()

    def test_base_is_viterbi_path(self):
        model, corpus = trained_pipeline(seed=2)
        empty = RuleSet(model.tagset, ())
        melody = corpus.entries[0][0]
        result = tag_with_knowledge(model, empty, melody)
        assert tuple(result.base) == tuple(viterbi_decode(model, melody))

    def test_weight_threshold_flips_the_tag(self):
        """The rule wins exactly when weight * p2[tag] tops the column."""
        model, _ = trained_pipeline(seed=3)
        melody = parse_melody("C4:1 D4:4 E4:1\n")
        p2 = posterior_marginals(model, melody).values
        trills = model.tagset.index("trills")
        t = 1
        threshold = float(np.max(p2[:, t]) / p2[trills, t])
        assert threshold > 1.0  # seed chosen so trills is not already best
        for factor, expect_trills in ((0.99, False), (1.01, True)):
            rules = parse_rules(
                f"IF duration(@t) > 3 THEN tag(@t) = trills "
                f"WEIGHT {threshold * factor!r}\n", model.tagset)
            result = tag_with_knowledge(model, rules, melody)
            assert (result.final[t] == trills) is expect_trills

    def test_deterministic_replay(self):
        model, corpus = trained_pipeline(seed=4)
        rules = parse_rules(
            "IF duration(@t) > 3 THEN tag(@t) = trills WEIGHT 3\n"
            "IF pred(@t-1) == trills THEN tag(@t) = none WEIGHT 0.5\n",
            model.tagset)
        melody = corpus.entries[0][0]
        first = tag_with_knowledge(model, rules, melody)
        second = tag_with_knowledge(model, rules, melody)
        assert tuple(first.final) == tuple(second.final)
        np.testing.assert_array_equal(first.combined.values,
                                      second.combined.values)
        assert first.firing_log == second.firing_log

    def test_mismatched_tagset_rejected(self):
        model, _ = trained_pipeline(seed=5)
        other = TagSet(("x", "y"))
        with pytest.raises(ShapeMismatch):
            tag_with_knowledge(model, RuleSet(other, ()),
                               parse_melody("C4:1\n"))

    def test_boost_monotonicity(self):
        """Raising a single rule's weight never un-decodes its tag."""
        model, corpus = trained_pipeline(seed=6)
        melody = corpus.entries[0][0]
        previous: set[int] = set()
        for weight in (0.25, 0.5, 1.0, 2.0, 4.0, 16.0, 256.0):
            rules = parse_rules(
                f"IF duration(@t) >= 1 THEN tag(@t) = mordent "
                f"WEIGHT {weight!r}\n", model.tagset)
            result = tag_with_knowledge(model, rules, melody)
            mordent = model.tagset.index("mordent")
            decoded = {t for t, k in enumerate(result.final) if k == mordent}
            fired = {f.target for f in result.firing_log}
            assert previous & fired <= decoded
            previous = decoded


class TestStoredFlipFixture:
    """Stored p2 + ruleset reproduce the two-position flip."""

    def load(self):
        tagset = parse_tagset((DATA / "flip.tagset").read_text())
        melody = parse_melody((DATA / "flip.melody").read_text())
        rules = parse_rules((DATA / "flip.rules").read_text(), tagset)
        p2 = PredictionMatrix(np.loadtxt(DATA / "flip.p2"))
        return tagset, melody, rules, p2

    def test_base_sequence(self):
        tagset, melody, rules, p2 = self.load()
        base = decode(CombinedMatrix(p2.values), tagset)
        assert [tagset.name(k) for k in base] == [
            "trills", "none", "fermata", "none", "mordent"]

    def test_fused_sequence_flips_two_positions(self):
        tagset, melody, rules, p2 = self.load()
        base = decode(CombinedMatrix(p2.values), tagset)
        p1 = build_weight_matrix(rules, melody, base)
        final = decode(combine(p1, p2), tagset)
        assert [tagset.name(k) for k in final] == [
            "trills", "none", "mordent", "none", "trills"]

    def test_flip_is_exactly_two_rule_firings(self):
        tagset, melody, rules, p2 = self.load()
        base = decode(CombinedMatrix(p2.values), tagset)
        log = []
        p1 = build_weight_matrix(rules, melody, base, log)
        assert [(f.target, f.tag) for f in log] == [
            (2, "mordent"), (4, "trills")]
        expected = np.ones((4, 5))
        expected[3, 2] = 4.0
        expected[1, 4] = 4.0
        np.testing.assert_array_equal(p1.values, expected)
