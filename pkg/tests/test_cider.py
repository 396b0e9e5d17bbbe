"""Consensus captioning metric vs a hand-derived oracle.

The toy-corpus expectation below was worked out on paper before the metric was
implemented: tf-idf weights are ln 2 for every n-gram seen in exactly one
item's references (0 for "the", which both references share), cosines reduce
to shared-count ratios, and the length penalty is exp(-4/72). The frozen
constants are the oracle's output.
"""

import math

import pytest

from refdial.evals.cider import MissingReferencesError, cider, tokenize

# fixed 2-item toy corpus
CANDIDATES = {
    "i1": "two cats sit on the old mat",
    "i2": "a small dog runs fast",
}
REFERENCES = {
    "i1": ["two cats sit on the old mat"],
    "i2": ["a small dog runs across the yard"],
}

ORACLE_ITEM1 = 10.0
ORACLE_ITEM2 = 5.2326229258731844
ORACLE_CORPUS = 7.616311462936592


def test_matches_hand_oracle():
    result = cider(CANDIDATES, REFERENCES)
    assert result.per_item["i1"] == pytest.approx(ORACLE_ITEM1, abs=1e-6)
    assert result.per_item["i2"] == pytest.approx(ORACLE_ITEM2, abs=1e-6)
    assert result.corpus_score == pytest.approx(ORACLE_CORPUS, abs=1e-6)


def test_oracle_arithmetic_reproduced():
    # independent re-derivation of the frozen constants, spelled out step by step
    cos1 = 4 / math.sqrt(5 * 6)
    cos2 = 3 / math.sqrt(4 * 6)
    cos3 = 2 / math.sqrt(3 * 5)
    cos4 = 1 / math.sqrt(2 * 4)
    penalty = math.exp(-4.0 / 72.0)
    item2 = 10.0 * penalty * (cos1 + cos2 + cos3 + cos4) / 4.0
    assert item2 == pytest.approx(ORACLE_ITEM2, abs=1e-12)
    assert (10.0 + item2) / 2.0 == pytest.approx(ORACLE_CORPUS, abs=1e-12)


def test_zero_overlap_scores_zero():
    result = cider(
        {"i1": CANDIDATES["i1"], "i2": "purple elephants dance tonight"},
        REFERENCES,
    )
    assert result.per_item["i2"] == 0.0


def test_empty_candidate_scores_zero():
    result = cider({"i1": "", "i2": CANDIDATES["i2"]}, REFERENCES)
    assert result.per_item["i1"] == 0.0


def test_missing_references():
    with pytest.raises(MissingReferencesError):
        cider({"i1": "a cat"}, {"i1": []})
    with pytest.raises(MissingReferencesError):
        cider({"i1": "a cat"}, {})


def test_item_order_invariance():
    forward = cider(CANDIDATES, REFERENCES)
    reordered = cider(
        dict(reversed(list(CANDIDATES.items()))),
        REFERENCES,
    )
    assert forward.corpus_score == pytest.approx(reordered.corpus_score, abs=1e-15)


def test_self_corpus_within_scale_bound():
    # sole-item corpus: idf collapses to 0, score stays within the x10 bound
    result = cider({"i": "a dog runs fast"}, {"i": ["a dog runs fast"]})
    assert 0.0 <= result.per_item["i"] <= 10.0


def test_tokenize():
    assert tokenize("A small, fast dog!") == ["a", "small", "fast", "dog"]
