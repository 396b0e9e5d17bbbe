"""Consensus-based captioning metric (CIDEr-D variant).

Per n-gram order 1..4: tf-idf vectors over candidate and reference n-grams,
cosine similarity with candidate counts clipped to the reference's, a
length-difference gaussian penalty (sigma 6), a x10 scale, and a uniform
average over the orders. The corpus score is the mean over items; document
frequencies come from the reference sets of the scored corpus itself.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

log = logging.getLogger(__name__)


class MissingReferencesError(ValueError):
    pass


@dataclass
class CiderResult:
    corpus_score: float
    per_item: dict

    @property
    def scaled_x100(self) -> float:
        return self.corpus_score * 100.0


_NON_WORD = re.compile(r"[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace."""
    return _NON_WORD.sub(" ", text.lower()).split()


def _ngram_counts(tokens: Sequence[str], n_max: int) -> Counter:
    counts: Counter = Counter()
    for n in range(1, n_max + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


def cider(
    candidates: Mapping[str, str],
    references: Mapping[str, Sequence[str]],
    n_max: int = 4,
    sigma: float = 6.0,
) -> CiderResult:
    """Score candidate captions against per-item reference sets.

    Every candidate item must have at least one reference. Empty candidates
    score 0 with a warning.
    """
    for item_id in candidates:
        if not references.get(item_id):
            raise MissingReferencesError(f"item {item_id!r} has no references")

    # document frequency: number of items whose reference set contains the n-gram
    doc_freq: Counter = Counter()
    ref_counts: dict = {}
    for item_id in candidates:
        cooked = [_ngram_counts(tokenize(ref), n_max) for ref in references[item_id]]
        ref_counts[item_id] = cooked
        seen = set()
        for counts in cooked:
            seen.update(counts)
        doc_freq.update(seen)

    log_corpus = math.log(max(1.0, float(len(candidates))))

    def tfidf(counts: Counter):
        vec = [defaultdict(float) for _ in range(n_max)]
        norm = [0.0] * n_max
        length = 0
        for ngram, count in counts.items():
            idf = log_corpus - math.log(max(1.0, doc_freq[ngram]))
            k = len(ngram) - 1
            weight = count * idf
            vec[k][ngram] = weight
            norm[k] += weight * weight
            if k == 0:
                length += count
        return vec, [math.sqrt(x) for x in norm], length

    per_item: dict = {}
    for item_id, candidate in candidates.items():
        cand_tokens = tokenize(candidate)
        if not cand_tokens:
            log.warning("empty candidate for item %r scores 0", item_id)
            per_item[item_id] = 0.0
            continue
        cand_vec, cand_norm, cand_len = tfidf(_ngram_counts(cand_tokens, n_max))
        sims = [0.0] * n_max
        cooked_refs = ref_counts[item_id]
        for counts in cooked_refs:
            ref_vec, ref_norm, ref_len = tfidf(counts)
            delta = float(cand_len - ref_len)
            penalty = math.exp(-(delta * delta) / (2.0 * sigma * sigma))
            for k in range(n_max):
                if cand_norm[k] == 0.0 or ref_norm[k] == 0.0:
                    continue
                dot = 0.0
                for ngram, weight in cand_vec[k].items():
                    ref_weight = ref_vec[k].get(ngram, 0.0)
                    dot += min(weight, ref_weight) * ref_weight
                sims[k] += penalty * dot / (cand_norm[k] * ref_norm[k])
        per_item[item_id] = 10.0 * sum(s / len(cooked_refs) for s in sims) / n_max

    corpus = sum(per_item.values()) / len(per_item) if per_item else 0.0
    return CiderResult(corpus_score=corpus, per_item=per_item)
