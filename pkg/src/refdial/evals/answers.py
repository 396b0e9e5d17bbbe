"""Answer extraction and short-answer scoring.

Assistant replies built by this toolkit end with a fixed marker sentence
("So the answer is ..."), which keeps answer extraction deterministic for
chain-of-thought style outputs. Answer comparison first applies a minimal
normalization rule set, documented on :func:`normalize_answer`.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..coords import RegionSpan, parse_regions
from .report import EvalReport

ANSWER_MARKER = "So the answer is"

_ARTICLES = frozenset({"a", "an", "the"})
_NUMBER_WORDS = {
    "zero": "0",
    "one": "1",
    "two": "2",
    "three": "3",
    "four": "4",
    "five": "5",
    "six": "6",
    "seven": "7",
    "eight": "8",
    "nine": "9",
    "ten": "10",
}
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


class WrongAnnotatorCountError(ValueError):
    pass


def normalize_answer(text: str) -> str:
    """Canonicalize an answer: lowercase, strip surrounding punctuation,
    collapse whitespace, drop articles, and map number words zero..ten to
    digits. Deliberately minimal and idempotent; scores computed with it are
    comparable only within this harness."""
    out = []
    for token in text.lower().split():
        token = token.strip(string.punctuation)
        if not token or token in _ARTICLES:
            continue
        out.append(_NUMBER_WORDS.get(token, token))
    return " ".join(out)


@dataclass(frozen=True)
class ExtractedAnswer:
    answer: str
    regions: list[RegionSpan]
    used_marker: bool

    @property
    def empty(self) -> bool:
        return not self.answer


def extract_final_answer(raw_text: str) -> ExtractedAnswer:
    """Pull the final answer out of a (possibly chain-of-thought) reply.

    The answer is whatever follows the last occurrence of the marker sentence,
    trimmed of trailing punctuation; with no marker present it falls back to
    the last sentence. Coordinate spans found anywhere in the text are
    returned alongside.
    """
    regions = parse_regions(raw_text)
    lowered = raw_text.lower()
    idx = lowered.rfind(ANSWER_MARKER.lower())
    if idx >= 0:
        answer = raw_text[idx + len(ANSWER_MARKER) :]
        used_marker = True
    else:
        sentences = [s for s in _SENTENCE_SPLIT.split(raw_text.strip()) if s.strip()]
        answer = sentences[-1] if sentences else ""
        used_marker = False
    answer = answer.strip().rstrip(".!?,;:").strip()
    return ExtractedAnswer(answer=answer, regions=regions, used_marker=used_marker)


def eval_short_answer(preds: Mapping[str, str], gts: Mapping[str, str]) -> EvalReport:
    """Exact-match accuracy after extraction + normalization on both sides."""
    per_item = []
    parse_failures = []
    missing = []
    n_correct = 0
    for item_id, gt in gts.items():
        raw = preds.get(item_id)
        if raw is None:
            missing.append(item_id)
            per_item.append({"item_id": item_id, "verdict": "incorrect", "parsed": False})
            continue
        extracted = extract_final_answer(raw)
        if extracted.empty:
            parse_failures.append(item_id)
            per_item.append({"item_id": item_id, "verdict": "incorrect", "parsed": False})
            continue
        pred_norm = normalize_answer(extracted.answer)
        gt_norm = normalize_answer(extract_final_answer(gt).answer)
        correct = pred_norm == gt_norm
        n_correct += correct
        per_item.append(
            {
                "item_id": item_id,
                "verdict": "correct" if correct else "incorrect",
                "pred_answer": pred_norm,
                "gt_answer": gt_norm,
                "parsed": True,
            }
        )
    n = len(gts)
    return EvalReport(
        metric="pointqa",
        n_items=n,
        aggregates={
            "accuracy": 100.0 * n_correct / n if n else 0.0,
            "correct": n_correct,
        },
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )


def vqa_accuracy(pred_answer: str, human_answers: Sequence[str]) -> float:
    """Standard 10-annotator consensus score: min(matching humans / 3, 1)."""
    if len(human_answers) != 10:
        raise WrongAnnotatorCountError(
            f"expected exactly 10 human answers, got {len(human_answers)}"
        )
    pred_norm = normalize_answer(pred_answer)
    matches = sum(normalize_answer(h) == pred_norm for h in human_answers)
    return min(matches / 3.0, 1.0)


def eval_vqa(preds: Mapping[str, str], gts: Mapping[str, Sequence[str]]) -> EvalReport:
    """Corpus VQA accuracy (percent of the consensus score)."""
    per_item = []
    parse_failures = []
    missing = []
    total = 0.0
    for item_id, human_answers in gts.items():
        raw = preds.get(item_id)
        if raw is None:
            missing.append(item_id)
            per_item.append({"item_id": item_id, "score": 0.0, "parsed": False})
            continue
        extracted = extract_final_answer(raw)
        if extracted.empty:
            parse_failures.append(item_id)
            per_item.append({"item_id": item_id, "score": 0.0, "parsed": False})
            continue
        score = vqa_accuracy(extracted.answer, human_answers)
        total += score
        per_item.append(
            {
                "item_id": item_id,
                "score": score,
                "pred_answer": normalize_answer(extracted.answer),
                "parsed": True,
            }
        )
    n = len(gts)
    return EvalReport(
        metric="vqa",
        n_items=n,
        aggregates={"accuracy": 100.0 * total / n if n else 0.0},
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )
