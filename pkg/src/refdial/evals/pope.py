"""Yes/no object-existence probing metrics (hallucination benchmark)."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from typing import Mapping

from .report import EvalReport

_YES_NO_RE = re.compile(r"\b(yes|no)\b")


@dataclass(frozen=True)
class PopeCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name, v in (("tp", self.tp), ("fp", self.fp), ("tn", self.tn), ("fn", self.fn)):
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def parse_yes_no(text: str) -> str | None:
    """First-token yes/no, then a word scan over the whole response."""
    tokens = [t.strip(string.punctuation) for t in text.lower().split()]
    tokens = [t for t in tokens if t]
    if tokens and tokens[0] in ("yes", "no"):
        return tokens[0]
    m = _YES_NO_RE.search(text.lower())
    return m.group(1) if m else None


def metrics_from_counts(counts: PopeCounts) -> dict:
    """Accuracy/precision/recall/F1/yes-rate in percent; 0 on empty denominators."""
    n = counts.n
    precision = 100.0 * counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = 100.0 * counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": 100.0 * (counts.tp + counts.tn) / n if n else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "yes_rate": 100.0 * (counts.tp + counts.fp) / n if n else 0.0,
        "tp": counts.tp,
        "fp": counts.fp,
        "tn": counts.tn,
        "fn": counts.fn,
    }


def metrics_from_pairs(pairs) -> dict:
    """Metric map from (ground_truth, predicted) yes/no label pairs."""
    tp = fp = tn = fn = 0
    for gt, pred in pairs:
        gt_yes = str(gt).lower() == "yes"
        pred_yes = str(pred).lower() == "yes"
        if pred_yes and gt_yes:
            tp += 1
        elif pred_yes:
            fp += 1
        elif gt_yes:
            fn += 1
        else:
            tn += 1
    return metrics_from_counts(PopeCounts(tp=tp, fp=fp, tn=tn, fn=fn))


def eval_pope(preds: Mapping[str, str], gts: Mapping[str, str]) -> EvalReport:
    """Grade yes/no predictions against binary ground truth.

    Responses that parse to neither word default to "no" (the tally of parse
    failures keeps that bias visible); missing predictions do the same and are
    listed separately.
    """
    per_item = []
    parse_failures = []
    missing = []
    tp = fp = tn = fn = 0
    for item_id, gt in gts.items():
        gt_label = str(gt).lower()
        if gt_label not in ("yes", "no"):
            raise ValueError(f"ground truth for {item_id!r} must be yes/no, got {gt!r}")
        raw = preds.get(item_id)
        parsed = None if raw is None else parse_yes_no(raw)
        if raw is None:
            missing.append(item_id)
        elif parsed is None:
            parse_failures.append(item_id)
        label = parsed or "no"
        if label == "yes" and gt_label == "yes":
            tp += 1
        elif label == "yes":
            fp += 1
        elif gt_label == "yes":
            fn += 1
        else:
            tn += 1
        per_item.append(
            {
                "item_id": item_id,
                "gt": gt_label,
                "predicted": label,
                "verdict": "correct" if label == gt_label else "incorrect",
                "parsed": parsed is not None,
            }
        )
    counts = PopeCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    return EvalReport(
        metric="pope",
        n_items=len(gts),
        aggregates=metrics_from_counts(counts),
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )
