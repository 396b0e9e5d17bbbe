"""Box-output evaluation: expression grounding accuracy and which-box choice."""

from __future__ import annotations

from typing import Mapping, Sequence

from ..coords import BBox, first_box, parse_regions
from .report import EvalReport

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two normalized boxes, in [0, 1].

    Degenerate (zero-area) boxes score 0 against everything, including an
    identical degenerate box (union 0 is defined as 0).
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


def eval_rec(
    preds: Mapping[str, str],
    gts: Mapping[str, BBox],
    threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """Grade grounding predictions: first box span vs ground truth at IoU cutoff.

    A prediction with no parseable box span counts incorrect and is tallied as
    a parse failure; a missing prediction counts incorrect and is tallied
    under missing ids.
    """
    per_item = []
    parse_failures = []
    missing = []
    n_correct = 0
    for item_id, gt_box in gts.items():
        raw = preds.get(item_id)
        if raw is None:
            missing.append(item_id)
            per_item.append({"item_id": item_id, "verdict": "incorrect", "iou": None, "parsed": False})
            continue
        box = first_box(parse_regions(raw))
        if box is None:
            parse_failures.append(item_id)
            per_item.append({"item_id": item_id, "verdict": "incorrect", "iou": None, "parsed": False})
            continue
        overlap = iou(box, gt_box)
        correct = overlap >= threshold
        n_correct += correct
        per_item.append(
            {
                "item_id": item_id,
                "verdict": "correct" if correct else "incorrect",
                "iou": overlap,
                "parsed": True,
            }
        )
    n = len(gts)
    return EvalReport(
        metric="rec",
        n_items=n,
        aggregates={
            "accuracy": 100.0 * n_correct / n if n else 0.0,
            "threshold": threshold,
            "correct": n_correct,
        },
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )


def choose_box(pred: BBox, options: Sequence[BBox]) -> int:
    """Index of the option with the highest IoU; ties go to the lowest index."""
    best_idx = 0
    best = -1.0
    for idx, option in enumerate(options):
        overlap = iou(pred, option)
        if overlap > best:
            best = overlap
            best_idx = idx
    return best_idx


def which_box_verdict(raw_text: str, options: Sequence[BBox], correct_index: int) -> dict:
    """Grade one which-box response; unparseable output counts incorrect."""
    if len(options) != 4:
        raise ValueError(f"which-box items carry exactly 4 options, got {len(options)}")
    box = first_box(parse_regions(raw_text))
    if box is None:
        return {"chosen": None, "verdict": "incorrect", "parsed": False}
    chosen = choose_box(box, options)
    return {
        "chosen": chosen,
        "verdict": "correct" if chosen == correct_index else "incorrect",
        "parsed": True,
    }


def eval_which_box(preds: Mapping[str, str], gts: Mapping[str, tuple]) -> EvalReport:
    """Corpus which-box accuracy; ``gts`` maps item id to (options, correct_index)."""
    per_item = []
    parse_failures = []
    missing = []
    n_correct = 0
    for item_id, (options, correct_index) in gts.items():
        raw = preds.get(item_id)
        if raw is None:
            missing.append(item_id)
            per_item.append({"item_id": item_id, "chosen": None, "verdict": "incorrect", "parsed": False})
            continue
        verdict = which_box_verdict(raw, options, correct_index)
        if not verdict["parsed"]:
            parse_failures.append(item_id)
        n_correct += verdict["verdict"] == "correct"
        per_item.append({"item_id": item_id, **verdict})
    n = len(gts)
    return EvalReport(
        metric="which_box",
        n_items=n,
        aggregates={
            "accuracy": 100.0 * n_correct / n if n else 0.0,
            "correct": n_correct,
        },
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )
