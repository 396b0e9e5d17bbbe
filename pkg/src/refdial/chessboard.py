"""2x2 spatial-grounding probe: build a balanced quadrant set and grade it.

Images are split into four equal parts; only objects completely within one
part are eligible (boxes that touch or cross the midlines are ambiguous and
skipped). Grading accepts either a bare choice letter or a quadrant name in
prose, and always reports the unparseable rate next to the accuracy so
instruction-following failures stay distinguishable from spatial ones.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence
import re

from .coords import BBox, ImageSize, normalize_box
from .evals.report import EvalReport
from .records import ImageKey


class ChessboardError(ValueError):
    pass


class EmptyClassNameError(ChessboardError):
    pass


class InsufficientCandidatesError(ChessboardError):
    def __init__(self, quadrant: "Quadrant", needed: int, available: int):
        super().__init__(
            f"quadrant {quadrant.value}: needed {needed} items, only {available} available"
        )
        self.quadrant = quadrant
        self.needed = needed
        self.available = available


class Quadrant(str, Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"
    AMBIGUOUS = "ambiguous"


PARTS = (Quadrant.TOP_LEFT, Quadrant.TOP_RIGHT, Quadrant.BOTTOM_LEFT, Quadrant.BOTTOM_RIGHT)

LETTER_TO_QUADRANT = {
    "A": Quadrant.TOP_LEFT,
    "B": Quadrant.TOP_RIGHT,
    "C": Quadrant.BOTTOM_LEFT,
    "D": Quadrant.BOTTOM_RIGHT,
}

QUESTION_TEMPLATE = (
    "Which part is <expr> in if the picture is divided equally into four 2 by 2 parts? "
    "Choose from: (A) Top-left (B) Top-right (C) Bottom-left (D) Bottom-right."
)


def assign_quadrant(box: BBox, epsilon: float = 0.0) -> Quadrant:
    """Quadrant containing the whole box, or AMBIGUOUS.

    With the default epsilon 0 a box may touch the midline (coordinate exactly
    0.5) and still count as inside; a positive epsilon demands clearance.
    """
    if epsilon < 0:
        raise ChessboardError(f"epsilon must be >= 0, got {epsilon!r}")
    left = box.x_max <= 0.5 - epsilon
    right = box.x_min >= 0.5 + epsilon
    top = box.y_max <= 0.5 - epsilon
    bottom = box.y_min >= 0.5 + epsilon
    if left and top:
        return Quadrant.TOP_LEFT
    if right and top:
        return Quadrant.TOP_RIGHT
    if left and bottom:
        return Quadrant.BOTTOM_LEFT
    if right and bottom:
        return Quadrant.BOTTOM_RIGHT
    return Quadrant.AMBIGUOUS


def format_question(class_name: str) -> str:
    """The canonical probe question for a class name, byte-stable."""
    if not class_name:
        raise EmptyClassNameError("class name must be non-empty")
    return QUESTION_TEMPLATE.replace("<expr>", class_name, 1)


@dataclass(frozen=True)
class DetectionBox:
    """Detection-style source annotation: one named box on one image."""

    image: ImageKey
    size: ImageSize
    class_name: str
    box: tuple  # pixel (x0, y0, x1, y1)


@dataclass(frozen=True)
class ChessboardItem:
    item_id: str
    image: ImageKey
    class_name: str
    box: BBox
    answer: Quadrant
    question: str


def build_set(
    detections: Sequence[DetectionBox],
    per_part_quota: int = 600,
    seed: int = 0,
    epsilon: float = 0.0,
) -> list:
    """Sample a balanced probe set: ``per_part_quota`` items per quadrant.

    Candidates are shuffled under the seed and taken in order, with at most
    one item per image across the whole set. Raises
    InsufficientCandidatesError naming the short quadrant.
    """
    if per_part_quota < 1:
        raise ChessboardError(f"per_part_quota must be >= 1, got {per_part_quota}")
    by_quadrant: dict = {q: [] for q in PARTS}
    for det in detections:
        nbox = normalize_box(det.box, det.size)
        quadrant = assign_quadrant(nbox, epsilon)
        if quadrant is Quadrant.AMBIGUOUS:
            continue
        by_quadrant[quadrant].append((det, nbox))
    rng = random.Random(seed)
    used_images = set()
    items = []
    for quadrant in PARTS:
        candidates = by_quadrant[quadrant]
        order = list(range(len(candidates)))
        rng.shuffle(order)
        picked = 0
        for idx in order:
            if picked == per_part_quota:
                break
            det, nbox = candidates[idx]
            image_id = (det.image.collection, det.image.image_id)
            if image_id in used_images:
                continue
            used_images.add(image_id)
            items.append(
                ChessboardItem(
                    item_id=f"{det.image.collection}:{det.image.image_id}",
                    image=det.image,
                    class_name=det.class_name,
                    box=nbox,
                    answer=quadrant,
                    question=format_question(det.class_name),
                )
            )
            picked += 1
        if picked < per_part_quota:
            raise InsufficientCandidatesError(quadrant, per_part_quota, picked)
    return items


_LETTER_RE = re.compile(r"\b([ABCDabcd])\b")
_NAME_PATTERNS = [
    (re.compile(r"top[\s_-]*left", re.IGNORECASE), Quadrant.TOP_LEFT),
    (re.compile(r"top[\s_-]*right", re.IGNORECASE), Quadrant.TOP_RIGHT),
    (re.compile(r"bottom[\s_-]*left", re.IGNORECASE), Quadrant.BOTTOM_LEFT),
    (re.compile(r"bottom[\s_-]*right", re.IGNORECASE), Quadrant.BOTTOM_RIGHT),
]


def parse_choice(response: str) -> Quadrant | None:
    """First standalone choice letter, else the earliest quadrant name."""
    m = _LETTER_RE.search(response)
    if m:
        return LETTER_TO_QUADRANT[m.group(1).upper()]
    best_pos = None
    best_quadrant = None
    for pattern, quadrant in _NAME_PATTERNS:
        found = pattern.search(response)
        if found and (best_pos is None or found.start() < best_pos):
            best_pos = found.start()
            best_quadrant = quadrant
    return best_quadrant


def grade(predictions: Mapping[str, str], items: Sequence[ChessboardItem]) -> EvalReport:
    """Multiple-choice grading; unparseable responses count incorrect."""
    per_item = []
    parse_failures = []
    missing = []
    n_correct = 0
    for item in items:
        response = predictions.get(item.item_id)
        if response is None:
            missing.append(item.item_id)
            per_item.append(
                {"item_id": item.item_id, "verdict": "incorrect", "chosen": None, "parsed": False}
            )
            continue
        chosen = parse_choice(response)
        if chosen is None:
            parse_failures.append(item.item_id)
            per_item.append(
                {"item_id": item.item_id, "verdict": "incorrect", "chosen": None, "parsed": False}
            )
            continue
        correct = chosen == item.answer
        n_correct += correct
        per_item.append(
            {
                "item_id": item.item_id,
                "verdict": "correct" if correct else "incorrect",
                "chosen": chosen.value,
                "parsed": True,
            }
        )
    n = len(items)
    return EvalReport(
        metric="chessboard",
        n_items=n,
        aggregates={
            "accuracy": 100.0 * n_correct / n if n else 0.0,
            "unparseable_rate": 100.0 * len(parse_failures) / n if n else 0.0,
            "correct": n_correct,
        },
        per_item=per_item,
        parse_failure_ids=parse_failures,
        missing_ids=missing,
    )


# ---------------------------------------------------------------------------
# line-delimited exchange formats

def write_items(items: Iterable[ChessboardItem], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "item_id": item.item_id,
                        "image": item.image.to_json(),
                        "class_name": item.class_name,
                        "box": list(item.box.coords()),
                        "answer": item.answer.value,
                        "question": item.question,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
            n += 1
    return n


def read_items(path) -> list:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                items.append(
                    ChessboardItem(
                        item_id=str(obj["item_id"]),
                        image=ImageKey.from_json(obj["image"]),
                        class_name=str(obj["class_name"]),
                        box=BBox(*obj["box"]),
                        answer=Quadrant(obj["answer"]),
                        question=str(obj.get("question") or format_question(obj["class_name"])),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ChessboardError(f"{path}:{line_no}: bad item record: {exc}") from exc
    return items


def read_detections(path) -> list:
    """Detection file: {image, size, class_name, box} per line, pixel geometry."""
    detections = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                detections.append(
                    DetectionBox(
                        image=ImageKey.from_json(obj["image"]),
                        size=ImageSize(int(obj["size"]["width"]), int(obj["size"]["height"])),
                        class_name=str(obj["class_name"]),
                        box=tuple(float(v) for v in obj["box"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ChessboardError(f"{path}:{line_no}: bad detection record: {exc}") from exc
    return detections
