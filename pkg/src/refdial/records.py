"""Unified instruction records and their on-disk form.

Both source annotations and built records travel as line-delimited JSON,
UTF-8, one object per line. Record files start with a header line so a
truncated or foreign file is rejected up front; import files have no header
(an empty annotations file is valid, with a warning).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .coords import BBox, ImageSize, Point, RegionSpan, parse_regions
from .templates import EXPR, OBJS, QUESTION, TaskKind

RECORDS_HEADER = {"format": "refdial.instruction_records", "version": 1}

USER = "user"
ASSISTANT = "assistant"
IMAGE_TOKEN = "<image>"

# content placeholders; <image> is not residual, it stays as the image marker
_RESIDUAL_TOKENS = (EXPR, OBJS, QUESTION)


class RecordError(ValueError):
    pass


class CorruptRecordError(RecordError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


@dataclass(frozen=True)
class ImageKey:
    """Identity of a source image for joins and leakage exclusion.

    Two keys refer to the same image when both carry a content hash and the
    hashes agree, or, lacking a hash on either side, when the
    (collection, image_id) pair agrees. Hash comparison wins when available
    because id collisions across dataset releases are exactly the leakage
    path the exclusion guards against.
    """

    collection: str
    image_id: str
    content_hash: str | None = None

    def same_image(self, other: "ImageKey") -> bool:
        if self.content_hash and other.content_hash:
            return self.content_hash == other.content_hash
        return (self.collection, self.image_id) == (other.collection, other.image_id)

    def to_json(self) -> dict:
        obj = {"collection": self.collection, "image_id": self.image_id}
        if self.content_hash:
            obj["content_hash"] = self.content_hash
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ImageKey":
        return cls(
            collection=str(obj["collection"]),
            image_id=str(obj["image_id"]),
            content_hash=obj.get("content_hash"),
        )


class AnnotationKind(str, Enum):
    REFERRING_EXPRESSION = "referring_expression"
    REGION_CAPTION = "region_caption"
    ENTITY_CAPTION = "entity_caption"
    POINTQA = "pointqa"
    MC_BOXQA = "mc_boxqa"
    COT_QA = "cot_qa"
    CAPTION = "caption"
    VQA = "vqa"


@dataclass(frozen=True)
class SourceAnnotation:
    image: ImageKey
    size: ImageSize
    kind: AnnotationKind
    payload: dict
    source_line: int | None = None


@dataclass(frozen=True)
class Turn:
    speaker: str  # "user" | "assistant"
    text: str


@dataclass
class InstructionRecord:
    image: ImageKey
    task: TaskKind
    turns: list  # list[Turn]
    regions: list  # list[(turn_index, RegionSpan)]
    stage_tag: str = "stage1"
    provenance: dict = field(default_factory=dict)


def collect_regions(turns: Sequence[Turn]) -> list:
    """Re-parse every turn and gather its valid coordinate spans."""
    regions = []
    for idx, turn in enumerate(turns):
        for span in parse_regions(turn.text):
            if span.ok:
                regions.append((idx, span))
    return regions


def validate_record(record: InstructionRecord) -> list:
    """Return the list of invariant violations (empty when the record is sound)."""
    problems = []
    if not record.turns:
        return ["record has no turns"]
    for idx, turn in enumerate(record.turns):
        expected = USER if idx % 2 == 0 else ASSISTANT
        if turn.speaker != expected:
            problems.append(f"turn {idx}: expected speaker {expected!r}, got {turn.speaker!r}")
    image_tokens = sum(turn.text.count(IMAGE_TOKEN) for turn in record.turns)
    if record.turns[0].text.count(IMAGE_TOKEN) != 1 or image_tokens != 1:
        problems.append("the first user turn must contain <image> exactly once")
    for idx, turn in enumerate(record.turns):
        for token in _RESIDUAL_TOKENS:
            if token in turn.text:
                problems.append(f"turn {idx}: residual placeholder {token}")
    expected_regions = collect_regions(record.turns)
    if expected_regions != list(map(tuple, record.regions)):
        problems.append("recorded regions do not match a re-parse of the turns")
    for idx, turn in enumerate(record.turns):
        for span in parse_regions(turn.text):
            if not span.ok:
                problems.append(f"turn {idx}: malformed coordinate group {span.raw_text!r}")
    if record.stage_tag not in ("stage1", "stage2"):
        problems.append(f"unknown stage tag {record.stage_tag!r}")
    return problems


# ---------------------------------------------------------------------------
# JSON forms

def span_to_json(span: RegionSpan) -> dict:
    return {
        "byte_start": span.byte_start,
        "byte_end": span.byte_end,
        "raw_text": span.raw_text,
        "kind": span.kind,
        "coords": list(span.geometry.coords()),
    }


def span_from_json(obj: dict) -> RegionSpan:
    coords = obj["coords"]
    geometry = Point(*coords) if obj["kind"] == "point" else BBox(*coords)
    return RegionSpan(
        byte_start=int(obj["byte_start"]),
        byte_end=int(obj["byte_end"]),
        raw_text=str(obj["raw_text"]),
        geometry=geometry,
    )


def record_to_json(record: InstructionRecord) -> dict:
    return {
        "image": record.image.to_json(),
        "task": record.task.value,
        "turns": [{"speaker": t.speaker, "text": t.text} for t in record.turns],
        "regions": [[idx, span_to_json(span)] for idx, span in record.regions],
        "stage_tag": record.stage_tag,
        "provenance": record.provenance,
    }


def record_from_json(obj: dict) -> InstructionRecord:
    return InstructionRecord(
        image=ImageKey.from_json(obj["image"]),
        task=TaskKind(obj["task"]),
        turns=[Turn(speaker=t["speaker"], text=t["text"]) for t in obj["turns"]],
        regions=[(int(idx), span_from_json(span)) for idx, span in obj["regions"]],
        stage_tag=obj.get("stage_tag", "stage1"),
        provenance=obj.get("provenance", {}),
    )


def write_records(records: Iterable[InstructionRecord], path) -> int:
    """Write a header line followed by one record per line; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(RECORDS_HEADER) + "\n")
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_records(path) -> list:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            if header.get("format") != RECORDS_HEADER["format"]:
                raise ValueError(f"unexpected format {header.get('format')!r}")
        except (json.JSONDecodeError, AttributeError, ValueError) as exc:
            raise CorruptRecordError(path, 1, f"bad header: {exc}") from exc
        records = []
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorruptRecordError(path, line_no, str(exc)) from exc
    return records
