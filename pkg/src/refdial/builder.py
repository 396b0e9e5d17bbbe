"""Reorganize source annotations into unified instruction records.

Adapters read a single canonical line-delimited schema (pixel geometry,
kind-specific payloads) rather than upstream release formats, which keeps the
pipeline testable on synthetic fixtures. Building normalizes all geometry,
serializes it through the coordinate grammar, samples a prompt template per
record from a seed stream, and re-parses its own output so every emitted
record satisfies the record invariants by construction.
"""

from __future__ import annotations

import itertools
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .coords import (
    CoordError,
    ImageSize,
    normalize_box,
    normalize_point,
    serialize_box,
    serialize_point,
)
from .records import (
    ASSISTANT,
    USER,
    AnnotationKind,
    ImageKey,
    InstructionRecord,
    SourceAnnotation,
    Turn,
    collect_regions,
)
from .templates import (
    EXPR,
    IMAGE,
    OBJS,
    QUESTION,
    TaskKind,
    TemplateRegistry,
    instantiate,
)


class BuilderError(ValueError):
    pass


class SchemaMismatchError(BuilderError):
    pass


class IncompatibleKindError(BuilderError):
    pass


class MissingGeometryError(BuilderError):
    pass


class MentionNotFoundError(BuilderError):
    pass


class EmptyBoostedStreamError(BuilderError):
    pass


class GCoTMode(str, Enum):
    QA = "qa"
    QCA = "qca"
    QCPOINTA = "qcpointa"
    QCBOXA = "qcboxa"


ANSWER_MARKER = "So the answer is"

_GCOT_TASK = {
    GCoTMode.QA: TaskKind.VQA_QA,
    GCoTMode.QCA: TaskKind.VQA_QCA,
    GCoTMode.QCPOINTA: TaskKind.VQA_QCPOINTA,
    GCoTMode.QCBOXA: TaskKind.VQA_QCBOXA,
}

# which annotation kind feeds which buildable task
TASK_SOURCE_KIND = {
    TaskKind.REC: AnnotationKind.REFERRING_EXPRESSION,
    TaskKind.REG: AnnotationKind.REFERRING_EXPRESSION,
    TaskKind.GROUNDING_CAPTION: AnnotationKind.REGION_CAPTION,
    TaskKind.SPOTTING_CAPTION: AnnotationKind.ENTITY_CAPTION,
    TaskKind.CAPTIONING: AnnotationKind.CAPTION,
    TaskKind.VQA_QA: AnnotationKind.VQA,
    TaskKind.POINTQA: AnnotationKind.POINTQA,
    TaskKind.POINTQA_V7W: AnnotationKind.MC_BOXQA,
}


# ---------------------------------------------------------------------------
# import

@dataclass(frozen=True)
class RowIssue:
    line: int
    message: str


@dataclass
class ImportResult:
    annotations: list
    issues: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise SchemaMismatchError(f"line {line_no}: missing field {key!r}")
    return obj[key]


def _as_box(value, line_no: int) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 4):
        raise SchemaMismatchError(f"line {line_no}: box must be an array of 4 numbers")
    return tuple(float(v) for v in value)


def _as_point(value, line_no: int) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise SchemaMismatchError(f"line {line_no}: point must be an array of 2 numbers")
    return tuple(float(v) for v in value)


def _check_payload(kind: AnnotationKind, payload: dict, size: ImageSize, line_no: int):
    """Structural problems raise SchemaMismatch; geometry problems are returned."""

    def check_box(value):
        try:
            normalize_box(_as_box(value, line_no), size)
        except CoordError as exc:
            return str(exc)
        return None

    def check_point(value):
        try:
            normalize_point(_as_point(value, line_no), size)
        except CoordError as exc:
            return str(exc)
        return None

    def text_field(name):
        value = _require(payload, name, line_no)
        if not isinstance(value, str) or not value.strip():
            raise SchemaMismatchError(f"line {line_no}: field {name!r} must be non-empty text")
        return value

    problems = []
    if kind == AnnotationKind.REFERRING_EXPRESSION:
        text_field("expression")
        problems.append(check_box(_require(payload, "box", line_no)))
    elif kind == AnnotationKind.REGION_CAPTION:
        text_field("caption")
        problems.append(check_box(_require(payload, "box", line_no)))
    elif kind == AnnotationKind.ENTITY_CAPTION:
        text_field("sentence")
        entities = _require(payload, "entities", line_no)
        if not isinstance(entities, list) or not entities:
            raise SchemaMismatchError(f"line {line_no}: 'entities' must be a non-empty array")
        for ent in entities:
            if not isinstance(ent, dict) or not isinstance(ent.get("name"), str):
                raise SchemaMismatchError(f"line {line_no}: entity needs a 'name' field")
            problems.append(check_box(_require(ent, "box", line_no)))
    elif kind == AnnotationKind.POINTQA:
        text_field("question")
        text_field("answer")
        if "point" not in payload and "box" not in payload:
            raise SchemaMismatchError(f"line {line_no}: pointqa needs a 'point' or a 'box'")
        if "point" in payload:
            problems.append(check_point(payload["point"]))
        if "box" in payload:
            problems.append(check_box(payload["box"]))
    elif kind == AnnotationKind.MC_BOXQA:
        text_field("question")
        options = _require(payload, "options", line_no)
        if not isinstance(options, list) or len(options) != 4:
            raise SchemaMismatchError(f"line {line_no}: 'options' must be an array of 4 boxes")
        for option in options:
            problems.append(check_box(option))
        correct = _require(payload, "correct_index", line_no)
        if not isinstance(correct, int) or not 0 <= correct <= 3:
            raise SchemaMismatchError(f"line {line_no}: 'correct_index' must be 0..3")
    elif kind == AnnotationKind.COT_QA:
        text_field("question")
        text_field("chain")
        text_field("answer")
        objects = _require(payload, "objects", line_no)
        if not isinstance(objects, list):
            raise SchemaMismatchError(f"line {line_no}: 'objects' must be an array")
        for obj in objects:
            if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
                raise SchemaMismatchError(f"line {line_no}: cot object needs a 'name' field")
            if "point" in obj:
                problems.append(check_point(obj["point"]))
            if "box" in obj:
                problems.append(check_box(obj["box"]))
    elif kind == AnnotationKind.CAPTION:
        text_field("caption")
    elif kind == AnnotationKind.VQA:
        text_field("question")
        answers = _require(payload, "answers", line_no)
        if not isinstance(answers, list) or not answers or not all(isinstance(a, str) for a in answers):
            raise SchemaMismatchError(f"line {line_no}: 'answers' must be a non-empty string array")
    return [p for p in problems if p]


def import_source(path, kind: AnnotationKind) -> ImportResult:
    """Read canonical line-delimited annotations of the expected kind.

    Structural mismatches (wrong shape, wrong kind, missing fields) raise
    SchemaMismatchError; out-of-extent geometry is collected per row and the
    valid rows are returned.
    """
    result = ImportResult(annotations=[])
    saw_content = False
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            saw_content = True
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatchError(f"line {line_no}: not valid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise SchemaMismatchError(f"line {line_no}: expected a JSON object")
            image_obj = _require(obj, "image", line_no)
            size_obj = _require(obj, "size", line_no)
            row_kind = _require(obj, "kind", line_no)
            payload = _require(obj, "payload", line_no)
            if row_kind != kind.value:
                raise SchemaMismatchError(
                    f"line {line_no}: expected kind {kind.value!r}, found {row_kind!r}"
                )
            try:
                image = ImageKey.from_json(image_obj)
                size = ImageSize(int(size_obj["width"]), int(size_obj["height"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaMismatchError(f"line {line_no}: bad image/size: {exc}") from exc
            problems = _check_payload(kind, payload, size, line_no)
            if problems:
                for problem in problems:
                    result.issues.append(RowIssue(line=line_no, message=problem))
                continue
            result.annotations.append(
                SourceAnnotation(image=image, size=size, kind=kind, payload=payload, source_line=line_no)
            )
    if not saw_content:
        result.warnings.append(f"{path}: empty annotations file")
    return result


def load_image_keys(path) -> list:
    """Holdout key file: one {collection, image_id[, content_hash]} per line."""
    keys = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                keys.append(ImageKey.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaMismatchError(f"{path}:{line_no}: bad image key: {exc}") from exc
    return keys


# ---------------------------------------------------------------------------
# mention annotation

def annotate_mentions(text: str, mentions: Sequence[tuple]) -> str:
    """Insert serialized geometry right after each mentioned span of text.

    ``mentions`` is a sequence of (name, start_or_None, coord_text). Explicit
    offsets are verified; without one, each mention claims the first
    case-insensitive occurrence of its name after the previous claim.
    """
    placements = []
    lowered = text.lower()
    cursor = 0
    for name, start, coord_text in mentions:
        if start is not None:
            if text[start : start + len(name)] != name:
                raise MentionNotFoundError(
                    f"offset {start} does not hold mention {name!r}"
                )
            pos = start
        else:
            pos = lowered.find(name.lower(), cursor)
            if pos < 0:
                pos = lowered.find(name.lower())
            if pos < 0:
                raise MentionNotFoundError(f"mention {name!r} not found in text")
        end = pos + len(name)
        placements.append((end, coord_text))
        cursor = end
    out = []
    prev = 0
    for end, coord_text in sorted(placements, key=lambda p: p[0]):
        out.append(text[prev:end])
        out.append(" " + coord_text)
        prev = end
    out.append(text[prev:])
    return "".join(out)


# ---------------------------------------------------------------------------
# record building

def _record(image, task, user_text, assistant_text, stage_tag, provenance):
    turns = [Turn(USER, user_text), Turn(ASSISTANT, assistant_text)]
    return InstructionRecord(
        image=image,
        task=task,
        turns=turns,
        regions=collect_regions(turns),
        stage_tag=stage_tag,
        provenance=provenance,
    )


def _provenance(ann: SourceAnnotation) -> dict:
    return {
        "kind": ann.kind.value,
        "collection": ann.image.collection,
        "image_id": ann.image.image_id,
        "line": ann.source_line,
    }


def _modal_answer(answers: Sequence[str]) -> str:
    counts = Counter(answers)
    best = max(counts.values())
    for answer in answers:  # tie goes to the earliest annotator
        if counts[answer] == best:
            return answer
    return answers[0]


def build_records(
    annotations: Sequence[SourceAnnotation],
    task: TaskKind,
    registry: TemplateRegistry,
    decimals: int = 3,
    seed: int = 0,
    stage_tag: str = "stage1",
) -> list:
    """One instruction record per annotation, under a seeded template stream."""
    expected_kind = TASK_SOURCE_KIND.get(task)
    if expected_kind is None:
        raise IncompatibleKindError(f"task {task.value!r} is not built from source annotations")
    for ann in annotations:
        if ann.kind != expected_kind:
            raise IncompatibleKindError(
                f"annotation kind {ann.kind.value!r} is not compatible with task {task.value!r}"
            )
    rng = random.Random(seed)
    records = []
    for ann in annotations:
        template = registry.sample(task, rng.randrange(2**32))
        payload = ann.payload
        bindings = {IMAGE: IMAGE}
        if task == TaskKind.REC:
            box = serialize_box(normalize_box(payload["box"], ann.size), decimals)
            bindings[EXPR] = payload["expression"]
            user, assistant = instantiate(template, bindings), box
        elif task == TaskKind.REG:
            box = serialize_box(normalize_box(payload["box"], ann.size), decimals)
            bindings[OBJS] = box
            user, assistant = instantiate(template, bindings), payload["expression"]
        elif task == TaskKind.GROUNDING_CAPTION:
            box = serialize_box(normalize_box(payload["box"], ann.size), decimals)
            bindings[OBJS] = box
            user, assistant = instantiate(template, bindings), payload["caption"]
        elif task == TaskKind.SPOTTING_CAPTION:
            mentions = [
                (
                    ent["name"],
                    ent.get("start"),
                    serialize_box(normalize_box(ent["box"], ann.size), decimals),
                )
                for ent in payload["entities"]
            ]
            user = instantiate(template, bindings)
            assistant = annotate_mentions(payload["sentence"], mentions)
        elif task == TaskKind.CAPTIONING:
            user, assistant = instantiate(template, bindings), payload["caption"]
        elif task == TaskKind.VQA_QA:
            bindings[QUESTION] = payload["question"]
            user, assistant = instantiate(template, bindings), _modal_answer(payload["answers"])
        elif task == TaskKind.POINTQA:
            if "point" in payload:
                obj_text = serialize_point(normalize_point(payload["point"], ann.size), decimals)
            else:
                obj_text = serialize_box(normalize_box(payload["box"], ann.size), decimals)
            bindings[OBJS] = obj_text
            bindings[QUESTION] = payload["question"]
            user, assistant = instantiate(template, bindings), payload["answer"]
        elif task == TaskKind.POINTQA_V7W:
            options = [
                serialize_box(normalize_box(option, ann.size), decimals)
                for option in payload["options"]
            ]
            bindings[OBJS] = ", ".join(options)
            bindings[QUESTION] = payload["question"]
            user, assistant = instantiate(template, bindings), options[payload["correct_index"]]
        else:  # pragma: no cover - guarded by TASK_SOURCE_KIND above
            raise IncompatibleKindError(f"unhandled task {task.value!r}")
        records.append(_record(ann.image, task, user, assistant, stage_tag, _provenance(ann)))
    return records


def _answer_sentence(answer: str) -> str:
    return f"{ANSWER_MARKER} {str(answer).strip().rstrip('.')}."


def build_gcot_records(
    annotations: Sequence[SourceAnnotation],
    mode: GCoTMode,
    registry: TemplateRegistry,
    decimals: int = 3,
    seed: int = 0,
    stage_tag: str = "stage1",
) -> list:
    """Chain-of-thought records in the requested grounding mode.

    The final answer always terminates the assistant turn after the fixed
    marker sentence, so extraction downstream stays deterministic.
    """
    for ann in annotations:
        if ann.kind != AnnotationKind.COT_QA:
            raise IncompatibleKindError(
                f"annotation kind {ann.kind.value!r} is not compatible with chain records"
            )
    task = _GCOT_TASK[mode]
    rng = random.Random(seed)
    records = []
    for ann in annotations:
        template = registry.sample(task, rng.randrange(2**32))
        payload = ann.payload
        user = instantiate(template, {IMAGE: IMAGE, QUESTION: payload["question"]})
        answer = _answer_sentence(payload["answer"])
        if mode == GCoTMode.QA:
            assistant = answer
        elif mode == GCoTMode.QCA:
            assistant = f"{payload['chain'].strip()} {answer}"
        else:
            mentions = []
            for obj in payload.get("objects", []):
                if mode == GCoTMode.QCPOINTA:
                    if "point" in obj:
                        point = normalize_point(obj["point"], ann.size)
                    elif "box" in obj:
                        point = normalize_box(obj["box"], ann.size).center()
                    else:
                        raise MissingGeometryError(
                            f"object {obj.get('name')!r} has no point or box for mode {mode.value}"
                        )
                    coord_text = serialize_point(point, decimals)
                else:  # QCBOXA
                    if "box" not in obj:
                        raise MissingGeometryError(
                            f"object {obj.get('name')!r} has no box for mode {mode.value}"
                        )
                    coord_text = serialize_box(normalize_box(obj["box"], ann.size), decimals)
                mentions.append((obj["name"], obj.get("start"), coord_text))
            chain = annotate_mentions(payload["chain"].strip(), mentions)
            assistant = f"{chain} {answer}"
        records.append(_record(ann.image, task, user, assistant, stage_tag, _provenance(ann)))
    return records


# ---------------------------------------------------------------------------
# leakage filter and two-stage sampling

def filter_leakage(records: Sequence[InstructionRecord], holdout: Iterable[ImageKey]):
    """Drop records whose image is in the holdout; returns (kept, dropped)."""
    holdout = list(holdout)
    hashes = {k.content_hash for k in holdout if k.content_hash}
    pairs_all = {(k.collection, k.image_id) for k in holdout}
    pairs_without_hash = {(k.collection, k.image_id) for k in holdout if not k.content_hash}
    kept = []
    dropped = 0
    for record in records:
        key = record.image
        if key.content_hash:
            leaked = key.content_hash in hashes or (key.collection, key.image_id) in pairs_without_hash
        else:
            leaked = (key.collection, key.image_id) in pairs_all
        if leaked:
            dropped += 1
        else:
            kept.append(record)
    return kept, dropped


def stage_sampler(
    primary_stream: Iterable,
    boosted_stream: Iterable | None = None,
    stage: int = 1,
    ratio: float = 0.5,
    seed: int = 0,
):
    """Infinite training-record sampler for the two training stages.

    Stage 1 cycles the primary records only. Stage 2 flips a seeded coin per
    draw and takes the boosted stream (dialogue + generated conversations)
    with probability ``ratio``, 0.5 by default.
    """
    if stage not in (1, 2):
        raise ValueError(f"stage must be 1 or 2, got {stage!r}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio!r}")
    primary = list(primary_stream)
    if stage == 1:
        def stage_one():
            while primary:
                yield from primary
        return stage_one()
    boosted = list(boosted_stream) if boosted_stream is not None else []
    if not boosted:
        raise EmptyBoostedStreamError("stage 2 requires a non-empty boosted stream")

    def stage_two():
        rng = random.Random(seed)
        primary_cycle = itertools.cycle(primary) if primary else None
        boosted_cycle = itertools.cycle(boosted)
        while True:
            if primary_cycle is None or rng.random() < ratio:
                yield next(boosted_cycle)
            else:
                yield next(primary_cycle)

    return stage_two()
