"""HTTP service wrapping the core kernels.

Exposes the coordinate grammar, overlap/hallucination/consensus metric
kernels, answer extraction, probe helpers, and template operations so
training and inference stacks (or out-of-process bindings) can call them
without shelling out. Core validation errors surface as 422 responses
carrying the core diagnostic text.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .chessboard import assign_quadrant, format_question
from .coords import (
    BBox,
    ImageSize,
    Point,
    RegionSpan,
    denormalize_box,
    normalize_box,
    parse_regions,
    serialize_box,
    serialize_point,
    validate_box,
)
from .evals import (
    cider,
    extract_final_answer,
    iou,
    metrics_from_pairs,
    normalize_answer,
    vqa_accuracy,
)
from .templates import Template, TaskKind, default_registry, instantiate

app = FastAPI(title="refdial", version=__version__)

_REGISTRY = default_registry()


@app.exception_handler(ValueError)
async def _value_error(request: Request, exc: ValueError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


# ---------------------------------------------------------------------------
# schemas

class PointIn(BaseModel):
    x: float
    y: float
    decimals: int = Field(default=3, ge=1, le=9)


class BoxIn(BaseModel):
    box: list[float]
    decimals: int = Field(default=3, ge=1, le=9)


class SerializeItem(BaseModel):
    kind: str  # "point" | "box"
    coords: list[float]
    decimals: int = Field(default=3, ge=1, le=9)


class SerializeBatchIn(BaseModel):
    items: list[SerializeItem]


class TextIn(BaseModel):
    text: str


class PixelBoxIn(BaseModel):
    box: list[float]
    width: int
    height: int


class IouIn(BaseModel):
    a: list[float]
    b: list[float]


class IouBatchIn(BaseModel):
    pairs: list[IouIn]


class PopePairsIn(BaseModel):
    pairs: list[list[str]]


class VqaIn(BaseModel):
    answer: str
    human_answers: list[str]


class CiderIn(BaseModel):
    candidates: dict[str, str]
    references: dict[str, list[str]]


class AssignIn(BaseModel):
    box: list[float]
    epsilon: float = 0.0


class QuestionIn(BaseModel):
    class_name: str


class InstantiateIn(BaseModel):
    body: str
    bindings: dict[str, str]


class SampleIn(BaseModel):
    task: str
    seed: int


def _span_json(span: RegionSpan) -> dict:
    return {
        "byte_start": span.byte_start,
        "byte_end": span.byte_end,
        "raw_text": span.raw_text,
        "kind": span.kind,
        "coords": list(span.geometry.coords()) if span.ok else None,
        "error": span.error,
    }


def _serialize_one(item: SerializeItem) -> str:
    if item.kind == "point":
        return serialize_point(Point(*item.coords), item.decimals)
    if item.kind == "box":
        return serialize_box(BBox(*item.coords), item.decimals)
    raise ValueError(f"unknown geometry kind {item.kind!r}")


# ---------------------------------------------------------------------------
# routes

@app.get("/version")
def version():
    return {"name": "refdial", "version": __version__}


@app.post("/coords/serialize-point")
def coords_serialize_point(body: PointIn):
    return {"text": serialize_point(Point(body.x, body.y), body.decimals)}


@app.post("/coords/serialize-box")
def coords_serialize_box(body: BoxIn):
    return {"text": serialize_box(BBox(*body.box), body.decimals)}


@app.post("/coords/serialize-batch")
def coords_serialize_batch(body: SerializeBatchIn):
    return {"texts": [_serialize_one(item) for item in body.items]}


@app.post("/coords/parse-regions")
def coords_parse_regions(body: TextIn):
    return {"spans": [_span_json(s) for s in parse_regions(body.text)]}


@app.post("/coords/normalize-box")
def coords_normalize_box(body: PixelBoxIn):
    box = normalize_box(body.box, ImageSize(body.width, body.height))
    return {"box": list(box.coords())}


@app.post("/coords/denormalize-box")
def coords_denormalize_box(body: PixelBoxIn):
    pixels = denormalize_box(BBox(*body.box), ImageSize(body.width, body.height))
    return {"box": list(pixels)}


@app.post("/coords/validate-box")
def coords_validate_box(body: BoxIn):
    return {"validity": validate_box(body.box)}


@app.post("/eval/iou")
def eval_iou(body: IouIn):
    return {"value": iou(BBox(*body.a), BBox(*body.b))}


@app.post("/eval/iou-batch")
def eval_iou_batch(body: IouBatchIn):
    return {"values": [iou(BBox(*pair.a), BBox(*pair.b)) for pair in body.pairs]}


@app.post("/eval/pope-pairs")
def eval_pope_pairs(body: PopePairsIn):
    pairs = []
    for pair in body.pairs:
        if len(pair) != 2:
            raise ValueError(f"each pair must be [ground_truth, predicted], got {pair!r}")
        pairs.append((pair[0], pair[1]))
    return metrics_from_pairs(pairs)


@app.post("/eval/vqa-accuracy")
def eval_vqa_accuracy(body: VqaIn):
    return {"value": vqa_accuracy(body.answer, body.human_answers)}


@app.post("/eval/cider")
def eval_cider(body: CiderIn):
    result = cider(body.candidates, body.references)
    return {"corpus_score": result.corpus_score, "per_item": result.per_item}


@app.post("/answers/normalize")
def answers_normalize(body: TextIn):
    return {"text": normalize_answer(body.text)}


@app.post("/answers/extract")
def answers_extract(body: TextIn):
    extracted = extract_final_answer(body.text)
    return {
        "answer": extracted.answer,
        "used_marker": extracted.used_marker,
        "spans": [_span_json(s) for s in extracted.regions],
    }


@app.post("/chessboard/assign")
def chessboard_assign(body: AssignIn):
    return {"quadrant": assign_quadrant(BBox(*body.box), body.epsilon).value}


@app.post("/chessboard/question")
def chessboard_question(body: QuestionIn):
    return {"text": format_question(body.class_name)}


@app.post("/templates/instantiate")
def templates_instantiate(body: InstantiateIn):
    template = Template(task=TaskKind.RD, id="adhoc", body=body.body)
    return {"text": instantiate(template, body.bindings)}


@app.post("/templates/sample")
def templates_sample(body: SampleIn):
    template = _REGISTRY.sample(TaskKind(body.task), body.seed)
    return {"task": template.task.value, "id": template.id, "body": template.body}
