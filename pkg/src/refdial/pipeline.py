"""End-to-end pipelines behind the CLI subcommands.

Every run that writes an artifact also writes a sidecar manifest carrying the
resolved configuration, the seed, and row counts, so outputs are auditable
and reruns comparable (timestamps live only in manifests).
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .builder import (
    GCoTMode,
    TASK_SOURCE_KIND,
    build_gcot_records,
    build_records,
    filter_leakage,
    import_source,
    load_image_keys,
)
from .chessboard import build_set, grade, read_detections, read_items, write_items
from .coords import BBox, Point, parse_regions, serialize_box, serialize_point
from .evals import (
    EvalError,
    cider,
    eval_pope,
    eval_rec,
    eval_short_answer,
    eval_vqa,
    eval_which_box,
    iou,
    load_predictions,
    metrics_from_pairs,
)
from .evals.report import EvalReport
from .records import AnnotationKind, write_records
from .templates import TaskKind, TemplateRegistry, default_registry, load_template_sets

EVAL_METRICS = ("rec", "which_box", "pointqa", "vqa", "pope", "caption")

_GCOT_TASKS = {
    TaskKind.VQA_QCA: GCoTMode.QCA,
    TaskKind.VQA_QCPOINTA: GCoTMode.QCPOINTA,
    TaskKind.VQA_QCBOXA: GCoTMode.QCBOXA,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def make_registry(templates_path=None):
    """Built-in starter registry, or exactly the sets from a template file."""
    if not templates_path:
        return default_registry()
    registry = TemplateRegistry()
    for template_set in load_template_sets(templates_path):
        registry.register_set(template_set)
    return registry


def resolve_source_kind(task: TaskKind, kind: str | None) -> AnnotationKind:
    if kind:
        return AnnotationKind(kind)
    if task in _GCOT_TASKS:
        return AnnotationKind.COT_QA
    expected = TASK_SOURCE_KIND.get(task)
    if expected is None:
        raise ValueError(f"task {task.value!r} has no default source kind; pass one explicitly")
    return expected


def build_dataset(
    input_path,
    output_path,
    task: TaskKind,
    kind: str | None = None,
    holdout_path=None,
    decimals: int = 3,
    seed: int = 0,
    stage_tag: str = "stage1",
    templates_path=None,
    manifest_path=None,
    config_echo: dict | None = None,
) -> dict:
    """import -> build -> leakage filter -> write, returning the manifest."""
    registry = make_registry(templates_path)
    source_kind = resolve_source_kind(task, kind)
    imported = import_source(input_path, source_kind)
    if source_kind == AnnotationKind.COT_QA:
        mode = _GCOT_TASKS.get(task, GCoTMode.QA)
        records = build_gcot_records(
            imported.annotations, mode, registry, decimals=decimals, seed=seed, stage_tag=stage_tag
        )
    else:
        records = build_records(
            imported.annotations, task, registry, decimals=decimals, seed=seed, stage_tag=stage_tag
        )
    dropped = 0
    if holdout_path:
        holdout = load_image_keys(holdout_path)
        records, dropped = filter_leakage(records, holdout)
    written = write_records(records, output_path)
    manifest = {
        "tool": "refdial",
        "version": __version__,
        "subcommand": "build-dataset",
        "created_at": _now(),
        "seed": seed,
        "config": config_echo or {},
        "input": str(input_path),
        "output": str(output_path),
        "imported": len(imported.annotations),
        "import_issues": [
            {"line": issue.line, "message": issue.message} for issue in imported.issues
        ],
        "import_warnings": imported.warnings,
        "records_built": written,
        "dropped_for_leakage": dropped,
        "counts_by_task": dict(Counter(r.task.value for r in records)),
    }
    write_manifest(manifest_path or f"{output_path}.manifest.json", manifest)
    return manifest


def gen_chessboard(
    input_path,
    output_path,
    per_part_quota: int = 600,
    seed: int = 0,
    epsilon: float = 0.0,
    manifest_path=None,
    config_echo: dict | None = None,
) -> dict:
    detections = read_detections(input_path)
    items = build_set(detections, per_part_quota=per_part_quota, seed=seed, epsilon=epsilon)
    written = write_items(items, output_path)
    manifest = {
        "tool": "refdial",
        "version": __version__,
        "subcommand": "gen-chessboard",
        "created_at": _now(),
        "seed": seed,
        "config": config_echo or {},
        "detections": len(detections),
        "items": written,
        "per_part_quota": per_part_quota,
        "output": str(output_path),
    }
    write_manifest(manifest_path or f"{output_path}.manifest.json", manifest)
    return manifest


def eval_chessboard(items_path, predictions_path) -> EvalReport:
    items = read_items(items_path)
    preds = load_predictions(predictions_path)
    return grade(preds, items)


# ---------------------------------------------------------------------------
# per-metric ground-truth schemas (line-delimited)

def _load_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{line_no}: not valid JSON: {exc}") from exc


def load_gt_boxes(path) -> dict:
    gts = {}
    for line_no, obj in _load_jsonl(path):
        try:
            gts[str(obj["item_id"])] = BBox(*obj["box"])
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalError(f"{path}:{line_no}: bad box record: {exc}") from exc
    return gts


def load_gt_options(path) -> dict:
    gts = {}
    for line_no, obj in _load_jsonl(path):
        try:
            options = [BBox(*o) for o in obj["options"]]
            gts[str(obj["item_id"])] = (options, int(obj["correct_index"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalError(f"{path}:{line_no}: bad which-box record: {exc}") from exc
    return gts


def load_gt_answers(path) -> dict:
    gts = {}
    for line_no, obj in _load_jsonl(path):
        try:
            gts[str(obj["item_id"])] = str(obj["answer"])
        except (KeyError, TypeError) as exc:
            raise EvalError(f"{path}:{line_no}: bad answer record: {exc}") from exc
    return gts


def load_gt_answer_lists(path) -> dict:
    gts = {}
    for line_no, obj in _load_jsonl(path):
        try:
            gts[str(obj["item_id"])] = [str(a) for a in obj["answers"]]
        except (KeyError, TypeError) as exc:
            raise EvalError(f"{path}:{line_no}: bad answers record: {exc}") from exc
    return gts


def load_gt_references(path) -> dict:
    gts = {}
    for line_no, obj in _load_jsonl(path):
        try:
            gts[str(obj["item_id"])] = [str(r) for r in obj["references"]]
        except (KeyError, TypeError) as exc:
            raise EvalError(f"{path}:{line_no}: bad references record: {exc}") from exc
    return gts


def run_eval(metric: str, predictions_path, ground_truth_path, threshold: float = 0.5) -> EvalReport:
    """Dispatch one metric over prediction and ground-truth files."""
    preds = load_predictions(predictions_path)
    if metric == "rec":
        return eval_rec(preds, load_gt_boxes(ground_truth_path), threshold=threshold)
    if metric == "which_box":
        return eval_which_box(preds, load_gt_options(ground_truth_path))
    if metric == "pointqa":
        return eval_short_answer(preds, load_gt_answers(ground_truth_path))
    if metric == "vqa":
        return eval_vqa(preds, load_gt_answer_lists(ground_truth_path))
    if metric == "pope":
        return eval_pope(preds, load_gt_answers(ground_truth_path))
    if metric == "caption":
        references = load_gt_references(ground_truth_path)
        candidates = {item_id: preds.get(item_id, "") for item_id in references}
        result = cider(candidates, references)
        return EvalReport(
            metric="caption",
            n_items=len(references),
            aggregates={"cider": result.corpus_score, "cider_x100": result.scaled_x100},
            per_item=[{"item_id": k, "score": v} for k, v in result.per_item.items()],
            parse_failure_ids=[k for k, v in candidates.items() if not v.strip()],
            missing_ids=[k for k in references if k not in preds],
        )
    raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(EVAL_METRICS)}")


# ---------------------------------------------------------------------------
# round-trip fuzz and the shared parity corpus

CORPUS_HEADER = {"format": "refdial.fuzz_corpus", "version": 1}


@dataclass
class FuzzResult:
    cases: int
    failures: int
    corpus_path: str | None


def _random_point(rng) -> Point:
    return Point(rng.random(), rng.random())


def _random_box(rng) -> BBox:
    x0, x1 = sorted((rng.random(), rng.random()))
    y0, y1 = sorted((rng.random(), rng.random()))
    return BBox(x0, y0, x1, y1)


def fuzz_roundtrip(cases: int = 100_000, seed: int = 7, corpus_out=None) -> FuzzResult:
    """Serialize/parse random geometry across precisions 1..6 and verify the
    round-trip tolerance; optionally emit the shared parity corpus with
    expected serializations, IoU values, and yes/no metric maps."""
    rng = random.Random(seed)
    failures = 0
    out = None
    if corpus_out:
        out = open(corpus_out, "w", encoding="utf-8")
        header = dict(CORPUS_HEADER, seed=seed, cases=cases, tool_version=__version__)
        out.write(json.dumps(header) + "\n")
    try:
        for i in range(cases):
            decimals = 1 + i % 6
            tol = 0.5 * 10.0**-decimals + 1e-12
            slot = i % 100
            if slot < 40:
                geometry = _random_point(rng)
                text = serialize_point(geometry, decimals)
                case = {"case": "serialize_point", "decimals": decimals,
                        "coords": list(geometry.coords()), "text": text}
            elif slot < 80:
                geometry = _random_box(rng)
                text = serialize_box(geometry, decimals)
                case = {"case": "serialize_box", "decimals": decimals,
                        "coords": list(geometry.coords()), "text": text}
            elif slot < 99:
                a, b = _random_box(rng), _random_box(rng)
                case = {"case": "iou", "a": list(a.coords()), "b": list(b.coords()),
                        "value": iou(a, b)}
                if out:
                    out.write(json.dumps(case) + "\n")
                continue
            else:
                pairs = [
                    (rng.choice(("yes", "no")), rng.choice(("yes", "no")))
                    for _ in range(rng.randint(10, 60))
                ]
                case = {"case": "pope", "pairs": [list(p) for p in pairs],
                        "metrics": metrics_from_pairs(pairs)}
                if out:
                    out.write(json.dumps(case) + "\n")
                continue

            (span,) = parse_regions(text)
            if not span.ok or type(span.geometry) is not type(geometry):
                failures += 1
            else:
                for got, want in zip(span.geometry.coords(), geometry.coords()):
                    if abs(got - want) > tol:
                        failures += 1
                        break
            if out:
                out.write(json.dumps(case) + "\n")
    finally:
        if out:
            out.close()
    return FuzzResult(cases=cases, failures=failures, corpus_path=str(corpus_out) if corpus_out else None)
