"""Shared result container for every metric in the harness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class EvalError(ValueError):
    """Base class for evaluation-harness errors."""


@dataclass(frozen=True)
class PredictionRecord:
    item_id: str
    raw_text: str


@dataclass
class EvalReport:
    """Per-item verdicts plus the aggregates recomputable from them.

    ``aggregates`` holds metric-specific scores (accuracy-style numbers are in
    percent). Items whose output could not be parsed are listed in
    ``parse_failure_ids`` so instruction-following failures stay visible next
    to the headline score.
    """

    metric: str
    n_items: int
    aggregates: dict
    per_item: list
    parse_failure_ids: list = field(default_factory=list)
    missing_ids: list = field(default_factory=list)

    @property
    def parse_failures(self) -> int:
        return len(self.parse_failure_ids)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "n_items": self.n_items,
            "aggregates": self.aggregates,
            "per_item": self.per_item,
            "parse_failures": {
                "count": self.parse_failures,
                "ids": list(self.parse_failure_ids),
            },
            "missing": {"count": len(self.missing_ids), "ids": list(self.missing_ids)},
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


def render_table(report: EvalReport) -> str:
    """Aligned two-column text table of the aggregate scores."""
    rows = [("metric", report.metric), ("items", str(report.n_items))]
    for key, value in report.aggregates.items():
        if isinstance(value, float):
            rows.append((key, f"{value:.2f}"))
        else:
            rows.append((key, str(value)))
    rows.append(("parse failures", str(report.parse_failures)))
    if report.missing_ids:
        rows.append(("missing predictions", str(len(report.missing_ids))))
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    return "\n".join(lines)


def load_predictions(path) -> dict:
    """Read line-delimited ``{item_id, raw_text}`` into an ordered mapping."""
    preds: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                preds[str(obj["item_id"])] = str(obj.get("raw_text", ""))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EvalError(f"{path}:{line_no}: bad prediction record: {exc}") from exc
    return preds


def save_predictions(preds: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, raw_text in preds.items():
            fh.write(json.dumps({"item_id": item_id, "raw_text": raw_text}, ensure_ascii=False))
            fh.write("\n")
