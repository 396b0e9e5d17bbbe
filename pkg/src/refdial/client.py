"""HTTP clients for the two external endpoints the toolkit talks to.

The generation endpoint rewrites prompt templates ({prompt, n} -> {texts});
the inference endpoint produces model predictions ({id, prompt} -> {id,
text}). Both speak plain JSON over POST with optional bearer auth.
fetch_predictions persists results strictly in input order, so an output file
is always a clean prefix and an interrupted run resumes without re-sending
completed items.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import httpx


class EndpointError(RuntimeError):
    pass


class EndpointUnavailableError(EndpointError):
    pass


class EndpointTimeoutError(EndpointError):
    pass


class _HttpEndpoint:
    def __init__(
        self,
        address: str,
        auth_token: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.address = address
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        headers = {}
        if auth_token:
            headers["Authorization"] = f"Bearer {auth_token}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, payload: dict) -> dict:
        """POST with exponential backoff; classifies the terminal failure."""
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.address, json=payload)
                response.raise_for_status()
                return response.json()
            except httpx.ConnectError as exc:
                last_exc = exc
            except httpx.TimeoutException as exc:
                last_exc = exc
            except httpx.HTTPStatusError as exc:
                if exc.response.status_code < 500:
                    raise EndpointError(f"endpoint rejected request: {exc}") from exc
                last_exc = exc
        if isinstance(last_exc, httpx.ConnectError):
            raise EndpointUnavailableError(
                f"endpoint {self.address} unreachable after {self.max_retries} retries"
            ) from last_exc
        if isinstance(last_exc, httpx.TimeoutException):
            raise EndpointTimeoutError(
                f"endpoint {self.address} timed out after {self.max_retries} retries"
            ) from last_exc
        raise EndpointError(f"endpoint {self.address} kept failing: {last_exc}") from last_exc


class GenerationClient(_HttpEndpoint):
    """Client for the template-rewriting endpoint."""

    def generate(self, prompt: str, n: int) -> list:
        payload = self._post({"prompt": prompt, "n": n})
        texts = payload.get("texts")
        if not isinstance(texts, list):
            raise EndpointError(f"generation endpoint returned no 'texts' array: {payload!r}")
        return [str(t) for t in texts]


class InferenceClient(_HttpEndpoint):
    """Client for the model-inference endpoint."""

    def complete(self, item_id: str, prompt: str) -> str:
        payload = self._post({"id": item_id, "prompt": prompt})
        if payload.get("id") not in (None, item_id):
            raise EndpointError(
                f"inference endpoint answered for {payload.get('id')!r}, expected {item_id!r}"
            )
        return str(payload.get("text", ""))


@dataclass
class FetchResult:
    total: int
    completed: int
    resumed: int
    failed: list  # item ids recorded with a failure flag


def load_prompt_items(path) -> list:
    """Items file: {item_id, prompt} per line ({question} accepted as prompt)."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                prompt = obj.get("prompt", obj.get("question"))
                if prompt is None:
                    raise KeyError("prompt")
                items.append({"item_id": str(obj["item_id"]), "prompt": str(prompt)})
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad prompt item: {exc}") from exc
    return items


def _read_done_ids(path: Path) -> list:
    done = []
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    done.append(str(json.loads(line)["item_id"]))
    return done


def fetch_predictions(
    items: Sequence[dict],
    out_path,
    client: InferenceClient,
    concurrency: int = 4,
) -> FetchResult:
    """Pull one prediction per item, appending results in input order.

    Items already present in the output file are never re-sent. A per-item
    timeout (after the client's retries) is recorded as an empty raw_text
    with a failure flag and the run continues; an unreachable endpoint stops
    the run with EndpointUnavailableError, leaving the completed prefix on
    disk as the resume cursor.
    """
    out_path = Path(out_path)
    done = set(_read_done_ids(out_path))
    remaining = [item for item in items if item["item_id"] not in done]
    failed: list = []
    completed = 0
    with open(out_path, "a", encoding="utf-8") as fh:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            futures = [
                (item, pool.submit(client.complete, item["item_id"], item["prompt"]))
                for item in remaining
            ]
            try:
                for item, future in futures:
                    try:
                        text = future.result()
                        row = {"item_id": item["item_id"], "raw_text": text}
                        completed += 1
                    except (EndpointTimeoutError, EndpointError) as exc:
                        if isinstance(exc, EndpointUnavailableError):
                            raise
                        row = {"item_id": item["item_id"], "raw_text": "", "failed": True}
                        failed.append(item["item_id"])
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                    fh.flush()
            except EndpointUnavailableError:
                for _, future in futures:
                    future.cancel()
                raise
    return FetchResult(
        total=len(items),
        completed=completed,
        resumed=len(done),
        failed=failed,
    )
