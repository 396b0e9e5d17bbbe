/**
 * Client bindings for the refdial service: fixed-precision coordinate
 * serialization, region parsing, box overlap, and yes/no probe metrics,
 * callable from JS/TS training or inference code without shelling out.
 *
 * A handle wraps one service base URL with an immutable configuration
 * (default decimal precision, request timeout). All numeric results come
 * straight from the core, so values are bit-identical to what the Python
 * toolkit computes.
 */

export const VERSION = "0.1.0";

export type BoxCoords = [number, number, number, number];
export type PointCoords = [number, number];

export interface HandleConfig {
  baseUrl: string;
  /** digits after the decimal separator, 1..9 (default 3) */
  decimals?: number;
  timeoutMs?: number;
}

export interface RegionSpan {
  byte_start: number;
  byte_end: number;
  raw_text: string;
  kind: "point" | "box" | "malformed";
  coords: number[] | null;
  error: string | null;
}

export interface PopeMetrics {
  accuracy: number;
  precision: number;
  recall: number;
  f1: number;
  yes_rate: number;
  tp: number;
  fp: number;
  tn: number;
  fn: number;
}

export interface ExtractedAnswer {
  answer: string;
  used_marker: boolean;
  spans: RegionSpan[];
}

export type YesNo = "yes" | "no";
export type YesNoPair = [groundTruth: YesNo, predicted: YesNo];

export interface SerializeItem {
  kind: "point" | "box";
  coords: number[];
  decimals?: number;
}

/** Raised when the service rejects a request; carries the core diagnostic. */
export class ServiceError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ServiceError";
    this.status = status;
  }
}

export class RefdialHandle {
  readonly baseUrl: string;
  readonly decimals: number;
  readonly timeoutMs: number;

  constructor(config: HandleConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.decimals = config.decimals ?? 3;
    this.timeoutMs = config.timeoutMs ?? 30_000;
    if (!Number.isInteger(this.decimals) || this.decimals < 1 || this.decimals > 9) {
      throw new RangeError(`decimals must be an integer in 1..9, got ${this.decimals}`);
    }
    Object.freeze(this);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload.detail !== undefined) detail = JSON.stringify(payload.detail);
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async version(): Promise<{ name: string; version: string }> {
    const response = await fetch(`${this.baseUrl}/version`, {
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!response.ok) throw new ServiceError(response.status, response.statusText);
    return (await response.json()) as { name: string; version: string };
  }

  async serializePoint(x: number, y: number, decimals?: number): Promise<string> {
    const body = { x, y, decimals: decimals ?? this.decimals };
    const payload = await this.post<{ text: string }>("/coords/serialize-point", body);
    return payload.text;
  }

  async serializeBox(box: BoxCoords, decimals?: number): Promise<string> {
    const body = { box, decimals: decimals ?? this.decimals };
    const payload = await this.post<{ text: string }>("/coords/serialize-box", body);
    return payload.text;
  }

  /** Batched serialization; each item may carry its own precision. */
  async serializeBatch(items: SerializeItem[]): Promise<string[]> {
    const body = {
      items: items.map((item) => ({ decimals: this.decimals, ...item })),
    };
    const payload = await this.post<{ texts: string[] }>("/coords/serialize-batch", body);
    return payload.texts;
  }

  async parseRegions(text: string): Promise<RegionSpan[]> {
    const payload = await this.post<{ spans: RegionSpan[] }>("/coords/parse-regions", { text });
    return payload.spans;
  }

  async iou(a: BoxCoords, b: BoxCoords): Promise<number> {
    const payload = await this.post<{ value: number }>("/eval/iou", { a, b });
    return payload.value;
  }

  async iouBatch(pairs: Array<{ a: BoxCoords; b: BoxCoords }>): Promise<number[]> {
    const payload = await this.post<{ values: number[] }>("/eval/iou-batch", { pairs });
    return payload.values;
  }

  /** Metric map from (ground truth, predicted) yes/no verdict pairs. */
  async evalPopeCounts(pairs: YesNoPair[]): Promise<PopeMetrics> {
    return this.post<PopeMetrics>("/eval/pope-pairs", { pairs });
  }

  async vqaAccuracy(answer: string, humanAnswers: string[]): Promise<number> {
    const payload = await this.post<{ value: number }>("/eval/vqa-accuracy", {
      answer,
      human_answers: humanAnswers,
    });
    return payload.value;
  }

  async normalizeAnswer(text: string): Promise<string> {
    const payload = await this.post<{ text: string }>("/answers/normalize", { text });
    return payload.text;
  }

  async extractAnswer(text: string): Promise<ExtractedAnswer> {
    return this.post<ExtractedAnswer>("/answers/extract", { text });
  }

  async assignQuadrant(box: BoxCoords, epsilon = 0): Promise<string> {
    const payload = await this.post<{ quadrant: string }>("/chessboard/assign", { box, epsilon });
    return payload.quadrant;
  }
}

export function createHandle(config: HandleConfig): RefdialHandle {
  return new RefdialHandle(config);
}
