// Control-plane calls. Errors surface as ApiError so the UI can render them
// inline; nothing mutates local state on failure.

import type {
  BevSnapshot,
  QueryAnswer,
  ReportSnapshot,
  StateSnapshot,
} from "./types.js";
import type { FetchLike } from "./stream.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const detail = (body as { error?: string }).error ?? resp.statusText;
    throw new ApiError(resp.status, detail);
  }
  return body as T;
}

export class SentinelApi {
  constructor(private baseUrl: string, private fetchImpl: FetchLike = fetch) {}

  getState(): Promise<StateSnapshot> {
    return this.fetchImpl(`${this.baseUrl}/v1/state`).then((r) => asJson<StateSnapshot>(r));
  }

  getBev(): Promise<BevSnapshot> {
    return this.fetchImpl(`${this.baseUrl}/v1/bev`).then((r) => asJson<BevSnapshot>(r));
  }

  getReport(): Promise<ReportSnapshot> {
    return this.fetchImpl(`${this.baseUrl}/v1/report`).then((r) => asJson<ReportSnapshot>(r));
  }

  // callers must validate non-empty text first; an empty string is a bug here
  sendQuery(text: string): Promise<QueryAnswer> {
    if (!text.trim()) {
      return Promise.reject(new ApiError(0, "query text must be non-empty"));
    }
    return this.fetchImpl(`${this.baseUrl}/v1/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    }).then((r) => asJson<QueryAnswer>(r));
  }

  setThreshold(value: number): Promise<{ threshold: number }> {
    return this.fetchImpl(`${this.baseUrl}/v1/threshold`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ value }),
    }).then((r) => asJson<{ threshold: number }>(r));
  }
}
