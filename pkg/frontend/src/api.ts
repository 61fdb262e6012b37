/** Thin typed client for the review service.
 *
 * The only state is the base URL. Every failure is classified into one
 * of two kinds so callers can decide whether a retry makes sense:
 *
 *   ApiError      the server answered with a non-2xx status. Definitive;
 *                 retrying the same request would get the same answer.
 *   NetworkError  the request never got an answer (refused, dropped,
 *                 timed out). Unknown outcome; safe to retry because the
 *                 service treats repeated verdicts for an item as
 *                 supersession, not duplication.
 */

import type { Health, QueueItem, QueuePage, VerdictAck, VerdictBody } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "NetworkError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body, keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class ReviewApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    // bind: bare `fetch` loses its global receiver when called as a method
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new NetworkError(err);
    }
    await raiseForStatus(resp);
    return resp;
  }

  async health(): Promise<Health> {
    const resp = await this.request("/healthz");
    return (await resp.json()) as Health;
  }

  async fetchQueue(limit = 20): Promise<QueuePage> {
    const resp = await this.request(`/queue?limit=${limit}`);
    return (await resp.json()) as QueuePage;
  }

  async fetchItem(itemId: string): Promise<QueueItem> {
    const resp = await this.request(`/items/${encodeURIComponent(itemId)}`);
    return (await resp.json()) as QueueItem;
  }

  async postVerdict(verdict: VerdictBody): Promise<VerdictAck> {
    const resp = await this.request("/verdicts", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(verdict),
    });
    return (await resp.json()) as VerdictAck;
  }
}
