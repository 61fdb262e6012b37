/** Review session state: which item is on screen, what happened to the
 * ones before it, and what is still owed to the server.
 *
 * Session rules, all testable without a DOM:
 *
 *   - exactly one current item whenever the local buffer is non-empty
 *   - an item submitted in this session never reappears, even if a
 *     refresh returns it again (the server only drops it once the
 *     verdict actually lands)
 *   - `remaining` never increases except inside an explicit refresh()
 *   - submission is optimistic: the view advances immediately and the
 *     verdict rides the outbox; a definitive 4xx puts the item back at
 *     the front with the error text attached
 */

import type { ReviewApi } from "./api.js";
import { VerdictOutbox, type SendResult } from "./outbox.js";
import type { Decision, QueueItem, VerdictBody } from "./types.js";

export interface HistoryEntry {
  verdict: VerdictBody;
  /** "pending" until the outbox settles it. */
  status: "pending" | "delivered" | "rejected";
  detail?: string;
}

export class ReviewSession {
  private buffer: QueueItem[] = [];
  private submitted = new Set<string>();
  readonly history: HistoryEntry[] = [];
  readonly outbox: VerdictOutbox;

  remaining = 0;
  lastError: string | null = null;
  /** Non-null while the reviewer is dragging span boundaries. */
  selection: [number, number] | null = null;

  constructor(
    private readonly api: ReviewApi,
    readonly reviewer: string = "anonymous",
    private readonly pageSize: number = 20,
  ) {
    this.outbox = new VerdictOutbox(
      (v) => this.api.postVerdict(v),
      (v, r) => this.handleResult(v, r),
    );
  }

  current(): QueueItem | null {
    return this.buffer[0] ?? null;
  }

  get unsent(): number {
    return this.outbox.unsent;
  }

  /** Pull a fresh page from the server. The only place `remaining` may
   * grow. Items already judged this session are filtered out so they
   * cannot reappear before their verdicts land. */
  async refresh(): Promise<void> {
    const page = await this.api.fetchQueue(this.pageSize);
    const fresh = page.items.filter((item) => !this.submitted.has(item.item_id));
    const held = new Set(this.buffer.map((item) => item.item_id));
    for (const item of fresh) {
      if (!held.has(item.item_id)) this.buffer.push(item);
    }
    // undelivered verdicts still inflate the server's count; they are
    // already judged from this session's point of view
    this.remaining = Math.max(0, page.remaining - this.outbox.unsent);
    this.lastError = null;
  }

  /** Record a decision for the current item and advance. Throws if there
   * is nothing to judge or an adjustment is required but absent. */
  submit(decision: Decision): void {
    const item = this.current();
    if (item === null) {
      throw new Error("no current item");
    }
    let adjusted: [number, number] | null = null;
    if (decision === "adjust_span") {
      if (this.selection === null) {
        throw new Error("adjust_span needs an active selection");
      }
      adjusted = [this.selection[0], this.selection[1]];
    }
    const verdict: VerdictBody = {
      item_id: item.item_id,
      decision,
      adjusted,
      reviewer: this.reviewer,
    };
    this.submitted.add(item.item_id);
    this.buffer.shift();
    this.selection = null;
    this.remaining = Math.max(0, this.remaining - 1);
    this.history.push({ verdict, status: "pending" });
    this.outbox.enqueue(verdict);
    void this.outbox.flush();
  }

  /** Push the current item to the back of the local buffer, no verdict. */
  skip(): void {
    const item = this.buffer.shift();
    if (item !== undefined) {
      this.buffer.push(item);
      this.selection = null;
    }
  }

  /** Deliver anything still queued; call on reconnect or from a timer. */
  retry(): Promise<void> {
    return this.outbox.flush();
  }

  // ---- span adjustment -------------------------------------------------

  beginAdjust(): void {
    const item = this.current();
    if (item === null) return;
    this.selection = [item.start, item.end];
  }

  cancelAdjust(): void {
    this.selection = null;
  }

  /** Nudge one boundary, clamped so 0 <= start < end <= text length. */
  moveBoundary(which: "start" | "end", delta: number): void {
    const item = this.current();
    if (item === null || this.selection === null) return;
    const max = item.sentence_text.length;
    let [start, end] = this.selection;
    if (which === "start") {
      start = Math.min(Math.max(0, start + delta), end - 1);
    } else {
      end = Math.max(Math.min(max, end + delta), start + 1);
    }
    this.selection = [start, end];
  }

  // ---- outbox callback -------------------------------------------------

  private handleResult(verdict: VerdictBody, result: SendResult): void {
    let entry: HistoryEntry | undefined;
    for (let i = this.history.length - 1; i >= 0; i--) {
      if (this.history[i]!.verdict.item_id === verdict.item_id) {
        entry = this.history[i];
        break;
      }
    }
    if (result.kind === "delivered") {
      if (entry) entry.status = "delivered";
      // ack.remaining can only shrink our view, never grow it
      this.remaining = Math.min(this.remaining, result.ack.remaining);
      return;
    }
    if (entry) {
      entry.status = "rejected";
      entry.detail = result.detail;
    }
    this.lastError = `${result.status}: ${result.detail}`;
    // definitive rejection: hand the item back for another look
    this.submitted.delete(verdict.item_id);
    void this.restore(verdict.item_id);
  }

  /** Put a rejected item back at the front of the buffer. The item body
   * may be stale (that is often why the server said 422), so re-fetch;
   * if the server no longer knows it, it stays gone. */
  private async restore(itemId: string): Promise<void> {
    if (this.buffer.some((item) => item.item_id === itemId)) return;
    try {
      const item = await this.api.fetchItem(itemId);
      if (!this.buffer.some((held) => held.item_id === itemId)) {
        this.buffer.unshift(item);
      }
    } catch {
      // unreachable or truly unknown: the next refresh() settles it
    }
  }
}
