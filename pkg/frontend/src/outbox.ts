/** Store-and-forward queue for verdicts.
 *
 * Submissions go through here so the reviewer can keep working while the
 * service is unreachable. Delivery rules:
 *
 *   - one entry per item_id: re-submitting an item before the first
 *     verdict was sent replaces it (the service applies last-wins
 *     supersession anyway, so sending both would be noise)
 *   - flush sends in FIFO order, one request in flight at a time
 *   - a server response, success or 4xx/5xx, settles the entry; it is
 *     removed before the callback runs and is never sent again
 *   - a network failure leaves the entry queued; the next flush retries
 *   - concurrent flush calls collapse into the one already running, so a
 *     reconnect racing a timer cannot double-send
 */

import { ApiError, NetworkError } from "./api.js";
import type { VerdictAck, VerdictBody } from "./types.js";

export type SendResult =
  | { kind: "delivered"; ack: VerdictAck }
  | { kind: "rejected"; status: number; detail: string };

export type ResultHandler = (verdict: VerdictBody, result: SendResult) => void;

function sameVerdict(a: VerdictBody, b: VerdictBody): boolean {
  return (
    a.item_id === b.item_id &&
    a.decision === b.decision &&
    a.adjusted?.join(",") === b.adjusted?.join(",") &&
    a.reviewer === b.reviewer
  );
}

export class VerdictOutbox {
  private queue: VerdictBody[] = [];
  private inflight: Promise<void> | null = null;

  constructor(
    private readonly post: (verdict: VerdictBody) => Promise<VerdictAck>,
    private readonly onResult: ResultHandler,
  ) {}

  /** Number of verdicts not yet settled by a server response. */
  get unsent(): number {
    return this.queue.length;
  }

  pending(): readonly VerdictBody[] {
    return [...this.queue];
  }

  enqueue(verdict: VerdictBody): void {
    const existing = this.queue.findIndex((v) => v.item_id === verdict.item_id);
    if (existing >= 0) {
      // same item_id + same decision is a no-op, not a replacement: a
      // double keypress must not turn into two deliveries
      if (!sameVerdict(this.queue[existing]!, verdict)) {
        this.queue[existing] = verdict;
      }
    } else {
      this.queue.push(verdict);
    }
  }

  /** Try to deliver everything queued. Resolves when the queue is empty
   * or a network failure stopped progress; never rejects. */
  flush(): Promise<void> {
    if (this.inflight === null) {
      this.inflight = this.drain().finally(() => {
        this.inflight = null;
      });
    }
    return this.inflight;
  }

  private async drain(): Promise<void> {
    while (this.queue.length > 0) {
      const head = this.queue[0]!;
      let ack: VerdictAck;
      try {
        ack = await this.post(head);
      } catch (err) {
        if (err instanceof NetworkError) {
          return; // outcome unknown; keep it queued and stop for now
        }
        if (err instanceof ApiError) {
          this.settle(head);
          this.onResult(head, { kind: "rejected", status: err.status, detail: err.detail });
          continue;
        }
        throw err;
      }
      this.settle(head);
      this.onResult(head, { kind: "delivered", ack });
    }
  }

  private settle(verdict: VerdictBody): void {
    // enqueue() may have replaced the head while the POST was in flight;
    // only drop it if it is still the exact object we sent
    if (this.queue[0] === verdict) {
      this.queue.shift();
    }
  }
}
