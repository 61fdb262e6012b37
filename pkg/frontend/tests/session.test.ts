import { describe, expect, it } from "vitest";

import { ApiError, NetworkError, type ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import type { QueueItem, VerdictAck, VerdictBody } from "../src/types.js";
import { makeItem } from "./stub.js";

/** Minimal in-memory double for ReviewApi. Queue shrinks as verdicts
 * land, like the real service. */
class FakeApi {
  received: VerdictBody[] = [];
  verdicts = new Map<string, VerdictBody>();
  offline = false;
  /** When set, the next postVerdict answers with this status then clears. */
  rejectNextWith: number | null = null;

  constructor(public items: QueueItem[]) {}

  private pending(): QueueItem[] {
    return this.items.filter((i) => !this.verdicts.has(i.item_id));
  }

  async fetchQueue(limit = 20): Promise<{ items: QueueItem[]; remaining: number }> {
    if (this.offline) throw new NetworkError(new Error("offline"));
    const pending = this.pending();
    return { items: pending.slice(0, limit), remaining: pending.length };
  }

  async fetchItem(itemId: string): Promise<QueueItem> {
    if (this.offline) throw new NetworkError(new Error("offline"));
    const item = this.items.find((i) => i.item_id === itemId);
    if (item === undefined) throw new ApiError(404, `unknown item_id: ${itemId}`);
    return item;
  }

  async postVerdict(verdict: VerdictBody): Promise<VerdictAck> {
    if (this.offline) throw new NetworkError(new Error("offline"));
    if (this.rejectNextWith !== null) {
      const status = this.rejectNextWith;
      this.rejectNextWith = null;
      throw new ApiError(status, "declined by test");
    }
    this.received.push(verdict);
    this.verdicts.set(verdict.item_id, verdict);
    return {
      acknowledged: {
        item_id: verdict.item_id,
        decision: verdict.decision,
        adjusted: verdict.adjusted ?? null,
        reviewer: verdict.reviewer ?? "anonymous",
        timestamp: "2024-01-01T00:00:00+00:00",
      },
      remaining: this.pending().length,
    };
  }
}

function session(items: QueueItem[], pageSize = 20): { s: ReviewSession; api: FakeApi } {
  const api = new FakeApi(items);
  return { s: new ReviewSession(api as unknown as ReviewApi, "tester", pageSize), api };
}

const settle = () => new Promise((resolve) => setTimeout(resolve, 0));

describe("ReviewSession", () => {
  it("shows exactly one current item after refresh", async () => {
    const items = [makeItem(), makeItem(), makeItem()];
    const { s } = session(items);
    expect(s.current()).toBeNull();
    await s.refresh();
    expect(s.current()).toEqual(items[0]);
    expect(s.remaining).toBe(3);
  });

  it("advances optimistically on submit", async () => {
    const items = [makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    api.offline = true; // no ack will arrive, view must advance anyway
    s.submit("accept_use");
    expect(s.current()).toEqual(items[1]);
    expect(s.unsent).toBe(1);
    expect(s.history[0]!.status).toBe("pending");
  });

  it("never shows a submitted item again, even after refresh", async () => {
    const items = [makeItem(), makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    const judged = s.current()!.item_id;
    api.offline = true;
    s.submit("reject");
    api.offline = false;
    // the server still lists the item (verdict not delivered) but the
    // session must not resurface it
    await s.refresh();
    expect(s.current()!.item_id).not.toBe(judged);
    const buffered: string[] = [];
    while (s.current() !== null) {
      buffered.push(s.current()!.item_id);
      s.submit("accept_use");
    }
    expect(buffered).not.toContain(judged);
  });

  it("keeps remaining non-increasing between refreshes", async () => {
    const items = Array.from({ length: 6 }, () => makeItem());
    const { s, api } = session(items);
    await s.refresh();
    const seen: number[] = [s.remaining];
    api.offline = true;
    s.submit("accept_use");
    seen.push(s.remaining);
    s.skip();
    seen.push(s.remaining);
    s.submit("reject");
    seen.push(s.remaining);
    api.offline = false;
    await s.retry();
    seen.push(s.remaining);
    s.submit("accept_mention");
    await settle();
    seen.push(s.remaining);
    for (let i = 1; i < seen.length; i++) {
      expect(seen[i]!).toBeLessThanOrEqual(seen[i - 1]!);
    }
  });

  it("accounts for undelivered verdicts when a refresh recomputes remaining", async () => {
    const items = [makeItem(), makeItem(), makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    api.offline = true;
    s.submit("accept_use");
    s.submit("accept_use");
    api.offline = false;
    await s.refresh();
    // server says 4 pending, but two of those verdicts are queued here
    expect(s.remaining).toBe(2);
    expect(s.unsent).toBe(2);
  });

  it("sends the adjusted span with an adjust verdict", async () => {
    const text = "Data from the National Intimate Partner and Sexual Violence Survey.";
    const item = makeItem({
      sentence_text: text,
      start: 14,
      end: 39,
      surface: text.slice(14, 39),
    });
    const { s, api } = session([item]);
    await s.refresh();
    s.beginAdjust();
    expect(s.selection).toEqual([14, 39]);
    for (let i = 0; i < 28; i++) s.moveBoundary("end", 1);
    expect(s.selection).toEqual([14, 67]);
    s.submit("adjust_span");
    await settle();
    expect(api.received).toHaveLength(1);
    expect(api.received[0]).toMatchObject({
      item_id: item.item_id,
      decision: "adjust_span",
      adjusted: [14, 67],
      reviewer: "tester",
    });
    expect(s.selection).toBeNull();
  });

  it("clamps boundary moves to the sentence and keeps the span non-empty", async () => {
    const item = makeItem({ sentence_text: "abcdef", start: 2, end: 4, surface: "cd" });
    const { s } = session([item]);
    await s.refresh();
    s.beginAdjust();
    for (let i = 0; i < 20; i++) s.moveBoundary("end", 1);
    expect(s.selection).toEqual([2, 6]);
    for (let i = 0; i < 20; i++) s.moveBoundary("start", 1);
    expect(s.selection).toEqual([5, 6]);
    for (let i = 0; i < 20; i++) s.moveBoundary("start", -1);
    expect(s.selection).toEqual([0, 6]);
    for (let i = 0; i < 20; i++) s.moveBoundary("end", -1);
    expect(s.selection).toEqual([0, 1]);
  });

  it("refuses adjust_span without a selection", async () => {
    const { s } = session([makeItem()]);
    await s.refresh();
    expect(() => s.submit("adjust_span")).toThrow("selection");
  });

  it("refuses to submit with an empty queue", () => {
    const { s } = session([]);
    expect(() => s.submit("accept_use")).toThrow("no current item");
  });

  it("cancelling an adjustment restores review mode", async () => {
    const { s } = session([makeItem()]);
    await s.refresh();
    s.beginAdjust();
    s.cancelAdjust();
    expect(s.selection).toBeNull();
  });

  it("skip rotates without a verdict", async () => {
    const items = [makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    s.skip();
    expect(s.current()).toEqual(items[1]);
    s.skip();
    expect(s.current()).toEqual(items[0]);
    expect(api.received).toHaveLength(0);
    expect(s.remaining).toBe(2);
  });

  it("returns a rejected item to the front with the error surfaced", async () => {
    const items = [makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    const first = s.current()!;
    api.rejectNextWith = 422;
    s.submit("accept_use");
    expect(s.current()).toEqual(items[1]); // optimistic advance happened
    await settle();
    expect(s.lastError).toBe("422: declined by test");
    expect(s.current()).toEqual(first); // back for another look
    expect(s.history[0]!.status).toBe("rejected");
    // second attempt goes through
    s.submit("accept_mention");
    await settle();
    expect(api.received.map((v) => v.decision)).toEqual(["accept_mention"]);
    expect(s.history[1]!.status).toBe("delivered");
  });

  it("drops a 404'd item instead of resurrecting it", async () => {
    const items = [makeItem(), makeItem()];
    const { s, api } = session(items);
    await s.refresh();
    const ghost = s.current()!.item_id;
    api.rejectNextWith = 404;
    api.items = api.items.filter((i) => i.item_id !== ghost);
    s.submit("accept_use");
    await settle();
    expect(s.lastError).toContain("404");
    expect(s.current()!.item_id).not.toBe(ghost);
  });

  it("random decision walks keep the invariants", async () => {
    let seed = 777;
    const rand = (n: number) => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed % n;
    };
    const items = Array.from({ length: 12 }, () => makeItem());
    const { s, api } = session(items);
    await s.refresh();
    const judged = new Set<string>();
    let lastRemaining = s.remaining;
    for (let step = 0; step < 60 && s.current() !== null; step++) {
      api.offline = rand(3) === 0;
      const roll = rand(5);
      const id = s.current()!.item_id;
      expect(judged.has(id)).toBe(false);
      if (roll === 0) {
        s.skip();
      } else if (roll === 1) {
        s.beginAdjust();
        s.moveBoundary("end", -1);
        s.submit("adjust_span");
        judged.add(id);
      } else {
        s.submit(roll === 2 ? "reject" : roll === 3 ? "accept_mention" : "accept_use");
        judged.add(id);
      }
      await settle();
      expect(s.remaining).toBeLessThanOrEqual(lastRemaining);
      lastRemaining = s.remaining;
    }
    api.offline = false;
    await s.retry();
    // every judged item reached the server exactly once per final decision
    expect(new Set(api.received.map((v) => v.item_id)).size).toBe(api.received.length);
    expect(s.unsent).toBe(0);
  });
});
