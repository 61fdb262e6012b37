import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiError, NetworkError, ReviewApi } from "../src/api.js";
import { makeItem, startStub, StubReviewServer } from "./stub.js";

let stub: StubReviewServer;

beforeEach(async () => {
  stub = await startStub([makeItem(), makeItem()]);
});

afterEach(async () => {
  stub.down = false;
  await stub.close();
});

describe("ReviewApi", () => {
  it("fetches the queue page", async () => {
    const api = new ReviewApi(stub.url);
    const page = await api.fetchQueue(1);
    expect(page.items).toHaveLength(1);
    expect(page.remaining).toBe(2);
  });

  it("tolerates a trailing slash in the base URL", async () => {
    const api = new ReviewApi(stub.url + "/");
    const health = await api.health();
    expect(health.status).toBe("ok");
  });

  it("fetches a single item by id", async () => {
    const api = new ReviewApi(stub.url);
    const want = stub.items[0]!;
    const item = await api.fetchItem(want.item_id);
    expect(item).toEqual(want);
  });

  it("raises ApiError with the service's detail on 404", async () => {
    const api = new ReviewApi(stub.url);
    const err = await api.fetchItem("nope").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).detail).toBe("unknown item_id: nope");
  });

  it("posts a verdict and returns the acknowledgement", async () => {
    const api = new ReviewApi(stub.url);
    const target = stub.items[0]!;
    const ack = await api.postVerdict({
      item_id: target.item_id,
      decision: "accept_use",
      adjusted: null,
      reviewer: "carol",
    });
    expect(ack.acknowledged.item_id).toBe(target.item_id);
    expect(ack.acknowledged.decision).toBe("accept_use");
    expect(ack.acknowledged.reviewer).toBe("carol");
    expect(ack.remaining).toBe(1);
  });

  it("raises ApiError on a declined verdict", async () => {
    const api = new ReviewApi(stub.url);
    const err = await api
      .postVerdict({ item_id: "ghost", decision: "reject", adjusted: null })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
  });

  it("classifies a dead socket as NetworkError, not ApiError", async () => {
    const api = new ReviewApi(stub.url);
    stub.down = true;
    const err = await api.fetchQueue().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(NetworkError);
  });

  it("classifies a refused connection as NetworkError", async () => {
    const api = new ReviewApi("http://127.0.0.1:1");
    const err = await api.health().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(NetworkError);
  });
});
