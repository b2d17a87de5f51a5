import { describe, expect, it } from "vitest";

import { formatEntropy, ReviewApi } from "../src/api.js";
import { QueueStore } from "../src/queue.js";
import type { Candidate } from "../src/types.js";

function page(candidates: Candidate[]) {
  return { total: candidates.length, offset: 0, limit: 500, candidates };
}

function cand(id: string, entropy: number, decision = "pending"): Candidate {
  return {
    chip_id: id,
    cell_id: "0_0",
    entropy,
    decision,
    source: "entropy",
    center_lon: 0.5,
    center_lat: 0.5,
  };
}

interface Recorded {
  url: string;
  method: string;
  body?: unknown;
}

function fakeService(candidates: Candidate[], opts: { failPost?: boolean; failGet?: boolean } = {}) {
  const calls: Recorded[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({ url, method, body: init?.body ? JSON.parse(String(init.body)) : undefined });
    if (method === "GET") {
      if (opts.failGet) return new Response("boom", { status: 500 });
      return Response.json(page(candidates));
    }
    if (opts.failPost) return Response.json({ code: "invalid_request", message: "no" }, { status: 400 });
    const body = JSON.parse(String(init!.body));
    return Response.json({
      candidate_id: body.candidate_id,
      decision: body.decision,
      revision: 1,
      timestamp: 0,
    });
  };
  return { calls, api: new ReviewApi("", fetchFn) };
}

describe("QueueStore", () => {
  it("loads candidates in served order", async () => {
    const { api } = fakeService([cand("a", 0.9), cand("b", 0.5)]);
    const store = new QueueStore(api);
    await store.load();
    expect(store.visible.map((c) => c.chip_id)).toEqual(["a", "b"]);
    expect(store.error).toBeNull();
  });

  it("renders entropy to three decimals", () => {
    expect(formatEntropy(0.5)).toBe("0.500");
    expect(formatEntropy(1 / 3)).toBe("0.333");
  });

  it("marking issues exactly one POST and shrinks the pending queue by one", async () => {
    const { api, calls } = fakeService([cand("a", 0.9), cand("b", 0.5), cand("c", 0.1)]);
    const store = new QueueStore(api);
    await store.load();
    const before = store.pending.length;
    const getsBefore = calls.filter((c) => c.method === "GET").length;

    await store.mark("a", "failure");

    const posts = calls.filter((c) => c.method === "POST");
    expect(posts).toHaveLength(1);
    expect(posts[0].url).toBe("/api/decisions");
    expect(posts[0].body).toEqual({
      candidate_id: "a",
      decision: "failure",
      annotator: "reviewer",
    });
    expect(store.pending.length).toBe(before - 1);
    // row updated in place, no reload happened
    expect(calls.filter((c) => c.method === "GET")).toHaveLength(getsBefore);
    expect(store.visible.map((c) => c.chip_id)).toEqual(["b", "c"]);
  });

  it("reverts the optimistic update when the service rejects", async () => {
    const { api } = fakeService([cand("a", 0.9)], { failPost: true });
    const store = new QueueStore(api);
    await store.load();
    await store.mark("a", "clean");
    expect(store.pending.map((c) => c.chip_id)).toEqual(["a"]);
    expect(store.error).toMatch(/400/);
  });

  it("signals unreachable service and recovers on retry", async () => {
    const candidates = [cand("a", 0.9)];
    let failing = true;
    const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
      if (failing) throw new Error("connection refused");
      return Response.json(page(candidates));
    };
    const store = new QueueStore(new ReviewApi("", fetchFn));
    await store.load();
    expect(store.error).toMatch(/connection refused/);
    failing = false;
    await store.retry();
    expect(store.error).toBeNull();
    expect(store.visible).toHaveLength(1);
  });

  it("reports the explicit empty state", async () => {
    const { api } = fakeService([]);
    const store = new QueueStore(api);
    await store.load();
    expect(store.isEmpty).toBe(true);
  });

  it("select returns the candidate for centering", async () => {
    const { api } = fakeService([cand("a", 0.9)]);
    const store = new QueueStore(api);
    await store.load();
    const chosen = store.select("a");
    expect(chosen?.center_lon).toBe(0.5);
    expect(store.selected).toBe("a");
  });
});
