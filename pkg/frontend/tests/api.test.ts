// Client behavior against a mocked fetch: headers, idempotency ids on
// mutations only, error envelope surfacing, and query-string building.

import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, FetchLike } from "../src/api";

interface Recorded {
  url: string;
  method: string;
  headers: Record<string, string>;
}

function recorder(status = 200, body: unknown = {}): { fetchImpl: FetchLike; calls: Recorded[] } {
  const calls: Recorded[] = [];
  const fetchImpl: FetchLike = async (input, init) => {
    calls.push({
      url: input,
      method: init?.method ?? "GET",
      headers: (init?.headers ?? {}) as Record<string, string>,
    });
    return new Response(JSON.stringify(body), { status });
  };
  return { fetchImpl, calls };
}

describe("api client", () => {
  it("sends a bearer token on every call when configured", async () => {
    const { fetchImpl, calls } = recorder();
    const client = new ApiClient("http://x", "tok", fetchImpl);
    await client.getCase("c-1");
    await client.assess("c-1", "flu", 8);
    for (const call of calls) expect(call.headers["Authorization"]).toBe("Bearer tok");
  });

  it("attaches X-Request-Id to mutations but not reads", async () => {
    const { fetchImpl, calls } = recorder();
    const client = new ApiClient("http://x", null, fetchImpl);
    await client.getCase("c-1");
    await client.discharge("c-1", null);
    expect(calls[0].headers["X-Request-Id"]).toBeUndefined();
    expect(calls[1].headers["X-Request-Id"]).toBeTruthy();
  });

  it("uses distinct request ids per mutation", async () => {
    const { fetchImpl, calls } = recorder();
    const client = new ApiClient("http://x", null, fetchImpl);
    await client.assess("c-1", "flu", 8);
    await client.assess("c-1", "flu", 8);
    expect(calls[0].headers["X-Request-Id"]).not.toBe(calls[1].headers["X-Request-Id"]);
  });

  it("raises ApiError carrying the server's error envelope", async () => {
    const envelope = { code: "BudgetExhausted", message: "4/4 exams used", detail: null };
    const { fetchImpl } = recorder(409, envelope);
    const client = new ApiClient("http://x", null, fetchImpl);
    const error = await client.requestExam("c-1", "MRI").catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(409);
    expect((error as ApiError).body).toEqual(envelope);
  });

  it("builds scoped search queries", async () => {
    const { fetchImpl, calls } = recorder(200, { query: "x", hits: [] });
    const client = new ApiClient("http://x", null, fetchImpl);
    await client.search("chest pain", "patient", "p-1", 5);
    expect(calls[0].url).toBe("http://x/search?q=chest+pain&scope=patient&limit=5&arg=p-1");
  });

  it("encodes document filenames in paths", async () => {
    const { fetchImpl, calls } = recorder(200, { content: "" });
    const client = new ApiClient("http://x", null, fetchImpl);
    await client.getDocument("p-1", "report 2.md");
    expect(calls[0].url).toBe("http://x/patients/p-1/documents/report%202.md");
  });
});
