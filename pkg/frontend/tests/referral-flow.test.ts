// Contract test: against a mocked API, the approve-referral flow issues
// exactly the documented endpoint sequence — refresh, submit with approver,
// confirm, fetch the folder — and nothing else.

import { describe, expect, it } from "vitest";

import { ApiClient, FetchLike } from "../src/api";
import { approveReferral } from "../src/workflows";

interface Recorded {
  method: string;
  path: string;
  body: unknown;
  headers: Record<string, string>;
}

function mockApi(): { fetchImpl: FetchLike; calls: Recorded[] } {
  const calls: Recorded[] = [];
  const cannedCase = {
    patient_id: "c-1",
    stage: "Reporting",
    specialty: null,
    pending_exam: null,
    exams_used: 0,
    exam_budget: 4,
    results_ingested: 0,
    report_revisions: 1,
    latest_assessment: null,
    final_assessment: null,
    trace: [],
  };
  const responses: Record<string, unknown> = {
    "GET /cases/c-1": cannedCase,
    "POST /cases/c-1/referral": { specialty: "Cardiology", stage: "Reporting" },
    "GET /patients/c-1": {
      patient_id: "c-1",
      location: { kind: "specialty", specialty: "Cardiology" },
      documents: [],
    },
  };
  const fetchImpl: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const path = input.replace(/^https?:\/\/[^/]+/, "");
    calls.push({
      method,
      path,
      body: init?.body ? JSON.parse(String(init.body)) : null,
      headers: (init?.headers ?? {}) as Record<string, string>,
    });
    const key = `${method} ${path}`;
    if (!(key in responses)) {
      return new Response(JSON.stringify({ code: "Unknown", message: key, detail: null }), {
        status: 404,
      });
    }
    return new Response(JSON.stringify(responses[key]), { status: 200 });
  };
  return { fetchImpl, calls };
}

describe("approve-referral flow", () => {
  it("issues exactly the documented endpoint sequence", async () => {
    const { fetchImpl, calls } = mockApi();
    const client = new ApiClient("http://api.test", null, fetchImpl);

    const outcome = await approveReferral(client, "c-1", "Cardiology", "dr-kim");

    expect(calls.map((c) => `${c.method} ${c.path}`)).toEqual([
      "GET /cases/c-1",
      "POST /cases/c-1/referral",
      "GET /cases/c-1",
      "GET /patients/c-1",
    ]);
    expect(outcome.referral.specialty).toBe("Cardiology");
    expect(outcome.folder.location.specialty).toBe("Cardiology");
  });

  it("submits the approver's name and an idempotency id with the referral", async () => {
    const { fetchImpl, calls } = mockApi();
    const client = new ApiClient("http://api.test", "secret", fetchImpl);

    await approveReferral(client, "c-1", "Cardiology", "dr-kim");

    const post = calls.find((c) => c.method === "POST")!;
    expect(post.body).toMatchObject({ recommended: "Cardiology", approved_by: "dr-kim" });
    expect(post.headers["X-Request-Id"]).toBeTruthy();
    expect(post.headers["Authorization"]).toBe("Bearer secret");
  });

  it("stops at the first failing step", async () => {
    const { fetchImpl, calls } = mockApi();
    const client = new ApiClient("http://api.test", null, fetchImpl);

    await expect(approveReferral(client, "c-9", "Cardiology", "dr-kim")).rejects.toThrow();
    expect(calls).toHaveLength(1); // the initial GET failed; nothing was submitted
  });
});
