// Typed client for the workflow API.
//
// The console is a thin client: every piece of state it renders comes from
// one of these calls, and every mutation carries a generated X-Request-Id
// so accidental replays (double clicks, retries) are idempotent server-side.

import {
  ApiErrorBody,
  CaseState,
  DecisionResult,
  ExamOutcome,
  HealthInfo,
  InquiryTurn,
  MedicationInput,
  MedicationPlan,
  PatientFolder,
  ReferralResult,
  ReportContent,
  ReportListing,
  SearchResult,
  ViewerResponse,
} from "./models";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

let requestCounter = 0;

function nextRequestId(): string {
  requestCounter += 1;
  return `console-${Date.now()}-${requestCounter}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string | null = null,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(mutation: boolean): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (mutation) headers["X-Request-Id"] = nextRequestId();
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(method !== "GET"),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, parsed as ApiErrorBody);
    }
    return parsed as T;
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/healthz");
  }

  openCase(caseId: string, demographics: string): Promise<CaseState> {
    return this.request("POST", `/cases/${caseId}`, { demographics });
  }

  getCase(caseId: string): Promise<CaseState> {
    return this.request("GET", `/cases/${caseId}`);
  }

  addTurn(caseId: string, turn: InquiryTurn): Promise<{ case_id: string; turn_count: number }> {
    return this.request("POST", `/cases/${caseId}/inquiry/turns`, turn);
  }

  listTurns(caseId: string): Promise<{ case_id: string; turns: InquiryTurn[] }> {
    return this.request("GET", `/cases/${caseId}/inquiry/turns`);
  }

  generateReport(caseId: string): Promise<{ revision: number; report: string }> {
    return this.request("POST", `/cases/${caseId}/reports`);
  }

  listReports(caseId: string): Promise<ReportListing> {
    return this.request("GET", `/cases/${caseId}/reports`);
  }

  getReport(caseId: string, revision: number): Promise<ReportContent> {
    return this.request("GET", `/cases/${caseId}/reports/${revision}`);
  }

  assess(caseId: string, diagnosis: string, confidence: number): Promise<DecisionResult> {
    return this.request("POST", `/cases/${caseId}/assessment`, { diagnosis, confidence });
  }

  requestExam(caseId: string, name: string, rationale = ""): Promise<{ pending_exam: string }> {
    return this.request("POST", `/cases/${caseId}/exams`, { name, rationale });
  }

  ingestExamResult(caseId: string, content: string | null): Promise<ExamOutcome> {
    return this.request("POST", `/cases/${caseId}/exams/result`, { content });
  }

  refer(caseId: string, recommended: string, approvedBy: string | null): Promise<ReferralResult> {
    return this.request("POST", `/cases/${caseId}/referral`, {
      recommended,
      approved_by: approvedBy,
    });
  }

  planMedications(
    caseId: string,
    medications: MedicationInput[],
    approvedBy: string | null,
  ): Promise<MedicationPlan> {
    return this.request("POST", `/cases/${caseId}/medications`, {
      medications,
      approved_by: approvedBy,
    });
  }

  discharge(caseId: string, approvedBy: string | null): Promise<{ stage: string; final_diagnosis: string }> {
    return this.request("POST", `/cases/${caseId}/discharge`, { approved_by: approvedBy });
  }

  getPatient(patientId: string): Promise<PatientFolder> {
    return this.request("GET", `/patients/${patientId}`);
  }

  getDocument(patientId: string, filename: string): Promise<{ content: string }> {
    return this.request(
      "GET",
      `/patients/${patientId}/documents/${encodeURIComponent(filename)}`,
    );
  }

  search(query: string, scope = "all", arg: string | null = null, limit = 10): Promise<SearchResult> {
    const params = new URLSearchParams({ q: query, scope, limit: String(limit) });
    if (arg !== null) params.set("arg", arg);
    return this.request("GET", `/search?${params.toString()}`);
  }

  viewer(
    patientId: string,
    filename: string,
    height: number,
    ops: Record<string, unknown>[],
    find: string | null,
  ): Promise<ViewerResponse> {
    return this.request("POST", "/viewer", {
      patient_id: patientId,
      filename,
      height,
      ops,
      find,
    });
  }
}
