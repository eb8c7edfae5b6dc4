// Wire types mirroring the JSON the workflow API returns.

export interface HealthInfo {
  status: string;
  mode: string;
  version: string;
  attended: boolean;
  chat_backend: string;
}

export interface Assessment {
  diagnosis: string;
  confidence: number;
  rationale: string;
}

export interface CaseState {
  patient_id: string;
  stage: string;
  specialty: string | null;
  pending_exam: { name: string; rationale: string } | null;
  exams_used: number;
  exam_budget: number;
  results_ingested: number;
  report_revisions: number;
  latest_assessment: Assessment | null;
  final_assessment: Assessment | null;
  trace: Record<string, unknown>[];
}

export interface DocumentInfo {
  filename: string;
  kind: string;
  digest: string;
}

export interface PatientFolder {
  patient_id: string;
  location: { kind: string; specialty: string | null };
  documents: DocumentInfo[];
}

export interface InquiryTurn {
  speaker: "clinician" | "patient";
  text: string;
}

export interface ReportListing {
  case_id: string;
  revisions: number[];
  files: string[];
}

export interface ReportContent {
  case_id: string;
  revision: number;
  filename: string;
  content: string;
}

export interface DecisionResult {
  decision: "AcceptDiagnosis" | "RequestExam" | "ForcedFinal";
  exams_used: number;
  exam_budget: number;
}

export interface ExamOutcome {
  fulfilled: boolean;
  exams_used: number;
  report_revisions: number;
  explanation: string | null;
}

export interface ReferralResult {
  specialty: string;
  stage: string;
}

export interface MedicationInput {
  brand_name?: string;
  generic_name: string;
  dosage: string;
  frequency: string;
  duration: string;
  cautions?: string[];
  side_effects?: string[];
  patient_considerations?: string;
  source?: string;
}

export interface MedicationPlan {
  count: number;
  plan: string;
}

export interface SearchHitLine {
  line: number;
  text: string;
}

export interface SearchHit {
  patient_id: string;
  filename: string;
  score: number;
  lines: SearchHitLine[];
}

export interface SearchResult {
  query: string;
  hits: SearchHit[];
}

export interface ViewerSpan {
  start: number;
  end: number;
}

export interface ViewerMatchLine {
  line: number;
  spans: ViewerSpan[];
}

export interface ViewerResponse {
  cursor_line: number;
  top_line: number;
  height: number;
  line_count: number;
  viewport: string[];
  matches: ViewerMatchLine[];
  match_count: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
