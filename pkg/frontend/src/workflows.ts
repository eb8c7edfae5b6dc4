// Multi-step console workflows composed from API calls.
//
// The approve-referral flow is contractual: it issues exactly this
// endpoint sequence, in this order, and nothing else:
//
//   1. GET  /cases/{caseId}              — refresh state before acting
//   2. POST /cases/{caseId}/referral     — submit with the approver's name
//   3. GET  /cases/{caseId}              — confirm the stage transition
//   4. GET  /patients/{caseId}           — show the patient's new location
//
// Keeping the sequence fixed lets the server's audit trail be read as a
// faithful record of what the clinician did in the console.

import { ApiClient } from "./api";
import { CaseState, PatientFolder, ReferralResult } from "./models";

export interface ReferralOutcome {
  before: CaseState;
  referral: ReferralResult;
  after: CaseState;
  folder: PatientFolder;
}

export async function approveReferral(
  client: ApiClient,
  caseId: string,
  recommended: string,
  approvedBy: string,
): Promise<ReferralOutcome> {
  const before = await client.getCase(caseId);
  const referral = await client.refer(caseId, recommended, approvedBy);
  const after = await client.getCase(caseId);
  const folder = await client.getPatient(caseId);
  return { before, referral, after, folder };
}
