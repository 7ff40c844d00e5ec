/** Role-specific view models: pure data assembled from API responses.
 * No financial arithmetic happens here — every amount carried into a view
 * is an integer straight off the wire. */

import { ApiClient, ApiRequestError } from "./api.js";
import type {
  ActiveStudent,
  BlockSummary,
  ContractView,
  Pledge,
  StudentStatus,
  VerificationReport,
  Wallet,
} from "./types.js";

export interface StudentStatusView {
  studentId: string;
  applicationStatus: string;
  rejectReason: string;
  targetAmountCents: number | null;
  collected: Record<string, number>;
  fundingState: string;
  contract: ContractView | null;
}

export interface SponsorView {
  sponsorId: string;
  wallet: Wallet;
  pledges: Pledge[];
  activeStudents: ActiveStudent[];
}

export interface FundraiserView {
  fundraiserId: string;
  activeStudents: ActiveStudent[];
  collectedByStudent: Record<string, number>;
  tip: BlockSummary | null;
  chainLength: number;
  verification: VerificationReport;
}

export async function fetchStudentView(
  api: ApiClient,
  studentId: string,
): Promise<StudentStatusView> {
  const status: StudentStatus = await api.studentStatus(studentId);
  let contract: ContractView | null = null;
  if (status.contract_url !== null) {
    contract = await api.contract(studentId);
  }
  return {
    studentId,
    applicationStatus: status.application?.status ?? "None",
    rejectReason: status.application?.reject_reason ?? "",
    targetAmountCents: status.application?.target_amount_cents ?? status.funding?.target_amount ?? null,
    collected: status.funding?.collected ?? {},
    fundingState: status.funding?.state ?? "Unknown",
    contract,
  };
}

export async function fetchSponsorView(api: ApiClient, sponsorId: string): Promise<SponsorView> {
  const wallet = await api.wallet(sponsorId);
  const { students } = await api.activeStudents();
  return {
    sponsorId,
    wallet,
    pledges: wallet.pledges ?? [],
    activeStudents: students,
  };
}

export async function fetchFundraiserView(
  api: ApiClient,
  fundraiserId: string,
): Promise<FundraiserView> {
  const { students } = await api.activeStudents();
  const { blocks } = await api.chain();
  const verification = await api.chainVerify();
  const collectedByStudent: Record<string, number> = {};
  for (const student of students) {
    collectedByStudent[student.student_id] = student.collected[fundraiserId] ?? 0;
  }
  return {
    fundraiserId,
    activeStudents: students,
    collectedByStudent,
    tip: blocks.length ? blocks[blocks.length - 1] : null,
    chainLength: blocks.length,
    verification,
  };
}

export interface PledgeFormResult {
  ok: boolean;
  errorCode: string | null;
  message: string;
  view: SponsorView | null;
}

/** Validate client-side, POST the pledge, and refresh the sponsor view.
 * A 400 surfaces the node's error_code verbatim. */
export async function submitPledgeForm(
  api: ApiClient,
  sponsorId: string,
  studentId: string,
  fundraiserId: string,
  amountCents: number,
): Promise<PledgeFormResult> {
  if (!Number.isInteger(amountCents) || amountCents <= 0) {
    return { ok: false, errorCode: "NonPositiveAmount", message: "Amount must be positive", view: null };
  }
  if (!studentId || !fundraiserId) {
    return { ok: false, errorCode: "MissingField", message: "Pick a student and fundraiser", view: null };
  }
  try {
    await api.placePledge(sponsorId, studentId, fundraiserId, amountCents);
  } catch (err) {
    if (err instanceof ApiRequestError) {
      return { ok: false, errorCode: err.errorCode, message: err.message, view: null };
    }
    throw err;
  }
  const view = await fetchSponsorView(api, sponsorId);
  return { ok: true, errorCode: null, message: "Pledge placed", view };
}

/** null when no contract exists (renders as the not-found page). */
export async function fetchContractPage(
  api: ApiClient,
  studentId: string,
): Promise<ContractView | null> {
  try {
    return await api.contract(studentId);
  } catch (err) {
    if (err instanceof ApiRequestError && err.status === 404) {
      return null;
    }
    throw err;
  }
}
