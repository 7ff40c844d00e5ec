/** Payload shapes of the node's HTTP API. All money fields are integer cents. */

export type Role = "Student" | "Sponsor" | "Fundraiser";

export interface ApiErrorBody {
  error_code: string;
  message: string;
}

export interface Account {
  account_id: string;
  role: Role;
  name: string;
  email: string;
  address: string;
  phone: string;
  business_identification_number: string;
  financial_info: string;
}

export interface Application {
  application_id: string;
  student_id: string;
  program_name: string;
  institute_name: string;
  high_school_score: number;
  family_income_cents: number;
  target_amount_cents: number;
  program_duration_months: number;
  status: "Pending" | "Eligible" | "Rejected" | "Won";
  reject_reason: string;
  eligible_at: number | null;
}

export interface ActiveStudent {
  student_id: string;
  program_name: string;
  institute_name: string;
  target_amount_cents: number;
  program_duration_months: number;
  eligible_at: number | null;
  state: "Active" | "Frozen" | "Won" | "Unknown";
  collected: Record<string, number>;
  remaining_cents: number;
}

export interface Pledge {
  pledge_id: string;
  sponsor_id: string;
  student_id: string;
  fundraiser_id: string;
  amount: number;
  status: "Active" | "Won" | "RolledBack";
  placed_at: number;
}

export interface Wallet {
  sponsor_id: string;
  available: number;
  reserved: number;
  pledges?: Pledge[];
}

export interface StudentStatus {
  student_id: string;
  application: Application | null;
  funding: {
    student_id: string;
    target_amount: number;
    state: string;
    collected: Record<string, number>;
  } | null;
  contract_index: number | null;
  contract_url: string | null;
}

export interface InvestorShare {
  sponsor_id: string;
  amount: number;
}

export interface ContractTerms {
  student_id: string;
  program_name: string;
  institute_name: string;
  program_cost: number;
  program_duration_months: number;
  shares: InvestorShare[];
  benefit_percent_bp: number;
  benefit_period_months: number;
  fundraiser_id: string;
}

export interface ContactInfo {
  party_id: string;
  address: string;
  email: string;
  phone: string;
}

export interface ContractView {
  student_id: string;
  terms: ContractTerms;
  contacts: ContactInfo[];
  contract_index: number;
  contract_hash: string;
  document_hash: string;
  amendment_indices: number[];
}

export interface BlockSummary {
  index: number;
  kind: string;
  hash: string;
  prev_hash: string;
  miner_id: string;
}

export interface VerificationReport {
  valid: boolean;
  reason: string;
  first_bad_index?: number;
}

/** Served at runtime as config.json next to the page. */
export interface DashboardConfig {
  api_base: string;
  poll_interval_ms: number;
}

export interface SessionContext {
  accountId: string;
  role: Role;
  apiBase: string;
  pollIntervalMs: number;
}
