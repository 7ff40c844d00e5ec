/** Typed client over the node's HTTP API; the only place fetch happens. */

import type {
  ActiveStudent,
  Application,
  BlockSummary,
  ContractView,
  StudentStatus,
  VerificationReport,
  Wallet,
} from "./types.js";

/** A 4xx/5xx reply; error_code comes verbatim from the node. */
export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly errorCode: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiRequestError(
        response.status,
        String(payload.error_code ?? "UnknownError"),
        String(payload.message ?? response.statusText),
      );
    }
    return payload as T;
  }

  activeStudents(): Promise<{ students: ActiveStudent[] }> {
    return this.request("GET", "/students/active");
  }

  studentStatus(studentId: string): Promise<StudentStatus> {
    return this.request("GET", `/students/${encodeURIComponent(studentId)}/status`);
  }

  wallet(sponsorId: string): Promise<Wallet> {
    return this.request("GET", `/wallets/${encodeURIComponent(sponsorId)}`);
  }

  deposit(sponsorId: string, amountCents: number): Promise<Wallet> {
    return this.request("POST", `/wallets/${encodeURIComponent(sponsorId)}/deposit`, {
      amount_cents: amountCents,
    });
  }

  placePledge(
    sponsorId: string,
    studentId: string,
    fundraiserId: string,
    amountCents: number,
  ): Promise<unknown> {
    return this.request("POST", "/pledges", {
      sponsor_id: sponsorId,
      student_id: studentId,
      fundraiser_id: fundraiserId,
      amount_cents: amountCents,
    });
  }

  registerAccount(details: Record<string, unknown>): Promise<{ account_id: string }> {
    return this.request("POST", "/accounts", details);
  }

  submitApplication(body: Record<string, unknown>): Promise<Application> {
    return this.request("POST", "/applications", body);
  }

  verifyApplication(applicationId: string): Promise<Application> {
    return this.request("POST", `/applications/${encodeURIComponent(applicationId)}/verify`, {});
  }

  chain(): Promise<{ blocks: BlockSummary[] }> {
    return this.request("GET", "/chain");
  }

  chainVerify(): Promise<VerificationReport> {
    return this.request("GET", "/chain/verify");
  }

  contract(studentId: string): Promise<ContractView> {
    return this.request("GET", `/contracts/${encodeURIComponent(studentId)}`);
  }
}
