/** Polling controller: one in-flight poll per view, user actions queued
 * behind the current request, and a stale-data banner when the API drops. */

import { ApiClient, ApiRequestError } from "./api.js";
import type { Role, SessionContext } from "./types.js";
import {
  fetchFundraiserView,
  fetchSponsorView,
  fetchStudentView,
} from "./views.js";
import {
  renderFundraiserView,
  renderSponsorView,
  renderStaleBanner,
  renderStudentView,
} from "./render.js";

export interface DashboardState {
  html: string;
  stale: boolean;
  staleDetail: string;
  lastGoodAt: number | null;
}

type ViewFetcher = () => Promise<string>;

export class DashboardController {
  readonly api: ApiClient;
  readonly state: DashboardState = { html: "", stale: false, staleDetail: "", lastGoodAt: null };
  private inflight: Promise<void> | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private readonly fetcher: ViewFetcher;

  constructor(
    readonly session: SessionContext,
    private readonly onChange: (state: DashboardState) => void,
    apiOverride?: ApiClient,
  ) {
    this.api = apiOverride ?? new ApiClient(session.apiBase);
    this.fetcher = this.fetcherForRole(session.role);
  }

  private fetcherForRole(role: Role): ViewFetcher {
    if (role === "Student") {
      return async () => renderStudentView(await fetchStudentView(this.api, this.session.accountId));
    }
    if (role === "Sponsor") {
      return async () => renderSponsorView(await fetchSponsorView(this.api, this.session.accountId));
    }
    return async () =>
      renderFundraiserView(await fetchFundraiserView(this.api, this.session.accountId));
  }

  /** One poll; concurrent callers share the in-flight request. */
  poll(): Promise<void> {
    if (this.inflight) return this.inflight;
    this.inflight = (async () => {
      try {
        const html = await this.fetcher();
        this.state.html = html;
        this.state.stale = false;
        this.state.staleDetail = "";
        this.state.lastGoodAt = Date.now();
      } catch (err) {
        // Keep the last good view; only flag staleness.
        this.state.stale = true;
        this.state.staleDetail =
          err instanceof ApiRequestError ? `${err.errorCode}: ${err.message}` : String(err);
      } finally {
        this.inflight = null;
      }
      this.onChange(this.state);
    })();
    return this.inflight;
  }

  /** A user action runs after any in-flight poll, then refreshes. */
  async runAction<T>(action: () => Promise<T>): Promise<T> {
    if (this.inflight) {
      await this.inflight.catch(() => undefined);
    }
    const result = await action();
    await this.poll();
    return result;
  }

  start(): void {
    this.stopped = false;
    const tick = async () => {
      if (this.stopped) return;
      await this.poll();
      if (this.stopped) return;
      this.timer = setTimeout(tick, this.session.pollIntervalMs);
    };
    void tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  bannerHtml(): string {
    return renderStaleBanner(this.state.stale, this.state.staleDetail);
  }
}

/** The session's role must match what the node has registered. Sponsors and
 * students are probed through their role-specific endpoints; fundraisers
 * have no probe endpoint and are accepted as-is. */
export async function validateSession(api: ApiClient, accountId: string, role: Role): Promise<string | null> {
  try {
    if (role === "Sponsor") {
      await api.wallet(accountId);
    } else if (role === "Student") {
      await api.studentStatus(accountId);
    }
    return null;
  } catch (err) {
    if (err instanceof ApiRequestError && err.status === 404) {
      return `No ${role.toLowerCase()} named ${accountId} is known to this node`;
    }
    return String(err);
  }
}
