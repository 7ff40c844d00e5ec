/** Live round-trip against a real single node.
 *
 * Spawns `python3 -m teduchain run` (or targets TEDUCHAIN_API if set) and
 * drives the sponsor dashboard exactly as the page would: the pledge must
 * show up in the fundraiser dashboard's collected total within two poll
 * intervals, and the finished race must render a contract page whose
 * shares sum to the program cost. Skips when no node can be started.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DashboardController } from "../src/dashboard.js";
import { formatCents } from "../src/format.js";
import { fetchContractPage, fetchFundraiserView, submitPledgeForm } from "../src/views.js";

const POLL_MS = 250;
let apiBase = process.env.TEDUCHAIN_API ?? "";
let child: ChildProcess | null = null;
let available = false;

async function waitForApi(base: string, timeoutMs: number): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/chain/verify`);
      if (response.ok) return true;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  return false;
}

beforeAll(async () => {
  if (apiBase) {
    available = await waitForApi(apiBase, 3000);
    return;
  }
  const port = 18100 + (process.pid % 1500);
  const dir = mkdtempSync(join(tmpdir(), "teduchain-ui-"));
  writeFileSync(
    join(dir, "records.csv"),
    "name,institute,high_school_score\nAnn Lee,USP,850\n",
  );
  writeFileSync(
    join(dir, "node.json"),
    JSON.stringify({
      node_id: "F1",
      data_dir: join(dir, "data"),
      api_host: "127.0.0.1",
      api_port: port,
      peer_port: port + 1,
      records_csv: join(dir, "records.csv"),
      claim_window_ms: 100,
      benefit_percent_bp: 750,
    }),
  );
  child = spawn("python3", ["-m", "teduchain", "run", "--config", join(dir, "node.json")], {
    cwd: join(import.meta.dirname ?? __dirname, "..", ".."),
    stdio: "ignore",
  });
  apiBase = `http://127.0.0.1:${port}`;
  available = await waitForApi(apiBase, 8000);
}, 20000);

afterAll(() => {
  child?.kill("SIGINT");
});

describe("dashboard round-trip against a live node", () => {
  it("pledge appears in the fundraiser view within 2 poll intervals; contract renders", async (ctx) => {
    if (!available) {
      ctx.skip();
      return;
    }
    const api = new ApiClient(apiBase);
    await api.registerAccount({
      role: "Student",
      account_id: "ST1",
      name: "Ann Lee",
      email: "ann@x.edu",
      address: "12 Reef Rd",
    });
    await api.registerAccount({
      role: "Sponsor",
      account_id: "SP1",
      name: "Pat",
      email: "pat@x.org",
      financial_info: "ok",
    });
    const application = await api.submitApplication({
      student_id: "ST1",
      program_name: "BSc Computing",
      institute_name: "USP",
      high_school_score: 850,
      family_income_cents: 120000,
      target_amount_cents: 10000,
      program_duration_months: 36,
    });
    await api.verifyApplication(application.application_id);
    await api.deposit("SP1", 10000);

    // Sponsor dashboard: place a partial pledge.
    const partial = await submitPledgeForm(api, "SP1", "ST1", "F1", 4000);
    expect(partial.ok).toBe(true);
    expect(partial.view?.wallet.reserved).toBe(4000);

    // Fundraiser dashboard: the collected total must appear within 2 polls.
    const fundraiser = new DashboardController(
      { accountId: "F1", role: "Fundraiser", apiBase, pollIntervalMs: POLL_MS },
      () => undefined,
      api,
    );
    fundraiser.start();
    await new Promise((resolve) => setTimeout(resolve, 2 * POLL_MS));
    fundraiser.stop();
    expect(fundraiser.state.html).toContain(formatCents(4000));
    expect(fundraiser.state.stale).toBe(false);

    // Over-pledging surfaces the node's error code inline.
    const over = await submitPledgeForm(api, "SP1", "ST1", "F1", 9000);
    expect(over.ok).toBe(false);
    expect(over.errorCode).toBe("ExceedsRemaining");

    // Complete the race and wait for the claim window to mine the block.
    const completing = await submitPledgeForm(api, "SP1", "ST1", "F1", 6000);
    expect(completing.ok).toBe(true);
    const deadline = Date.now() + 6000;
    let contract = null;
    while (Date.now() < deadline) {
      contract = await fetchContractPage(api, "ST1");
      if (contract !== null) break;
      await new Promise((resolve) => setTimeout(resolve, 100));
    }
    expect(contract).not.toBeNull();
    const sum = contract!.terms.shares.reduce((a, s) => a + s.amount, 0);
    expect(sum).toBe(contract!.terms.program_cost);
    expect(contract!.terms.program_cost).toBe(10000);

    // The wallet settled: escrow left entirely, nothing still reserved.
    const wallet = await api.wallet("SP1");
    expect(wallet.available).toBe(0);
    expect(wallet.reserved).toBe(0);

    // The fundraiser view now verifies a 2-block chain.
    const after = await fetchFundraiserView(api, "F1");
    expect(after.chainLength).toBe(2);
    expect(after.verification.valid).toBe(true);
  }, 30000);
});
