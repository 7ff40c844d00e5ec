import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DashboardController, validateSession } from "../src/dashboard.js";
import { formatCents } from "../src/format.js";
import { renderContractPage, renderFundraiserView, renderSponsorView } from "../src/render.js";
import type { SessionContext } from "../src/types.js";
import {
  fetchContractPage,
  fetchFundraiserView,
  fetchSponsorView,
  submitPledgeForm,
} from "../src/views.js";
import { ACTIVE_STUDENTS, CONTRACT, MockApi, WALLET } from "./mock_api.js";

function client(mock: MockApi): ApiClient {
  return new ApiClient("http://node.test", mock.fetch);
}

function session(role: "Student" | "Sponsor" | "Fundraiser", accountId: string): SessionContext {
  return { accountId, role, apiBase: "http://node.test", pollIntervalMs: 5 };
}

describe("sponsor view", () => {
  it("lists both pledges and active students with API integers verbatim", async () => {
    const mock = new MockApi();
    mock.on("GET", "/wallets/SP1", WALLET);
    mock.on("GET", "/students/active", ACTIVE_STUDENTS);
    const view = await fetchSponsorView(client(mock), "SP1");
    expect(view.wallet.available).toBe(6000);
    expect(view.pledges.map((p) => p.status)).toEqual(["Active"]);

    const html = renderSponsorView(view);
    // Every displayed amount is the formatting of an API-returned integer.
    expect(html).toContain(formatCents(WALLET.available));
    expect(html).toContain(formatCents(WALLET.reserved));
    expect(html).toContain(formatCents(WALLET.pledges[0].amount));
    expect(html).toContain(formatCents(ACTIVE_STUDENTS.students[0].remaining_cents));
    expect(html).toContain(formatCents(ACTIVE_STUDENTS.students[0].target_amount_cents));
    // And no other dollar figures get invented.
    const amounts = new Set(html.match(/\$\d+\.\d{2}/g));
    const allowed = new Set(
      [
        WALLET.available,
        WALLET.reserved,
        WALLET.pledges[0].amount,
        ACTIVE_STUDENTS.students[0].remaining_cents,
        ACTIVE_STUDENTS.students[0].target_amount_cents,
        ACTIVE_STUDENTS.students[0].collected.F1,
      ].map(formatCents),
    );
    for (const amount of amounts) {
      expect(allowed).toContain(amount);
    }
  });

  it("renders the empty states", async () => {
    const mock = new MockApi();
    mock.on("GET", "/wallets/SP1", { sponsor_id: "SP1", available: 0, reserved: 0, pledges: [] });
    mock.on("GET", "/students/active", { students: [] });
    const html = renderSponsorView(await fetchSponsorView(client(mock), "SP1"));
    expect(html).toContain("No pledges yet");
    expect(html).toContain("No students are currently seeking funds");
  });
});

describe("pledge form", () => {
  it("posts the documented body and refreshes the wallet", async () => {
    const mock = new MockApi();
    mock.on("POST", "/pledges", { pledge_id: "P2", status: "Active" });
    mock.on("GET", "/wallets/SP1", WALLET);
    mock.on("GET", "/students/active", ACTIVE_STUDENTS);
    const result = await submitPledgeForm(client(mock), "SP1", "ST1", "F1", 2500);
    expect(result.ok).toBe(true);
    expect(result.view?.wallet.reserved).toBe(4000);
    const post = mock.requests.find((r) => r.method === "POST");
    expect(post?.path).toBe("/pledges");
    expect(post?.body).toEqual({
      sponsor_id: "SP1",
      student_id: "ST1",
      fundraiser_id: "F1",
      amount_cents: 2500,
    });
  });

  it("surfaces the node's error_code verbatim on 400", async () => {
    const mock = new MockApi();
    mock.on(
      "POST",
      "/pledges",
      { error_code: "ExceedsRemaining", message: "pledge 9000 exceeds remaining 6000" },
      400,
    );
    const result = await submitPledgeForm(client(mock), "SP1", "ST1", "F1", 9000);
    expect(result.ok).toBe(false);
    expect(result.errorCode).toBe("ExceedsRemaining");
    expect(result.message).toContain("exceeds remaining");
  });

  it("blocks non-positive amounts client-side without calling the API", async () => {
    const mock = new MockApi();
    const result = await submitPledgeForm(client(mock), "SP1", "ST1", "F1", 0);
    expect(result.ok).toBe(false);
    expect(result.errorCode).toBe("NonPositiveAmount");
    expect(mock.requests).toHaveLength(0);
  });
});

describe("fundraiser view", () => {
  it("shows per-student collected totals for this fundraiser and the tip", async () => {
    const mock = new MockApi();
    mock.on("GET", "/students/active", ACTIVE_STUDENTS);
    mock.on("GET", "/chain", {
      blocks: [
        { index: 0, kind: "genesis", hash: "00".repeat(32), prev_hash: "00".repeat(32), miner_id: "GENESIS" },
        { index: 1, kind: "contract", hash: "ab".repeat(32), prev_hash: "00".repeat(32), miner_id: "F1" },
      ],
    });
    mock.on("GET", "/chain/verify", { valid: true, reason: "ok" });
    const view = await fetchFundraiserView(client(mock), "F1");
    expect(view.collectedByStudent).toEqual({ ST1: 4000 });
    expect(view.chainLength).toBe(2);
    const html = renderFundraiserView(view);
    expect(html).toContain("chain valid");
    expect(html).toContain(formatCents(4000));
    expect(html).toContain("2 blocks");
  });

  it("renders the empty active list state", async () => {
    const mock = new MockApi();
    mock.on("GET", "/students/active", { students: [] });
    mock.on("GET", "/chain", { blocks: [] });
    mock.on("GET", "/chain/verify", { valid: true, reason: "ok" });
    const html = renderFundraiserView(await fetchFundraiserView(client(mock), "F1"));
    expect(html).toContain("No students are currently seeking funds");
  });
});

describe("contract page", () => {
  it("renders terms with shares summing to the program cost", async () => {
    const mock = new MockApi();
    mock.on("GET", "/contracts/ST1", CONTRACT);
    const contract = await fetchContractPage(client(mock), "ST1");
    expect(contract).not.toBeNull();
    const sum = contract!.terms.shares.reduce((a, s) => a + s.amount, 0);
    expect(sum).toBe(contract!.terms.program_cost);
    const html = renderContractPage(contract);
    expect(html).toContain(formatCents(10000));
    expect(html).toContain(formatCents(6000));
    expect(html).toContain(formatCents(4000));
    expect(html).toContain(CONTRACT.contract_hash);
    expect(html).toContain(CONTRACT.document_hash);
    expect(html).toContain("Amended by block(s) 2");
  });

  it("renders the not-found page on 404", async () => {
    const mock = new MockApi();
    const contract = await fetchContractPage(client(mock), "ST404");
    expect(contract).toBeNull();
    expect(renderContractPage(contract)).toContain("No contract recorded");
  });
});

describe("dashboard controller", () => {
  it("keeps the last good view and raises the stale banner on failure", async () => {
    const mock = new MockApi();
    mock.on("GET", "/wallets/SP1", WALLET);
    mock.on("GET", "/students/active", ACTIVE_STUDENTS);
    const controller = new DashboardController(
      session("Sponsor", "SP1"),
      () => undefined,
      client(mock),
    );
    await controller.poll();
    expect(controller.state.stale).toBe(false);
    const goodHtml = controller.state.html;

    mock.failNetwork = true;
    await controller.poll();
    expect(controller.state.stale).toBe(true);
    expect(controller.state.html).toBe(goodHtml);
    expect(controller.bannerHtml()).toContain("Connection lost");

    mock.failNetwork = false;
    await controller.poll();
    expect(controller.state.stale).toBe(false);
    expect(controller.bannerHtml()).toBe("");
  });

  it("shares a single in-flight poll", async () => {
    const mock = new MockApi();
    mock.on("GET", "/wallets/SP1", WALLET);
    mock.on("GET", "/students/active", ACTIVE_STUDENTS);
    const controller = new DashboardController(
      session("Sponsor", "SP1"),
      () => undefined,
      client(mock),
    );
    await Promise.all([controller.poll(), controller.poll(), controller.poll()]);
    const walletGets = mock.requests.filter((r) => r.path === "/wallets/SP1");
    expect(walletGets).toHaveLength(1);
  });
});

describe("session validation", () => {
  it("accepts a sponsor with a wallet and rejects one without", async () => {
    const mock = new MockApi();
    mock.on("GET", "/wallets/SP1", WALLET);
    expect(await validateSession(client(mock), "SP1", "Sponsor")).toBeNull();
    expect(await validateSession(client(mock), "SP-GHOST", "Sponsor")).toContain("SP-GHOST");
  });
});
