/** Browser bootstrap: load config.json, wire the session picker, forms,
 * and the per-role dashboard controller. */

import { ApiClient, ApiRequestError } from "./api.js";
import { DashboardController, validateSession } from "./dashboard.js";
import { parseDollarsToCents } from "./format.js";
import { renderContractPage } from "./render.js";
import type { DashboardConfig, Role } from "./types.js";
import { fetchContractPage, submitPledgeForm } from "./views.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function loadConfig(): Promise<DashboardConfig> {
  const response = await fetch("./config.json");
  if (!response.ok) throw new Error(`cannot load config.json: ${response.status}`);
  const raw = await response.json();
  return {
    api_base: String(raw.api_base ?? "http://127.0.0.1:8151"),
    poll_interval_ms: Number(raw.poll_interval_ms ?? 1000),
  };
}

let controller: DashboardController | null = null;

function repaint(): void {
  if (!controller) return;
  el("banner").innerHTML = controller.bannerHtml();
  el("view").innerHTML = controller.state.html;
}

async function connect(config: DashboardConfig): Promise<void> {
  const accountId = (el<HTMLInputElement>("account-id").value || "").trim();
  const role = el<HTMLSelectElement>("role").value as Role;
  const status = el("session-status");
  if (!accountId) {
    status.textContent = "Enter an account id first.";
    return;
  }
  const api = new ApiClient(config.api_base);
  status.textContent = "Checking account…";
  const problem = await validateSession(api, accountId, role);
  if (problem !== null) {
    status.textContent = problem;
    return;
  }
  status.textContent = `Connected as ${role} ${accountId} (polling every ${config.poll_interval_ms} ms)`;
  controller?.stop();
  controller = new DashboardController(
    { accountId, role, apiBase: config.api_base, pollIntervalMs: config.poll_interval_ms },
    repaint,
  );
  el("pledge-form-box").style.display = role === "Sponsor" ? "" : "none";
  controller.start();
}

async function onPledgeSubmit(event: Event): Promise<void> {
  event.preventDefault();
  if (!controller || controller.session.role !== "Sponsor") return;
  const feedback = el("pledge-feedback");
  const amountCents = parseDollarsToCents(el<HTMLInputElement>("pledge-amount").value);
  if (amountCents === null || amountCents <= 0) {
    feedback.textContent = "Enter a positive dollar amount (e.g. 25.00).";
    return;
  }
  const studentId = el<HTMLInputElement>("pledge-student").value.trim();
  const fundraiserId = el<HTMLInputElement>("pledge-fundraiser").value.trim();
  const result = await controller.runAction(() =>
    submitPledgeForm(
      controller!.api,
      controller!.session.accountId,
      studentId,
      fundraiserId,
      amountCents,
    ),
  );
  feedback.textContent = result.ok ? "Pledge placed." : `${result.errorCode}: ${result.message}`;
}

async function onContractLookup(event: Event): Promise<void> {
  event.preventDefault();
  if (!controller) return;
  const studentId = el<HTMLInputElement>("contract-student").value.trim();
  if (!studentId) return;
  try {
    const contract = await fetchContractPage(controller.api, studentId);
    el("contract-view").innerHTML = renderContractPage(contract);
  } catch (err) {
    el("contract-view").textContent =
      err instanceof ApiRequestError ? `${err.errorCode}: ${err.message}` : String(err);
  }
}

async function start(): Promise<void> {
  const config = await loadConfig();
  el("api-base").textContent = config.api_base;
  el<HTMLFormElement>("session-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void connect(config);
  });
  el<HTMLFormElement>("pledge-form").addEventListener("submit", onPledgeSubmit);
  el<HTMLFormElement>("contract-form").addEventListener("submit", onContractLookup);
}

void start();
