/** HTML rendering for the three dashboards. Pure string templating over
 * view models so the output is testable without a browser. */

import { escapeHtml as esc, formatCents, progressPercent } from "./format.js";
import type { ActiveStudent, ContractView } from "./types.js";
import type { FundraiserView, SponsorView, StudentStatusView } from "./views.js";

function progressBar(collected: number, target: number): string {
  const pct = progressPercent(collected, target);
  return (
    `<div class="progress"><div class="progress-fill" style="width:${pct}%"></div></div>` +
    `<span class="amounts">${formatCents(collected)} of ${formatCents(target)}</span>`
  );
}

function activeStudentRows(students: ActiveStudent[], highlightFundraiser?: string): string {
  if (!students.length) {
    return `<p class="empty">No students are currently seeking funds.</p>`;
  }
  const rows = students
    .map((s) => {
      const collected = highlightFundraiser
        ? (s.collected[highlightFundraiser] ?? 0)
        : Object.values(s.collected).reduce((a, b) => a + b, 0);
      return (
        `<tr class="state-${esc(s.state.toLowerCase())}">` +
        `<td>${esc(s.student_id)}</td>` +
        `<td>${esc(s.program_name)} — ${esc(s.institute_name)}</td>` +
        `<td>${progressBar(collected, s.target_amount_cents)}</td>` +
        `<td>${formatCents(s.remaining_cents)}</td>` +
        `<td>${esc(s.state)}</td></tr>`
      );
    })
    .join("");
  return (
    `<table><thead><tr><th>Student</th><th>Program</th><th>Collected</th>` +
    `<th>Remaining here</th><th>State</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderStudentView(view: StudentStatusView): string {
  const parts = [`<h2>Application of ${esc(view.studentId)}</h2>`];
  parts.push(`<p>Status: <strong>${esc(view.applicationStatus)}</strong>` +
    (view.rejectReason ? ` (${esc(view.rejectReason)})` : "") + `</p>`);
  if (view.targetAmountCents !== null) {
    const fundraisers = Object.keys(view.collected);
    if (fundraisers.length) {
      const rows = fundraisers
        .map(
          (f) =>
            `<tr><td>${esc(f)}</td><td>${progressBar(view.collected[f], view.targetAmountCents!)}</td></tr>`,
        )
        .join("");
      parts.push(
        `<h3>Funding progress</h3><table><thead><tr><th>Fundraiser</th><th>Collected</th></tr></thead>` +
          `<tbody>${rows}</tbody></table>`,
      );
    } else {
      parts.push(`<p class="empty">No pledges collected yet.</p>`);
    }
  }
  if (view.contract) {
    parts.push(`<h3>Contract</h3>`);
    parts.push(renderContractPage(view.contract));
  }
  return parts.join("\n");
}

export function renderSponsorView(view: SponsorView): string {
  const wallet = view.wallet;
  const pledgeRows = view.pledges.length
    ? view.pledges
        .map(
          (p) =>
            `<tr><td>${esc(p.pledge_id)}</td><td>${esc(p.student_id)}</td>` +
            `<td>${esc(p.fundraiser_id)}</td><td>${formatCents(p.amount)}</td>` +
            `<td class="pledge-${esc(p.status.toLowerCase())}">${esc(p.status)}</td></tr>`,
        )
        .join("")
    : "";
  return [
    `<h2>Wallet of ${esc(view.sponsorId)}</h2>`,
    `<p class="wallet">Available: <strong data-field="available">${formatCents(wallet.available)}</strong>` +
      ` &middot; Reserved: <strong data-field="reserved">${formatCents(wallet.reserved)}</strong></p>`,
    `<h3>Your pledges</h3>`,
    view.pledges.length
      ? `<table><thead><tr><th>Pledge</th><th>Student</th><th>Via</th><th>Amount</th><th>Status</th></tr></thead><tbody>${pledgeRows}</tbody></table>`
      : `<p class="empty">No pledges yet.</p>`,
    `<h3>Students seeking funds</h3>`,
    activeStudentRows(view.activeStudents),
  ].join("\n");
}

export function renderFundraiserView(view: FundraiserView): string {
  const verification = view.verification.valid
    ? `<span class="ok">chain valid</span>`
    : `<span class="bad">INVALID at ${view.verification.first_bad_index}: ${esc(view.verification.reason)}</span>`;
  const tip = view.tip
    ? `#${view.tip.index} (${esc(view.tip.kind)}) ${esc(view.tip.hash.slice(0, 16))}…`
    : "none";
  return [
    `<h2>Fundraiser ${esc(view.fundraiserId)}</h2>`,
    `<p>Ledger: ${view.chainLength} blocks &middot; tip ${tip} &middot; ${verification}</p>`,
    `<h3>Active students (sorted list)</h3>`,
    activeStudentRows(view.activeStudents, view.fundraiserId),
  ].join("\n");
}

export function renderContractPage(contract: ContractView | null): string {
  if (contract === null) {
    return `<p class="empty not-found">No contract recorded for this student.</p>`;
  }
  const terms = contract.terms;
  const shareRows = terms.shares
    .map((s) => `<tr><td>${esc(s.sponsor_id)}</td><td>${formatCents(s.amount)}</td></tr>`)
    .join("");
  const contactRows = contract.contacts
    .map(
      (c) =>
        `<tr><td>${esc(c.party_id)}</td><td>${esc(c.address)}</td>` +
        `<td>${esc(c.email)}</td><td>${esc(c.phone)}</td></tr>`,
    )
    .join("");
  return [
    `<div class="contract">`,
    `<p><strong>${esc(terms.student_id)}</strong> — ${esc(terms.program_name)} at ${esc(terms.institute_name)},`,
    ` ${terms.program_duration_months} months, cost ${formatCents(terms.program_cost)},`,
    ` mined by ${esc(terms.fundraiser_id)}.</p>`,
    `<p>Benefit: ${terms.benefit_percent_bp} basis points of post-graduation income for ${terms.benefit_period_months} months.</p>`,
    `<h4>Investor shares</h4>`,
    `<table><thead><tr><th>Sponsor</th><th>Amount</th></tr></thead><tbody>${shareRows}</tbody></table>`,
    `<h4>Parties (latest contact details)</h4>`,
    `<table><thead><tr><th>Party</th><th>Address</th><th>Email</th><th>Phone</th></tr></thead><tbody>${contactRows}</tbody></table>`,
    `<p class="hashes">Block #${contract.contract_index} hash <code>${esc(contract.contract_hash)}</code><br>`,
    `Document hash <code>${esc(contract.document_hash)}</code>`,
    contract.amendment_indices.length
      ? `<br>Amended by block(s) ${contract.amendment_indices.join(", ")}`
      : ``,
    `</p></div>`,
  ].join("");
}

export function renderStaleBanner(visible: boolean, detail: string): string {
  return visible
    ? `<div class="stale-banner">Connection lost — showing the last good data. ${esc(detail)}</div>`
    : "";
}
