/** Display helpers. Amounts stay integers end to end: formatting splits
 * cents with integer arithmetic only, never floating point. */

export function formatCents(cents: number): string {
  if (!Number.isInteger(cents)) {
    throw new Error(`amount must be an integer cent value, got ${cents}`);
  }
  const sign = cents < 0 ? "-" : "";
  const abs = Math.abs(cents);
  const dollars = (abs - (abs % 100)) / 100;
  const remainder = String(abs % 100).padStart(2, "0");
  return `${sign}$${dollars}.${remainder}`;
}

/** Whole-percent progress for a bar width; purely presentational. */
export function progressPercent(collected: number, target: number): number {
  if (target <= 0) return 0;
  const pct = Math.floor((collected * 100) / target);
  return Math.max(0, Math.min(100, pct));
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

/** Parse a user-entered dollar amount into integer cents; null if invalid. */
export function parseDollarsToCents(raw: string): number | null {
  const text = raw.trim();
  if (!/^\d+(\.\d{1,2})?$/.test(text)) return null;
  const [dollars, fraction = ""] = text.split(".");
  const cents = parseInt(dollars, 10) * 100 + parseInt(fraction.padEnd(2, "0") || "0", 10);
  return Number.isSafeInteger(cents) ? cents : null;
}
