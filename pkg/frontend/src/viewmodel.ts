import type {
  DeviceSummary,
  Notification,
  PostpaidBilling,
  PrepaidBilling,
} from "./types.js";

/** Pure view logic: everything here is testable without a DOM.
 *
 * Server-formatted money and kWh strings pass through untouched so the
 * screen shows exactly what the API serialized.
 */

export type LabelledRow = { label: string; value: string };

export function prepaidRows(b: PrepaidBilling): LabelledRow[] {
  const rows: LabelledRow[] = [
    { label: "Consumed units (kWh)", value: b.consumed_units },
    { label: "Consumed pulses", value: String(b.consumed_pulses) },
  ];
  b.tier_charges.forEach((charge, i) => {
    rows.push({ label: `Tier ${i + 1} charge`, value: charge });
  });
  rows.push(
    { label: "Energy charge", value: b.energy_charge },
    { label: "Demand charge", value: b.demand_charge },
    { label: "VAT", value: b.vat },
    { label: "Total cost", value: b.total },
    { label: "Balance", value: b.balance },
  );
  return rows;
}

export function postpaidRows(b: PostpaidBilling): LabelledRow[] {
  return [
    { label: "Paid amount", value: b.paid_amount },
    { label: "VAT", value: b.vat },
    { label: "Meter rent", value: b.meter_rent },
    { label: "Demand charge", value: b.demand_charge },
    { label: "Purchasable energy", value: b.purchasable },
    { label: "Rebate", value: b.rebate },
    { label: "Purchasable units (kWh)", value: b.purchasable_units },
  ];
}

export function deviceRows(d: DeviceSummary): LabelledRow[] {
  return [
    { label: "Chip ID", value: d.chip_id },
    { label: "Hostname", value: d.hostname },
    { label: "IP address", value: d.ip },
    { label: "MAC address", value: d.mac },
    { label: "Meter mode", value: d.meter_mode },
    { label: "Cumulative pulses", value: String(d.cumulative_pulses) },
    { label: "Total energy (kWh)", value: d.total_power_kwh },
    { label: "Last report", value: d.last_report_at ?? "never" },
  ];
}

export type RechargeCheck =
  | { ok: true; amount: string }
  | { ok: false; error: string };

/** Client-side gate: a malformed or non-positive amount never reaches
 * the server. Valid input is normalized to two decimals. */
export function validateRecharge(input: string): RechargeCheck {
  const trimmed = input.trim();
  if (!/^\d+(\.\d{1,2})?$/.test(trimmed)) {
    return { ok: false, error: "enter an amount like 250 or 250.00" };
  }
  const [whole, frac = ""] = trimmed.split(".");
  const paisa = Number(whole) * 100 + Number(frac.padEnd(2, "0"));
  if (paisa <= 0) {
    return { ok: false, error: "amount must be positive" };
  }
  return { ok: true, amount: `${whole}.${frac.padEnd(2, "0")}` };
}

export function validatePaidAmount(input: string): RechargeCheck {
  const trimmed = input.trim();
  if (!/^\d+(\.\d{1,2})?$/.test(trimmed)) {
    return { ok: false, error: "enter an amount like 1000 or 1000.00" };
  }
  const [whole, frac = ""] = trimmed.split(".");
  return { ok: true, amount: `${whole}.${frac.padEnd(2, "0")}` };
}

/** The banner shows the oldest unacknowledged alert and stays until
 * that alert is acknowledged. */
export function activeAlert(notifications: Notification[]): Notification | null {
  for (const n of notifications) {
    if (!n.acknowledged) return n;
  }
  return null;
}

export const DEFAULT_SILENCE_WINDOW_S = 600;

/** A device is stale when it has not reported within the silence window. */
export function isStale(
  lastReportAt: string | null,
  nowMs: number,
  silenceWindowS: number = DEFAULT_SILENCE_WINDOW_S,
): boolean {
  if (lastReportAt === null) return true;
  const last = Date.parse(lastReportAt);
  if (Number.isNaN(last)) return true;
  return nowMs - last > silenceWindowS * 1000;
}
