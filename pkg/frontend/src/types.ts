/** Wire types mirroring the service's JSON responses.
 *
 * Money and kWh figures arrive as already-formatted strings and must be
 * rendered verbatim; the client never re-does money arithmetic.
 */

export interface DeviceSummary {
  chip_id: string;
  hostname: string;
  mac: string;
  ip: string;
  meter_mode: "prepaid" | "postpaid";
  cumulative_pulses: number;
  total_power_kwh: string;
  last_seq: number;
  last_report_at: string | null;
}

export interface Session {
  token: string;
  user_id: string;
  devices: DeviceSummary[];
}

export interface ConsumptionRow {
  day: string;
  pulse_count: number;
  kwh: string;
  vat: string;
  total: string;
}

export interface ConsumptionResponse {
  device: DeviceSummary;
  rows: ConsumptionRow[];
}

export interface PrepaidBilling {
  mode: "prepaid";
  consumed_units: string;
  consumed_pulses: number;
  tier_charges: string[];
  energy_charge: string;
  demand_charge: string;
  vat: string;
  total: string;
  balance: string;
  alert_state: "armed" | "fired";
}

export interface PostpaidBilling {
  mode: "postpaid";
  consumed_units: string;
  consumed_pulses: number;
  paid_amount: string;
  vat: string;
  meter_rent: string;
  demand_charge: string;
  purchasable: string;
  rebate: string;
  purchasable_units: string;
}

export interface WeeklyReport {
  base_kwh: string;
  max_kwh: string;
  average_kwh: string;
  series: { day: string; kwh: string }[];
}

export interface Notification {
  index: number;
  user_id: string;
  cycle: number;
  at: string;
  message: string;
  balance: string;
  consumed_cost: string;
  acknowledged: boolean;
}

export interface RechargeResponse {
  user_id: string;
  balance: string;
  alert_state: "armed" | "fired";
}
