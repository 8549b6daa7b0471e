import { ApiClient, ApiError } from "./api.js";
import { layoutChart, renderChartSvg } from "./chart.js";
import type { DeviceSummary, Session } from "./types.js";
import {
  activeAlert,
  deviceRows,
  isStale,
  postpaidRows,
  prepaidRows,
  validatePaidAmount,
  validateRecharge,
  type LabelledRow,
} from "./viewmodel.js";

const POLL_INTERVAL_MS = 5000;

const API_BASE =
  new URLSearchParams(window.location.search).get("api") ??
  `http://${window.location.hostname}:7080`;

const api = new ApiClient(API_BASE);

let session: Session | null = null;
let currentDevice: DeviceSummary | null = null;
let pollTimer: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function show(id: string, visible: boolean): void {
  el(id).style.display = visible ? "" : "none";
}

function setText(id: string, text: string): void {
  el(id).textContent = text;
}

function renderRows(tableId: string, rows: LabelledRow[]): void {
  const table = el<HTMLTableElement>(tableId);
  table.innerHTML = "";
  for (const row of rows) {
    const tr = table.insertRow();
    tr.insertCell().textContent = row.label;
    const value = tr.insertCell();
    value.textContent = row.value;
    value.className = "value";
  }
}

// -- screens ---------------------------------------------------------------

function showLogin(message = ""): void {
  stopPolling();
  session = null;
  currentDevice = null;
  show("screen-login", true);
  show("screen-main", false);
  setText("login-error", message);
}

function showMain(): void {
  show("screen-login", false);
  show("screen-main", true);
  renderDeviceTabs();
  void refresh();
  startPolling();
}

function renderDeviceTabs(): void {
  const nav = el("device-tabs");
  nav.innerHTML = "";
  for (const device of session?.devices ?? []) {
    const button = document.createElement("button");
    button.textContent = device.chip_id;
    button.className = device.chip_id === currentDevice?.chip_id ? "active" : "";
    button.addEventListener("click", () => {
      currentDevice = device;
      renderDeviceTabs();
      void refresh();
    });
    nav.appendChild(button);
  }
}

async function refresh(): Promise<void> {
  if (!session || !currentDevice) return;
  const chip = currentDevice.chip_id;
  try {
    const [network, weekly, notifications] = await Promise.all([
      api.network(chip),
      api.weekly(chip).catch(() => null), // empty data: placeholder below
      api.notifications(session.user_id),
    ]);
    currentDevice = network;
    renderRows("device-table", deviceRows(network));
    setText(
      "staleness",
      isStale(network.last_report_at, Date.now()) ? "stale: no recent reports" : "",
    );

    const chartBox = el("chart-box");
    if (weekly && weekly.series.length > 0) {
      chartBox.innerHTML = renderChartSvg(layoutChart(weekly));
    } else {
      chartBox.innerHTML = '<p class="placeholder">No consumption recorded yet.</p>';
    }

    const alert = activeAlert(notifications);
    show("alert-banner", alert !== null);
    if (alert) {
      setText("alert-message", alert.message);
      el<HTMLButtonElement>("alert-ack").onclick = () => {
        void api
          .acknowledge(session!.user_id, alert.index)
          .then(() => refresh())
          .catch(showError);
      };
    }

    if (network.meter_mode === "prepaid") {
      show("prepaid-card", true);
      renderRows("prepaid-table", prepaidRows(await api.prepaidBilling(chip)));
    } else {
      show("prepaid-card", false);
    }
    setText("main-error", "");
  } catch (err) {
    showError(err);
  }
}

function showError(err: unknown): void {
  if (err instanceof ApiError && err.status === 401) {
    showLogin("Session expired, log in again.");
    return;
  }
  setText("main-error", err instanceof Error ? err.message : String(err));
}

function startPolling(): void {
  stopPolling();
  pollTimer = window.setInterval(() => void refresh(), POLL_INTERVAL_MS);
}

function stopPolling(): void {
  if (pollTimer !== null) {
    window.clearInterval(pollTimer);
    pollTimer = null;
  }
}

// -- wiring ----------------------------------------------------------------

function wireLogin(): void {
  el<HTMLFormElement>("login-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const userId = el<HTMLInputElement>("login-user").value.trim();
    const password = el<HTMLInputElement>("login-password").value;
    api
      .login(userId, password)
      .then((s) => {
        session = s;
        currentDevice = s.devices[0] ?? null;
        showMain();
      })
      .catch(() => setText("login-error", "Login failed, check your credentials."));
  });

  el<HTMLFormElement>("register-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const userId = el<HTMLInputElement>("register-user").value.trim();
    const password = el<HTMLInputElement>("register-password").value;
    const chipId = el<HTMLInputElement>("register-chip").value.trim();
    api
      .register(userId, password, chipId)
      .then(() => setText("login-error", "Registered, you can log in now."))
      .catch((err: ApiError) => setText("login-error", err.message));
  });
}

function wireMain(): void {
  el<HTMLButtonElement>("logout").addEventListener("click", () => {
    void api.logout().finally(() => showLogin());
  });

  el<HTMLFormElement>("recharge-form").addEventListener("submit", (event) => {
    event.preventDefault();
    if (!session) return;
    const input = el<HTMLInputElement>("recharge-amount");
    const check = validateRecharge(input.value);
    if (!check.ok) {
      setText("recharge-error", check.error);
      return;
    }
    setText("recharge-error", "");
    api
      .recharge(session.user_id, check.amount)
      .then(() => {
        input.value = "";
        return refresh();
      })
      .catch((err: ApiError) => setText("recharge-error", err.message));
  });

  el<HTMLFormElement>("postpaid-form").addEventListener("submit", (event) => {
    event.preventDefault();
    if (!currentDevice) return;
    const check = validatePaidAmount(el<HTMLInputElement>("paid-amount").value);
    if (!check.ok) {
      setText("postpaid-error", check.error);
      return;
    }
    setText("postpaid-error", "");
    api
      .postpaidBilling(currentDevice.chip_id, check.amount)
      .then((billing) => renderRows("postpaid-table", postpaidRows(billing)))
      .catch((err: ApiError) => setText("postpaid-error", err.message));
  });
}

wireLogin();
wireMain();
showLogin();
