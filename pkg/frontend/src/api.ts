import type {
  ConsumptionResponse,
  DeviceSummary,
  Notification,
  PostpaidBilling,
  PrepaidBilling,
  RechargeResponse,
  Session,
  WeeklyReport,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the meter service HTTP API.
 *
 * Holds the session token in memory only; logout (or a 401) clears it.
 * The fetch implementation is injectable so tests can run without a
 * server.
 */
export class ApiClient {
  token: string | null = null;

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token !== null) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      if (response.status === 401) this.token = null;
      const reason =
        typeof payload.error === "string" ? payload.error : response.statusText;
      throw new ApiError(response.status, reason);
    }
    return payload as T;
  }

  async register(
    userId: string,
    password: string,
    chipId: string,
  ): Promise<{ user_id: string; devices: string[] }> {
    return this.request("POST", "/register", {
      user_id: userId,
      password,
      chip_id: chipId,
    });
  }

  async login(userId: string, password: string): Promise<Session> {
    const session = await this.request<Session>("POST", "/login", {
      user_id: userId,
      password,
    });
    this.token = session.token;
    return session;
  }

  async logout(): Promise<void> {
    if (this.token === null) return;
    await this.request("POST", "/logout").catch(() => undefined);
    this.token = null;
  }

  network(chipId: string): Promise<DeviceSummary> {
    return this.request("GET", `/devices/${chipId}/network`);
  }

  consumption(chipId: string): Promise<ConsumptionResponse> {
    return this.request("GET", `/devices/${chipId}/consumption`);
  }

  weekly(chipId: string): Promise<WeeklyReport> {
    return this.request("GET", `/devices/${chipId}/weekly`);
  }

  prepaidBilling(chipId: string): Promise<PrepaidBilling> {
    return this.request("GET", `/devices/${chipId}/billing?mode=prepaid`);
  }

  postpaidBilling(chipId: string, paid: string): Promise<PostpaidBilling> {
    const amount = encodeURIComponent(paid);
    return this.request(
      "GET",
      `/devices/${chipId}/billing?mode=postpaid&paid=${amount}`,
    );
  }

  recharge(userId: string, amount: string): Promise<RechargeResponse> {
    return this.request("POST", `/users/${userId}/recharge`, { amount });
  }

  async notifications(userId: string): Promise<Notification[]> {
    const body = await this.request<{ notifications: Notification[] }>(
      "GET",
      `/users/${userId}/notifications`,
    );
    return body.notifications;
  }

  acknowledge(userId: string, index: number): Promise<{ ok: boolean }> {
    return this.request("POST", `/users/${userId}/notifications/${index}/ack`);
  }
}
