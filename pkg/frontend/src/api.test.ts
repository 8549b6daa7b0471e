import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "./api.js";

type Call = { url: string; init?: RequestInit };

function fakeFetch(
  respond: (url: string, init?: RequestInit) => { status: number; body: unknown },
) {
  const calls: Call[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const { status, body } = respond(url, init);
    return new Response(JSON.stringify(body), { status });
  };
  return { calls, fetchFn };
}

const SESSION = {
  token: "tok-123",
  user_id: "alice",
  devices: [],
};

describe("ApiClient", () => {
  it("stores the token on login and sends it afterwards", async () => {
    const { calls, fetchFn } = fakeFetch((url) => {
      if (url.endsWith("/login")) return { status: 200, body: SESSION };
      return { status: 200, body: { notifications: [] } };
    });
    const api = new ApiClient("http://x", fetchFn);
    await api.login("alice", "pw");
    expect(api.token).toBe("tok-123");
    await api.notifications("alice");
    const headers = calls[1].init?.headers as Record<string, string>;
    expect(headers["Authorization"]).toBe("Bearer tok-123");
  });

  it("sends no Authorization header before login", async () => {
    const { calls, fetchFn } = fakeFetch(() => ({ status: 200, body: SESSION }));
    const api = new ApiClient("http://x", fetchFn);
    await api.login("alice", "pw");
    const headers = calls[0].init?.headers as Record<string, string>;
    expect(headers["Authorization"]).toBeUndefined();
  });

  it("surfaces the server's error message", async () => {
    const { fetchFn } = fakeFetch(() => ({
      status: 409,
      body: { error: "user alice exists" },
    }));
    const api = new ApiClient("http://x", fetchFn);
    await expect(api.register("alice", "pw", "ESP-001")).rejects.toThrowError(
      new ApiError(409, "user alice exists"),
    );
  });

  it("drops the token on a 401", async () => {
    let fail = false;
    const { fetchFn } = fakeFetch(() =>
      fail
        ? { status: 401, body: { error: "token expired" } }
        : { status: 200, body: SESSION },
    );
    const api = new ApiClient("http://x", fetchFn);
    await api.login("alice", "pw");
    fail = true;
    await expect(api.network("ESP-001")).rejects.toMatchObject({ status: 401 });
    expect(api.token).toBeNull();
  });

  it("logout clears the token even if the request fails", async () => {
    let fail = false;
    const { fetchFn } = fakeFetch(() => {
      if (fail) throw new Error("boom");
      return { status: 200, body: SESSION };
    });
    const api = new ApiClient("http://x", fetchFn);
    await api.login("alice", "pw");
    fail = true;
    await api.logout();
    expect(api.token).toBeNull();
  });

  it("builds the postpaid what-if query", async () => {
    const { calls, fetchFn } = fakeFetch(() => ({ status: 200, body: {} }));
    const api = new ApiClient("http://x", fetchFn);
    api.token = "t";
    await api.postpaidBilling("ESP-001", "1000.00");
    expect(calls[0].url).toBe(
      "http://x/devices/ESP-001/billing?mode=postpaid&paid=1000.00",
    );
  });

  it("wraps network failures as status 0", async () => {
    const api = new ApiClient("http://x", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(api.login("a", "b")).rejects.toMatchObject({ status: 0 });
  });
});
