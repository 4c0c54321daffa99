// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";
import { ApiClient } from "../src/api.js";
import { ChatPanel } from "../src/chat.js";
import { Store } from "../src/state.js";

function makePanel(fetchImpl: typeof fetch) {
  vi.stubGlobal("fetch", fetchImpl);
  const root = document.createElement("div");
  document.body.replaceChildren(root);
  const store = new Store();
  const panel = new ChatPanel(root, new ApiClient("http://test"), store);
  return { panel, store, root };
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ChatPanel", () => {
  beforeEach(() => {
    vi.unstubAllGlobals();
  });

  it("rejects empty input client-side without a request", async () => {
    const fetchSpy = vi.fn();
    const { panel } = makePanel(fetchSpy as unknown as typeof fetch);
    expect(await panel.send("   ")).toBe(false);
    expect(fetchSpy).not.toHaveBeenCalled();
    expect(panel.input.classList.contains("invalid")).toBe(true);
  });

  it("disables input while a request is in flight", async () => {
    let release: (value: Response) => void = () => {};
    const gate = new Promise<Response>((resolve) => {
      release = resolve;
    });
    const fetchSpy = vi.fn((url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith("/api/sessions")) {
        return Promise.resolve(
          jsonResponse(200, { session_id: "s1", state: "greet", greeting: "hi" }),
        );
      }
      return gate;
    });
    const { panel } = makePanel(fetchSpy as unknown as typeof fetch);
    const sending = panel.send("places like a gym and a station");
    await Promise.resolve();
    await Promise.resolve();
    expect(panel.busy).toBe(true);
    expect(panel.input.disabled).toBe(true);
    release(
      jsonResponse(200, {
        reply: "ok",
        state: "confirm_examples",
        draft: { examples: [], area: null, k: 10, eps_m: 500 },
      }),
    );
    expect(await sending).toBe(true);
    expect(panel.busy).toBe(false);
    expect(panel.input.disabled).toBe(false);
    expect(panel.stateBadge.textContent).toBe("confirm_examples");
  });

  it("renders server 409 as an inline queued notice", async () => {
    const fetchSpy = vi.fn((url: RequestInfo | URL) => {
      const path = String(url);
      if (path.endsWith("/api/sessions")) {
        return Promise.resolve(
          jsonResponse(200, { session_id: "s1", state: "greet", greeting: "hi" }),
        );
      }
      return Promise.resolve(
        jsonResponse(409, { error: { code: "SESSION_BUSY", message: "busy" } }),
      );
    });
    const { panel, store } = makePanel(fetchSpy as unknown as typeof fetch);
    expect(await panel.send("hello")).toBe(false);
    const system = store.get().transcript.filter((t) => t.role === "system");
    expect(system).toHaveLength(1);
    expect(system[0].text).toMatch(/previous message/);
  });

  it("renders transport failures as inline notices, never throws", async () => {
    const fetchSpy = vi.fn(() => Promise.reject(new Error("connection refused")));
    const { panel, store } = makePanel(fetchSpy as unknown as typeof fetch);
    expect(await panel.send("hello")).toBe(false);
    const system = store.get().transcript.filter((t) => t.role === "system");
    expect(system).toHaveLength(1);
    expect(system[0].text).toMatch(/connection refused/);
  });
});
