// Round-trip tests against a real server instance (spawned from the Python
// package in the repository root). Exercises only the public HTTP contract.

import { spawn, type ChildProcess } from "node:child_process";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient, type PoiWire } from "../src/api.js";
import { convertPinsToText } from "../src/convert.js";
import { haversineM } from "../src/geo.js";
import type { Pin } from "../src/state.js";

const PORT = 8641;
const BASE = `http://127.0.0.1:${PORT}`;
const ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

let server: ChildProcess;
const api = new ApiClient(BASE);

function asPin(poi: PoiWire): Pin {
  return { id: poi.id, name: poi.name, category: poi.category, lat: poi.lat, lon: poi.lon };
}

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      await api.pois(1.2931, 103.8558, 100);
      return;
    } catch (err) {
      lastError = err;
      await new Promise((r) => setTimeout(r, 250));
    }
  }
  throw new Error(`server did not come up on ${BASE}: ${lastError}`);
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "seqsearch.cli", "serve", "--listen", `127.0.0.1:${PORT}`], {
    cwd: ROOT,
    stdio: "ignore",
  });
  await waitForServer();
}, 40_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("mode conversion round trip", () => {
  it("pins -> canonical sentence -> server extraction reproduces the pins", async () => {
    const nearby = await api.pois(1.2931, 103.8558, 1500);
    const byName = new Map(nearby.pois.map((p) => [p.name, p]));
    const pins = [asPin(byName.get("Suntec City")!), asPin(byName.get("Anytime Fitness City Hall")!)];

    const sentence = convertPinsToText(pins);
    const clientDistance = Math.round(
      haversineM(pins[0].lat, pins[0].lon, pins[1].lat, pins[1].lon),
    );
    expect(sentence).toContain(`is ${clientDistance} meters`);

    const session = await api.createSession();
    expect(session.state).toBe("greet");
    const resp = await api.sendMessage(session.session_id, sentence);

    const examples = resp.draft.examples;
    expect(examples).toHaveLength(pins.length);
    expect(examples.map((e) => e.name)).toEqual(pins.map((p) => p.name));
    expect(examples.map((e) => e.kind)).toEqual(["named", "named"]);
    // the engine recomputes the anchor distance from the dataset; it must
    // agree with the client-side computation to the meter
    expect(Math.abs((examples[1].anchor_distance_m ?? 0) - clientDistance)).toBeLessThanOrEqual(1);
  });

  it("full chat flow returns ranked results in response order", async () => {
    const session = await api.createSession();
    const turns = [
      "I want to search for places like 1. Suntec City and 2. Anytime Fitness City Hall. " +
        "The distance in meters of each place from the first place is 416 meters.",
      "I want to add a hotel",
      "Any hotel within 200 meters",
      "In downtown Sydney",
    ];
    let last: Awaited<ReturnType<typeof api.sendMessage>> | null = null;
    for (const turn of turns) {
      last = await api.sendMessage(session.session_id, turn);
    }
    expect(last!.state).toBe("present_results");
    expect(last!.results && last!.results.length).toBeGreaterThan(0);
    const sims = last!.results!.map((r) => r.similarity);
    expect([...sims].sort((a, b) => b - a)).toEqual(sims);
    const top = last!.results![0];
    expect(top.assignment.map((p) => p.category)).toEqual(["mall", "gym", "hotel"]);
  });

  it("direct search hits the cache on a repeat query", async () => {
    const query = {
      examples: [
        { kind: "named" as const, name: "Suntec City", category: "", anchor_distance_m: 0 },
        { kind: "category_only" as const, name: null, category: "hotel", anchor_distance_m: 200 },
      ],
      area: { name: "downtown Sydney" },
      k: 5,
      eps_m: 400,
    };
    const first = await api.search(query);
    const second = await api.search(query);
    expect(second.cache_hit).toBe(true);
    expect(second.results).toEqual(first.results);
  });
});
