import { describe, expect, it } from "vitest";
import { Store, type Pin } from "../src/state.js";
import type { MatchResultWire } from "../src/api.js";

function pin(id: string): Pin {
  return { id, name: `Place ${id}`, category: "cafe", lat: 1.29, lon: 103.85 };
}

describe("Store", () => {
  it("keeps pin order and deduplicates by id", () => {
    const store = new Store();
    expect(store.addPin(pin("a"))).toBe(true);
    expect(store.addPin(pin("b"))).toBe(true);
    expect(store.addPin(pin("a"))).toBe(false);
    expect(store.get().pins.map((p) => p.id)).toEqual(["a", "b"]);
  });

  it("mode conversion never discards pins", () => {
    const store = new Store();
    store.addPin(pin("a"));
    store.addPin(pin("b"));
    store.setMode("chat");
    store.setMode("map");
    store.setMode("chat");
    expect(store.get().pins.map((p) => p.id)).toEqual(["a", "b"]);
  });

  it("stores results exactly in the order given", () => {
    const store = new Store();
    const results = [0.2, 0.9, 0.5].map(
      (similarity): MatchResultWire => ({ assignment: [], score_m: 0, similarity }),
    );
    store.setResults(results);
    expect(store.get().results.map((r) => r.similarity)).toEqual([0.2, 0.9, 0.5]);
  });

  it("notifies subscribers on every mutation", () => {
    const store = new Store();
    let calls = 0;
    store.subscribe(() => {
      calls += 1;
    });
    store.addPin(pin("a"));
    store.removePin("a");
    store.setMode("chat");
    expect(calls).toBe(3);
  });
});
