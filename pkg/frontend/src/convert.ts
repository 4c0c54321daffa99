// Map Mode -> Chat Mode conversion: pins become the one canonical sentence
// the server-side extractor is guaranteed to parse back into the same slots.

import { haversineM } from "./geo.js";
import type { Pin } from "./state.js";

function pinLabel(pin: Pin): string {
  // names without any capital letter would read as bare categories; quoting
  // keeps them recognized as named places
  return /[A-Z]/.test(pin.name) ? pin.name : `"${pin.name}"`;
}

export function pinDistancesM(pins: Pin[]): number[] {
  const anchor = pins[0];
  return pins
    .slice(1)
    .map((pin) => Math.round(haversineM(anchor.lat, anchor.lon, pin.lat, pin.lon)));
}

export function convertPinsToText(pins: Pin[]): string {
  if (pins.length === 0) {
    throw new Error("need at least one pin");
  }
  const enumeration = pins.map((pin, i) => `${i + 1}. ${pinLabel(pin)}`).join(" and ");
  const head = `I want to search for places like ${enumeration}.`;
  if (pins.length === 1) {
    return head;
  }
  const distances = pinDistancesM(pins);
  return (
    `${head} The distance in meters of each place from the first place is ` +
    `${distances.join(", ")} meters.`
  );
}
