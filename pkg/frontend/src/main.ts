import { ApiClient, type MatchResultWire, type PoiWire } from "./api.js";
import { ChatPanel } from "./chat.js";
import { convertPinsToText } from "./convert.js";
import { MapView, type Marker } from "./map.js";
import { renderResults } from "./results.js";
import { Store } from "./state.js";

const API_BASE =
  (window as unknown as { SEQSEARCH_API?: string }).SEQSEARCH_API ?? "http://127.0.0.1:8008";
const DEFAULT_CENTER = { lat: 1.2931, lon: 103.8558 };

const api = new ApiClient(API_BASE);
const store = new Store();

const mapContainer = document.getElementById("map")!;
const pinList = document.getElementById("pin-list")!;
const resultsContainer = document.getElementById("results")!;
const chatRoot = document.getElementById("chat")!;
const mapModeBtn = document.getElementById("mode-map") as HTMLButtonElement;
const chatModeBtn = document.getElementById("mode-chat") as HTMLButtonElement;
const convertBtn = document.getElementById("convert") as HTMLButtonElement;
const clearBtn = document.getElementById("clear-pins") as HTMLButtonElement;

const map = new MapView(mapContainer, DEFAULT_CENTER.lat, DEFAULT_CENTER.lon);
const chat = new ChatPanel(chatRoot, api, store, {
  onResults: (results) => {
    store.setResults(results);
  },
});

let nearbyPois: PoiWire[] = [];

function markers(): Marker[] {
  const state = store.get();
  const pinned = new Set(state.pins.map((p) => p.id));
  const out: Marker[] = [];
  for (const poi of nearbyPois) {
    if (pinned.has(poi.id)) continue;
    out.push({
      id: poi.id,
      lat: poi.lat,
      lon: poi.lon,
      label: `${poi.name} (${poi.category})`,
      kind: "poi",
      onClick: () => {
        store.addPin({ id: poi.id, name: poi.name, category: poi.category, lat: poi.lat, lon: poi.lon });
      },
    });
  }
  state.pins.forEach((pin, i) => {
    out.push({
      id: pin.id,
      lat: pin.lat,
      lon: pin.lon,
      label: `${i + 1}. ${pin.name}`,
      kind: "pin",
      onClick: () => store.removePin(pin.id),
    });
  });
  if (state.selectedResult !== null && state.results[state.selectedResult]) {
    for (const poi of state.results[state.selectedResult].assignment) {
      out.push({ id: `r-${poi.id}`, lat: poi.lat, lon: poi.lon, label: poi.name, kind: "result" });
    }
  }
  return out;
}

function renderPins(): void {
  const state = store.get();
  pinList.replaceChildren();
  if (state.pins.length === 0) {
    const hint = document.createElement("li");
    hint.className = "hint";
    hint.textContent = "Click map markers to pin example places.";
    pinList.appendChild(hint);
  }
  state.pins.forEach((pin, i) => {
    const item = document.createElement("li");
    item.textContent = `${i + 1}. ${pin.name} (${pin.category})`;
    const remove = document.createElement("button");
    remove.textContent = "×";
    remove.addEventListener("click", () => store.removePin(pin.id));
    item.appendChild(remove);
    pinList.appendChild(item);
  });
  convertBtn.disabled = state.pins.length === 0;
}

function applyMode(): void {
  const { mode } = store.get();
  document.body.dataset.mode = mode;
  mapModeBtn.classList.toggle("active", mode === "map");
  chatModeBtn.classList.toggle("active", mode === "chat");
}

function onSelectResult(result: MatchResultWire, index: number): void {
  store.selectResult(index);
  const anchor = result.assignment[0];
  map.setCenter(anchor.lat, anchor.lon);
}

store.subscribe(() => {
  renderPins();
  applyMode();
  map.setMarkers(markers());
  renderResults(resultsContainer, store.get().results, { onSelect: onSelectResult });
});

mapModeBtn.addEventListener("click", () => store.setMode("map"));
chatModeBtn.addEventListener("click", () => store.setMode("chat"));
clearBtn.addEventListener("click", () => store.clearPins());

convertBtn.addEventListener("click", () => {
  const pins = store.get().pins;
  if (pins.length === 0) return;
  const sentence = convertPinsToText(pins);
  store.setMode("chat");
  void chat.send(sentence);
});

async function boot(): Promise<void> {
  try {
    const resp = await api.pois(DEFAULT_CENTER.lat, DEFAULT_CENTER.lon, 1500);
    nearbyPois = resp.pois;
  } catch (err) {
    chat.notice(`Could not load map places: ${err instanceof Error ? err.message : err}`);
  }
  map.setMarkers(markers());
  renderPins();
  applyMode();
  await chat.ensureSession().catch((err) =>
    chat.notice(`Could not start a session: ${err instanceof Error ? err.message : err}`),
  );
}

void boot();
