// Ranked result list. Order is exactly the API response order (rank =
// similarity order decided server-side); clicking an entry centers the map on
// its slot-1 place and expands the details.

import type { MatchResultWire } from "./api.js";

export interface ResultCallbacks {
  onSelect: (result: MatchResultWire, index: number) => void;
}

export function renderResults(
  container: HTMLElement,
  results: MatchResultWire[],
  callbacks: ResultCallbacks,
): void {
  container.replaceChildren();
  if (results.length === 0) {
    const empty = document.createElement("div");
    empty.className = "no-match";
    empty.textContent = "No matching location sets in this area. Adjust the examples or widen the area.";
    container.appendChild(empty);
    return;
  }
  const list = document.createElement("ol");
  list.className = "result-list";
  results.forEach((result, index) => {
    const item = document.createElement("li");
    item.className = "result";
    item.dataset.index = String(index);

    const head = document.createElement("div");
    head.className = "result-head";
    const names = result.assignment.map((p) => p.name).join(" + ");
    const pct = (result.similarity * 100).toFixed(1);
    head.textContent = `${names} — similarity ${pct}%`;
    item.appendChild(head);

    const details = document.createElement("ul");
    details.className = "result-details hidden";
    result.assignment.forEach((poi, slot) => {
      const row = document.createElement("li");
      row.textContent = `${slot + 1}. ${poi.name} (${poi.category})`;
      details.appendChild(row);
    });
    item.appendChild(details);

    item.addEventListener("click", () => {
      for (const other of list.querySelectorAll(".result-details")) {
        other.classList.add("hidden");
      }
      details.classList.remove("hidden");
      for (const other of list.querySelectorAll(".result.selected")) {
        other.classList.remove("selected");
      }
      item.classList.add("selected");
      callbacks.onSelect(result, index);
    });
    list.appendChild(item);
  });
  container.appendChild(list);
}
