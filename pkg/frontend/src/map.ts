// Minimal SVG map layer: local equirectangular projection around a center,
// markers with click handling, centering. No tile provider; the contract is
// marker placement and click-to-center behavior.

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Marker {
  id: string;
  lat: number;
  lon: number;
  label: string;
  kind: "poi" | "pin" | "result";
  onClick?: (marker: Marker) => void;
}

export class MapView {
  readonly svg: SVGSVGElement;
  private centerLat: number;
  private centerLon: number;
  private metersPerPx: number;
  private markers: Marker[] = [];
  private readonly width: number;
  private readonly height: number;

  constructor(
    container: HTMLElement,
    centerLat: number,
    centerLon: number,
    opts: { width?: number; height?: number; metersPerPx?: number } = {},
  ) {
    this.centerLat = centerLat;
    this.centerLon = centerLon;
    this.width = opts.width ?? 640;
    this.height = opts.height ?? 480;
    this.metersPerPx = opts.metersPerPx ?? 6;
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute("class", "map-canvas");
    container.appendChild(this.svg);
    this.render();
  }

  get center(): { lat: number; lon: number } {
    return { lat: this.centerLat, lon: this.centerLon };
  }

  setCenter(lat: number, lon: number): void {
    this.centerLat = lat;
    this.centerLon = lon;
    this.render();
  }

  setMarkers(markers: Marker[]): void {
    this.markers = [...markers];
    this.render();
  }

  project(lat: number, lon: number): { x: number; y: number } {
    const mPerDegLat = (Math.PI * 6_371_000) / 180;
    const mPerDegLon = mPerDegLat * Math.cos((this.centerLat * Math.PI) / 180);
    const dx = (lon - this.centerLon) * mPerDegLon;
    const dy = (lat - this.centerLat) * mPerDegLat;
    return {
      x: this.width / 2 + dx / this.metersPerPx,
      y: this.height / 2 - dy / this.metersPerPx,
    };
  }

  private render(): void {
    this.svg.replaceChildren();
    const grid = document.createElementNS(SVG_NS, "g");
    grid.setAttribute("class", "map-grid");
    const step = 80;
    for (let x = step; x < this.width; x += step) {
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(x));
      line.setAttribute("x2", String(x));
      line.setAttribute("y1", "0");
      line.setAttribute("y2", String(this.height));
      grid.appendChild(line);
    }
    for (let y = step; y < this.height; y += step) {
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", "0");
      line.setAttribute("x2", String(this.width));
      line.setAttribute("y1", String(y));
      line.setAttribute("y2", String(y));
      grid.appendChild(line);
    }
    this.svg.appendChild(grid);

    for (const marker of this.markers) {
      const { x, y } = this.project(marker.lat, marker.lon);
      if (x < -20 || x > this.width + 20 || y < -20 || y > this.height + 20) continue;
      const g = document.createElementNS(SVG_NS, "g");
      g.setAttribute("class", `marker marker-${marker.kind}`);
      g.setAttribute("data-id", marker.id);
      g.setAttribute("transform", `translate(${x.toFixed(1)}, ${y.toFixed(1)})`);
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("r", marker.kind === "poi" ? "4" : "7");
      g.appendChild(dot);
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = marker.label;
      g.appendChild(title);
      if (marker.kind !== "poi") {
        const text = document.createElementNS(SVG_NS, "text");
        text.setAttribute("x", "10");
        text.setAttribute("y", "4");
        text.textContent = marker.label;
        g.appendChild(text);
      }
      if (marker.onClick) {
        g.addEventListener("click", () => marker.onClick?.(marker));
      }
      this.svg.appendChild(g);
    }
  }
}
