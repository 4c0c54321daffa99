// Thin typed client over the server's JSON endpoints. Field names here are
// the wire contract; do not rename.

export interface PoiWire {
  id: string;
  name: string;
  category: string;
  lat: number;
  lon: number;
}

export interface ExampleWire {
  kind: "named" | "category_only";
  name: string | null;
  category: string;
  anchor_distance_m: number | null;
}

export interface CircleWire {
  center: { lat: number; lon: number };
  radius_m: number;
}

export interface QueryWire {
  examples: ExampleWire[];
  area: CircleWire | { name: string } | null;
  k: number;
  eps_m: number;
}

export interface MatchResultWire {
  assignment: PoiWire[];
  score_m: number;
  similarity: number;
}

export interface SessionCreated {
  session_id: string;
  state: string;
  greeting: string;
}

export interface MessageResponse {
  reply: string;
  state: string;
  draft: QueryWire;
  results?: MatchResultWire[];
}

export interface SearchResponse {
  results: MatchResultWire[];
  cache_hit: boolean;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${base}${path}`, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    const err = body as ApiErrorBody | null;
    throw new ApiError(
      resp.status,
      err?.error?.code ?? "UNKNOWN",
      err?.error?.message ?? `request failed with status ${resp.status}`,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string) {}

  createSession(): Promise<SessionCreated> {
    return request(this.base, "/api/sessions", { method: "POST" });
  }

  sendMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return request(this.base, `/api/sessions/${sessionId}/messages`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  getSession(sessionId: string): Promise<{
    session_id: string;
    state: string;
    history: { role: string; text: string; ts: number }[];
    draft: QueryWire;
    results: MatchResultWire[] | null;
  }> {
    return request(this.base, `/api/sessions/${sessionId}`);
  }

  search(query: QueryWire): Promise<SearchResponse> {
    return request(this.base, "/api/search", {
      method: "POST",
      body: JSON.stringify(query),
    });
  }

  pois(lat: number, lon: number, radiusM: number, category?: string): Promise<{ pois: PoiWire[] }> {
    const params = new URLSearchParams({
      lat: String(lat),
      lon: String(lon),
      radius_m: String(radiusM),
    });
    if (category) params.set("category", category);
    return request(this.base, `/api/pois?${params.toString()}`);
  }

  geocode(name: string): Promise<CircleWire & { matched: string; note?: string }> {
    return request(this.base, "/api/geocode", {
      method: "POST",
      body: JSON.stringify({ name }),
    });
  }
}
