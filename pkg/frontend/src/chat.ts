// Chat panel: transcript, state badge, input. One request in flight at a
// time (input disabled while waiting, mirroring the server's 409 guard);
// transport and API errors become inline system notices, never lost.

import { ApiClient, ApiError, type MatchResultWire } from "./api.js";
import type { Store } from "./state.js";

export interface ChatCallbacks {
  onResults?: (results: MatchResultWire[]) => void;
}

export class ChatPanel {
  readonly input: HTMLInputElement;
  readonly sendButton: HTMLButtonElement;
  readonly transcriptEl: HTMLElement;
  readonly stateBadge: HTMLElement;
  private inFlight = false;

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly store: Store,
    private readonly callbacks: ChatCallbacks = {},
  ) {
    this.transcriptEl = document.createElement("div");
    this.transcriptEl.className = "transcript";
    this.stateBadge = document.createElement("span");
    this.stateBadge.className = "state-badge";
    this.stateBadge.textContent = "greet";
    const form = document.createElement("form");
    form.className = "chat-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Describe the places you're looking for…";
    this.sendButton = document.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.textContent = "Send";
    form.append(this.input, this.sendButton);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.send(this.input.value);
    });
    const header = document.createElement("div");
    header.className = "chat-header";
    header.append("State: ", this.stateBadge);
    root.append(header, this.transcriptEl, form);
    this.store.subscribe(() => this.renderTranscript());
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async ensureSession(): Promise<string> {
    const existing = this.store.get().sessionId;
    if (existing) return existing;
    const created = await this.api.createSession();
    this.store.setSession(created.session_id, created.state);
    this.store.appendTurn({ role: "assistant", text: created.greeting });
    this.stateBadge.textContent = created.state;
    return created.session_id;
  }

  async send(text: string): Promise<boolean> {
    const trimmed = text.trim();
    if (!trimmed) {
      this.input.classList.add("invalid");
      return false;
    }
    if (this.inFlight) return false;
    this.input.classList.remove("invalid");
    this.setBusy(true);
    try {
      const sessionId = await this.ensureSession();
      this.store.appendTurn({ role: "user", text: trimmed });
      this.input.value = "";
      const resp = await this.api.sendMessage(sessionId, trimmed);
      this.store.appendTurn({ role: "assistant", text: resp.reply });
      this.store.setChatState(resp.state);
      this.stateBadge.textContent = resp.state;
      if (resp.results) {
        this.callbacks.onResults?.(resp.results);
      }
      return true;
    } catch (err) {
      this.notice(this.describeError(err));
      return false;
    } finally {
      this.setBusy(false);
    }
  }

  private describeError(err: unknown): string {
    if (err instanceof ApiError) {
      if (err.status === 409) {
        return "Still working on the previous message; it will finish shortly.";
      }
      return `The server reported a problem (${err.code}): ${err.message}`;
    }
    return `Could not reach the server: ${err instanceof Error ? err.message : String(err)}`;
  }

  notice(text: string): void {
    this.store.appendTurn({ role: "system", text });
  }

  private setBusy(busy: boolean): void {
    this.inFlight = busy;
    this.input.disabled = busy;
    this.sendButton.disabled = busy;
  }

  private renderTranscript(): void {
    this.transcriptEl.replaceChildren();
    for (const turn of this.store.get().transcript) {
      const bubble = document.createElement("div");
      bubble.className = `turn turn-${turn.role}`;
      bubble.textContent = turn.text;
      this.transcriptEl.appendChild(bubble);
    }
    this.transcriptEl.scrollTop = this.transcriptEl.scrollHeight;
  }
}
