// UI state shared by both modes. Pin order is slot order; switching modes
// never touches the pins, so map -> chat -> map is lossless.

import type { MatchResultWire } from "./api.js";

export type Mode = "map" | "chat";

export interface Pin {
  id: string;
  name: string;
  category: string;
  lat: number;
  lon: number;
}

export interface Turn {
  role: "user" | "assistant" | "system";
  text: string;
}

export interface UiState {
  mode: Mode;
  pins: Pin[];
  sessionId: string | null;
  chatState: string;
  transcript: Turn[];
  results: MatchResultWire[];
  selectedResult: number | null;
}

type Listener = (state: UiState) => void;

export class Store {
  private state: UiState = {
    mode: "map",
    pins: [],
    sessionId: null,
    chatState: "greet",
    transcript: [],
    results: [],
    selectedResult: null,
  };
  private listeners: Listener[] = [];

  get(): UiState {
    return this.state;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  setMode(mode: Mode): void {
    this.state = { ...this.state, mode };
    this.emit();
  }

  addPin(pin: Pin): boolean {
    if (this.state.pins.some((p) => p.id === pin.id)) return false;
    this.state = { ...this.state, pins: [...this.state.pins, pin] };
    this.emit();
    return true;
  }

  removePin(id: string): void {
    this.state = { ...this.state, pins: this.state.pins.filter((p) => p.id !== id) };
    this.emit();
  }

  clearPins(): void {
    this.state = { ...this.state, pins: [] };
    this.emit();
  }

  setSession(sessionId: string, chatState: string): void {
    this.state = { ...this.state, sessionId, chatState };
    this.emit();
  }

  setChatState(chatState: string): void {
    this.state = { ...this.state, chatState };
    this.emit();
  }

  appendTurn(turn: Turn): void {
    this.state = { ...this.state, transcript: [...this.state.transcript, turn] };
    this.emit();
  }

  // results stay exactly in API order; rank = position
  setResults(results: MatchResultWire[]): void {
    this.state = { ...this.state, results: [...results], selectedResult: null };
    this.emit();
  }

  selectResult(index: number | null): void {
    this.state = { ...this.state, selectedResult: index };
    this.emit();
  }
}
