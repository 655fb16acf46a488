import type { StatePayload, StepDelta } from "./types.js";

export interface SeriesPoint {
  step: number;
  value: number;
}

export interface HistoryRow {
  step: number;
  x: number;
  u_r: number;
  u_b: number;
  u_implemented: number;
  reward: number;
  x_next: number;
  observation: string;
  theta_hat: number;
}

export interface SessionView {
  session: StatePayload | null;
  /** Server-issued decimal text; displayed verbatim so the UI can never show
   * an adherence estimate differing from the server's value. */
  thetaText: string;
  thetaSeries: SeriesPoint[];
  rewardSeries: SeriesPoint[];
  valueSeries: SeriesPoint[];
  submitting: boolean;
  connected: boolean;
  lastObservation: string | null;
  error: string | null;
}

export function parseHistoryCsv(text: string): HistoryRow[] {
  const lines = text.trim().split("\n");
  const rows: HistoryRow[] = [];
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const parts = line.split(",");
    rows.push({
      step: Number(parts[0]),
      x: Number(parts[1]),
      u_r: Number(parts[2]),
      u_b: Number(parts[3]),
      u_implemented: Number(parts[4]),
      reward: Number(parts[5]),
      x_next: Number(parts[6]),
      observation: parts[7],
      theta_hat: Number(parts[8]),
    });
  }
  return rows;
}

type Listener = (view: SessionView) => void;

/** Client-side session state: append-only chart series, the server's exact
 * adherence text, and the double-submit guard. */
export class SessionStore {
  private view: SessionView = {
    session: null,
    thetaText: "",
    thetaSeries: [],
    rewardSeries: [],
    valueSeries: [],
    submitting: false,
    connected: false,
    lastObservation: null,
    error: null,
  };
  private listeners = new Set<Listener>();

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  getView(): SessionView {
    return this.view;
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.view);
  }

  applyCreate(state: StatePayload): void {
    this.view = {
      ...this.view,
      session: state,
      thetaText: state.theta_hat_text,
      thetaSeries: [],
      rewardSeries: [],
      valueSeries: [],
      lastObservation: null,
      error: null,
    };
    this.emit();
  }

  /** Fold one resolved round in. Deltas arrive both as the act response and
   * as a stream broadcast; the step index keeps the fold idempotent. */
  applyDelta(delta: StepDelta): void {
    const expected = this.view.thetaSeries.length;
    if (delta.step < expected) return;
    this.view = {
      ...this.view,
      session: delta.state,
      thetaText: delta.theta_hat_text,
      thetaSeries: [...this.view.thetaSeries, { step: delta.step, value: delta.theta_hat }],
      rewardSeries: [...this.view.rewardSeries, { step: delta.step, value: delta.reward }],
      valueSeries: [
        ...this.view.valueSeries,
        { step: delta.step, value: delta.state.initial_state_value },
      ],
      lastObservation: delta.observation,
      error: null,
    };
    this.emit();
  }

  /** Rebuild from a state snapshot plus the history CSV (reconnect or page
   * refresh). The tracked-value series is not part of the history document,
   * so past points resume from the current value. */
  resync(state: StatePayload, historyCsv?: string): void {
    const rows = historyCsv ? parseHistoryCsv(historyCsv) : [];
    this.view = {
      ...this.view,
      session: state,
      thetaText: state.theta_hat_text,
      thetaSeries: rows.map((row) => ({ step: row.step, value: row.theta_hat })),
      rewardSeries: rows.map((row) => ({ step: row.step, value: row.reward })),
      valueSeries: rows.map((row) => ({
        step: row.step,
        value: state.initial_state_value,
      })),
      error: null,
    };
    this.emit();
  }

  /** Returns false when a submission is already in flight. */
  beginSubmit(): boolean {
    if (this.view.submitting) return false;
    this.view = { ...this.view, submitting: true };
    this.emit();
    return true;
  }

  endSubmit(error?: string): void {
    this.view = { ...this.view, submitting: false, error: error ?? null };
    this.emit();
  }

  setConnected(connected: boolean): void {
    if (this.view.connected === connected) return;
    this.view = { ...this.view, connected };
    this.emit();
  }
}
