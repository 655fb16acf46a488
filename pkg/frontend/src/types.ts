// Wire types mirroring the session service payloads.

export interface EnvInfo {
  name: string;
  n_states: number;
  n_actions: number;
  state_labels: string[];
  action_labels: string[];
  x0: number;
}

export interface StatePayload {
  id: string;
  env: EnvInfo;
  x: number;
  state_label: string;
  u_r: number;
  u_b: number;
  theta_hat: number;
  theta_hat_text: string;
  n: number;
  q_row: number[];
  admissible: number[];
  step: number;
  initial_state_value: number;
  reward_history: number[];
  pending: boolean;
  unconstrained_hdm: boolean;
}

export interface DeltaQ {
  x: number;
  u: number;
  before: number;
  after: number;
}

export interface StepDelta {
  step: number;
  x: number;
  u_r: number;
  u_b: number;
  u_implemented: number;
  reward: number;
  x_next: number;
  observation: "adhered" | "deviated" | "uninformative";
  theta_hat: number;
  theta_hat_text: string;
  n: number;
  delta_q: DeltaQ;
  state: StatePayload;
}

export interface CreateResponse {
  id: string;
  state: StatePayload;
}

export type Choice = "adhere" | "baseline";

export interface ActRequest {
  step: number;
  choice?: Choice;
  action?: number;
}

export type StreamMessage =
  | ({ type: "state" } & StatePayload)
  | ({ type: "step" } & StepDelta);
