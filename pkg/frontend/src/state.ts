// Single source of truth for the view. Pure update functions keep every
// render reproducible from (service responses, state) alone.

import type { PredictResponse, PrototypesResponse } from "./api.js";

export type ExemplarPanel = {
  mode: "typical" | "atypical";
  k: number;
  response: PrototypesResponse | null;
};

export type ViewState = {
  draft: string;
  topK: number;
  prediction: PredictResponse | null;
  selectedLabel: string | null;
  cutoff: number; // share of attention mass to highlight, in (0, 1]
  exemplars: ExemplarPanel;
  error: string | null;
};

export function initialState(): ViewState {
  return {
    draft: "",
    topK: 5,
    prediction: null,
    selectedLabel: null,
    cutoff: 0.5,
    exemplars: { mode: "typical", k: 3, response: null },
    error: null,
  };
}

export function withPrediction(state: ViewState, prediction: PredictResponse): ViewState {
  const first = prediction.labels[0]?.label ?? null;
  return {
    ...state,
    prediction,
    error: null,
    selectedLabel: first,
    exemplars: { ...state.exemplars, response: null },
  };
}

export function withError(state: ViewState, message: string): ViewState {
  // the draft and any previous prediction survive a failed request
  return { ...state, error: message };
}

export function selectLabel(state: ViewState, label: string): ViewState {
  const known = state.prediction?.labels.some((entry) => entry.label === label) ?? false;
  if (!known) {
    throw new Error(`label ${label} is not among the returned labels`);
  }
  return {
    ...state,
    selectedLabel: label,
    exemplars: { ...state.exemplars, response: null },
  };
}

export function withCutoff(state: ViewState, cutoff: number): ViewState {
  if (!(cutoff > 0 && cutoff <= 1)) {
    throw new RangeError(`cutoff must be in (0, 1], got ${cutoff}`);
  }
  return { ...state, cutoff };
}

export function withExemplars(state: ViewState, response: PrototypesResponse): ViewState {
  return { ...state, exemplars: { ...state.exemplars, response } };
}

export function toggleMode(state: ViewState): ViewState {
  const mode = state.exemplars.mode === "typical" ? "atypical" : "typical";
  return { ...state, exemplars: { mode, k: state.exemplars.k, response: null } };
}

export function selectedScores(state: ViewState): number[] | null {
  if (!state.prediction || !state.selectedLabel) return null;
  const entry = state.prediction.labels.find((e) => e.label === state.selectedLabel);
  return entry ? entry.token_scores : null;
}
