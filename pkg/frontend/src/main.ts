// DOM wiring: one event-driven loop over an immutable-ish ViewState.

import { ApiClient } from "./api.js";
import {
  initialState,
  selectLabel,
  toggleMode,
  withCutoff,
  withError,
  withExemplars,
  withPrediction,
  type ViewState,
} from "./state.js";
import {
  renderErrorBanner,
  renderExemplarPanels,
  renderPrediction,
} from "./render.js";

const params = new URLSearchParams(window.location.search);
const client = new ApiClient(params.get("service") ?? "http://127.0.0.1:8000");

let state: ViewState = initialState();

const el = (id: string) => document.getElementById(id)!;

function render(): void {
  el("banner").innerHTML = renderErrorBanner(state.error);
  if (state.prediction) {
    const { list, highlights } = renderPrediction(
      state.prediction,
      state.selectedLabel,
      state.cutoff,
    );
    el("ranked").innerHTML = list;
    el("highlights").innerHTML = highlights;
  } else {
    el("ranked").innerHTML = "";
    el("highlights").innerHTML = "";
  }
  const panel = state.exemplars;
  el("mode-toggle").textContent = panel.mode;
  el("exemplars").innerHTML = panel.response
    ? renderExemplarPanels(panel.response.exemplars, panel.mode)
    : "";
}

async function submitNote(): Promise<void> {
  const draft = (el("note") as HTMLTextAreaElement).value;
  state = { ...state, draft };
  if (!draft.trim()) {
    state = withError(state, "Enter a note first.");
    render();
    return;
  }
  try {
    const prediction = await client.predict(draft, state.topK);
    state = withPrediction(state, prediction);
    await fetchExemplars();
  } catch (err) {
    if ((err as Error).name !== "AbortError") {
      state = withError(state, `Service error: ${(err as Error).message}`);
    }
  }
  render();
}

async function fetchExemplars(): Promise<void> {
  if (!state.selectedLabel) return;
  try {
    const response = await client.prototypes(
      state.selectedLabel,
      state.exemplars.k,
      state.exemplars.mode,
    );
    state = withExemplars(state, response);
  } catch (err) {
    if ((err as Error).name !== "AbortError") {
      state = withError(state, `Prototype lookup failed: ${(err as Error).message}`);
    }
  }
}

function wire(): void {
  el("submit").addEventListener("click", () => void submitNote());
  el("ranked").addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>("[data-label]");
    if (!row || !state.prediction) return;
    // selecting a label re-renders highlights from the cached prediction;
    // only the exemplar panel refetches
    state = selectLabel(state, row.dataset.label!);
    render();
    void fetchExemplars().then(render);
  });
  el("mode-toggle").addEventListener("click", () => {
    state = toggleMode(state);
    render();
    void fetchExemplars().then(render);
  });
  el("cutoff").addEventListener("input", (event) => {
    const value = Number((event.target as HTMLInputElement).value);
    state = withCutoff(state, value);
    render();
  });
  document.body.addEventListener("click", (event) => {
    if ((event.target as HTMLElement).dataset.action === "retry") {
      void submitNote();
    }
  });
}

wire();
render();
