// Payloads shaped exactly like the inference service's responses.

import type { PredictResponse, PrototypesResponse } from "../src/api.js";

export const PREDICTION: PredictResponse = {
  labels: [
    {
      label: "L000",
      probability: 0.4612,
      distance: 0.1554,
      token_scores: [0.05, 0.4, 0.05, 0.3, 0.1, 0.1],
    },
    {
      label: "L002",
      probability: 0.3101,
      distance: 0.7995,
      token_scores: [0.3, 0.1, 0.2, 0.2, 0.1, 0.1],
    },
    {
      label: "L001",
      probability: 0.0712,
      distance: 2.5679,
      token_scores: [1 / 6, 1 / 6, 1 / 6, 1 / 6, 1 / 6, 1 / 6],
    },
  ],
  tokens: ["fever", "ind0001", "cough", "ind0002", "nse0001", "nse0002"],
};

export const TYPICAL: PrototypesResponse = {
  label: "L000",
  mode: "typical",
  exemplars: [
    {
      doc_id: "d00003",
      distance: 0.0483,
      top_spans: [[0, 2], [4, 5]],
      tokens: ["ind0001", "ind0002", "nse0003", "nse0004", "ind0003", "nse0005"],
    },
    {
      doc_id: "d00028",
      distance: 0.049,
      top_spans: [[3, 6]],
      tokens: ["nse0001", "nse0002", "nse0003", "ind0001", "ind0002", "ind0003"],
    },
  ],
};

export const ATYPICAL: PrototypesResponse = {
  label: "L000",
  mode: "atypical",
  exemplars: [
    {
      doc_id: "d00017",
      distance: 3.41,
      top_spans: [[1, 2]],
      tokens: ["nse0009", "ind0001", "nse0010"],
    },
  ],
};
