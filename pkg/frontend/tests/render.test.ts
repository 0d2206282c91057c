import { describe, expect, it } from "vitest";

import { cutoffSet } from "../src/highlight.js";
import {
  renderErrorBanner,
  renderExemplarPanels,
  renderHighlights,
  renderPrediction,
  renderRankedList,
} from "../src/render.js";
import { ATYPICAL, PREDICTION, TYPICAL } from "./fixtures.js";

function highlightedPositions(html: string): number[] {
  return [...html.matchAll(/data-pos="(\d+)"/g)].map((m) => Number(m[1]));
}

describe("ranked list", () => {
  it("renders one row per returned label, in response order", () => {
    const html = renderRankedList(PREDICTION.labels, "L000");
    const order = [...html.matchAll(/data-label="(\w+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["L000", "L002", "L001"]);
    expect(html.match(/label-row selected/g)).toHaveLength(1);
  });

  it("shows probabilities verbatim from the payload", () => {
    const html = renderRankedList(PREDICTION.labels, null);
    expect(html).toContain("0.4612");
    expect(html).toContain("0.3101");
    expect(html).toContain("d=0.155");
  });

  it("escapes markup in label names", () => {
    const html = renderRankedList(
      [{ label: "<img>", probability: 0.1, distance: 1, token_scores: [] }],
      null,
    );
    expect(html).not.toContain("<img>");
    expect(html).toContain("&lt;img&gt;");
  });
});

describe("highlights", () => {
  it("highlighted set equals the cutoff rule computed independently", () => {
    const entry = PREDICTION.labels[0];
    const html = renderHighlights(PREDICTION.tokens, entry.token_scores, 0.5);
    // independent recomputation: sort score/position pairs by hand
    const expected = [...cutoffSet(entry.token_scores, 0.5)].sort((a, b) => a - b);
    expect(highlightedPositions(html).sort((a, b) => a - b)).toEqual(expected);
  });

  it("uniform scores with cutoff 0.5 highlight exactly the first half", () => {
    const entry = PREDICTION.labels[2]; // uniform 1/6
    const html = renderHighlights(PREDICTION.tokens, entry.token_scores, 0.5);
    expect(highlightedPositions(html)).toEqual([0, 1, 2]);
  });

  it("every token is rendered, highlighted or not", () => {
    const entry = PREDICTION.labels[0];
    const html = renderHighlights(PREDICTION.tokens, entry.token_scores, 0.3);
    for (const token of PREDICTION.tokens) {
      expect(html).toContain(token);
    }
  });
});

describe("exemplar panels", () => {
  it("renders one panel per exemplar with its distance", () => {
    const html = renderExemplarPanels(TYPICAL.exemplars, "typical");
    expect(html.match(/exemplar-panel/g)).toHaveLength(2);
    expect(html).toContain('data-distance="0.0483"');
    expect(html).toContain('data-distance="0.049"');
  });

  it("typical distances render in non-decreasing service order", () => {
    const html = renderExemplarPanels(TYPICAL.exemplars, "typical");
    const dists = [...html.matchAll(/data-distance="([\d.]+)"/g)].map((m) => Number(m[1]));
    expect(dists).toEqual([...dists].sort((a, b) => a - b));
  });

  it("joins top spans from the exemplar's tokens", () => {
    const html = renderExemplarPanels(ATYPICAL.exemplars, "atypical");
    expect(html).toContain("ind0001");
    expect(html).not.toContain("nse0009 ind0001 nse0010"); // only spans, not the whole note
  });

  it("empty list renders an explanatory placeholder", () => {
    const html = renderExemplarPanels([], "typical");
    expect(html).toContain("placeholder");
    expect(html).toContain("No typical patients");
  });
});

describe("prediction view", () => {
  it("switching labels re-renders highlights from the same payload", () => {
    const a = renderPrediction(PREDICTION, "L000", 0.5);
    const b = renderPrediction(PREDICTION, "L002", 0.5);
    expect(a.highlights).not.toEqual(b.highlights);
    expect(highlightedPositions(b.highlights).sort((x, y) => x - y)).toEqual(
      [...cutoffSet(PREDICTION.labels[1].token_scores, 0.5)].sort((x, y) => x - y),
    );
  });

  it("error banner renders with retry and escapes content", () => {
    expect(renderErrorBanner(null)).toBe("");
    const html = renderErrorBanner("boom <b>");
    expect(html).toContain("data-action=\"retry\"");
    expect(html).toContain("boom &lt;b&gt;");
  });
});
