// Pure HTML-string renderers. No DOM access here so the exact rendering
// logic is testable in Node.

import type { Exemplar, LabelScore, PredictResponse } from "./api.js";
import { cutoffSet, intensity } from "./highlight.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderRankedList(labels: LabelScore[], selected: string | null): string {
  const rows = labels.map((entry) => {
    const width = (entry.probability * 100).toFixed(1);
    const cls = entry.label === selected ? "label-row selected" : "label-row";
    return (
      `<li class="${cls}" data-label="${escapeHtml(entry.label)}">` +
      `<span class="label-name">${escapeHtml(entry.label)}</span>` +
      `<span class="bar"><span class="bar-fill" style="width:${width}%"></span></span>` +
      `<span class="prob">${entry.probability.toFixed(4)}</span>` +
      `<span class="dist">d=${entry.distance.toFixed(3)}</span>` +
      `</li>`
    );
  });
  return `<ul class="ranked">${rows.join("")}</ul>`;
}

export function renderHighlights(
  tokens: string[],
  scores: number[],
  cutoff: number,
): string {
  const chosen = cutoffSet(scores, cutoff);
  const parts = tokens.map((token, i) => {
    if (!chosen.has(i)) {
      return `<span class="tok">${escapeHtml(token)}</span>`;
    }
    const alpha = intensity(scores[i], scores);
    return (
      `<span class="tok hl" data-pos="${i}" style="background:rgba(255,165,0,${alpha.toFixed(3)})">` +
      `${escapeHtml(token)}</span>`
    );
  });
  return `<p class="note">${parts.join(" ")}</p>`;
}

export function renderExemplarPanels(exemplars: Exemplar[], mode: string): string {
  if (exemplars.length === 0) {
    return `<p class="placeholder">No ${escapeHtml(mode)} patients available for this diagnosis.</p>`;
  }
  const panels = exemplars.map((ex) => {
    const spans = ex.top_spans
      .map(([a, b]) => escapeHtml(ex.tokens.slice(a, b).join(" ")))
      .join(" &hellip; ");
    return (
      `<div class="exemplar-panel" data-doc="${escapeHtml(ex.doc_id)}">` +
      `<div class="exemplar-head">${escapeHtml(ex.doc_id)}` +
      `<span class="dist" data-distance="${ex.distance}">d=${ex.distance.toFixed(3)}</span></div>` +
      `<div class="exemplar-spans">${spans}</div>` +
      `</div>`
    );
  });
  return `<div class="exemplars">${panels.join("")}</div>`;
}

export function renderErrorBanner(message: string | null): string {
  if (!message) return "";
  return `<div class="banner error">${escapeHtml(message)} <button data-action="retry">Retry</button></div>`;
}

export function renderPrediction(
  prediction: PredictResponse,
  selected: string | null,
  cutoff: number,
): { list: string; highlights: string } {
  const list = renderRankedList(prediction.labels, selected);
  const entry = prediction.labels.find((e) => e.label === selected);
  const highlights = entry
    ? renderHighlights(prediction.tokens, entry.token_scores, cutoff)
    : "";
  return { list, highlights };
}
