// Cumulative-mass highlight rule: the smallest set of highest-scoring
// tokens whose scores reach the cutoff share of total mass. Ties fall to
// the earlier position. This is the only score arithmetic the UI does;
// every displayed number comes verbatim from the service.

export function cutoffSet(scores: number[], cutoff: number): Set<number> {
  if (!(cutoff > 0 && cutoff <= 1)) {
    throw new RangeError(`cutoff must be in (0, 1], got ${cutoff}`);
  }
  const total = scores.reduce((a, b) => a + b, 0);
  if (total <= 0) {
    return new Set(scores.map((_, i) => i));
  }
  const order = scores
    .map((score, index) => ({ score, index }))
    .sort((a, b) => b.score - a.score || a.index - b.index);
  const selected = new Set<number>();
  let mass = 0;
  const target = cutoff * total;
  const epsilon = 1e-12 * total;
  for (const { score, index } of order) {
    if (score <= 0) break; // zero-score tokens never highlight
    selected.add(index);
    mass += score;
    if (mass >= target - epsilon) break;
  }
  return selected;
}

/** Highlight intensity in [0, 1], proportional to score. */
export function intensity(score: number, scores: number[]): number {
  const top = Math.max(...scores);
  if (top <= 0) return 0;
  return Math.max(0, Math.min(1, score / top));
}
