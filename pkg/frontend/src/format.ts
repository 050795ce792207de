/** Percentage rendering for prediction confidences. */

/**
 * probability (0..1) -> "97.0%" style string: x100, one decimal, half-up.
 */
export function formatPercent(probability: number): string {
  const tenths = Math.round(probability * 1000) / 10;
  return tenths.toFixed(1) + "%";
}

/** Raw sigmoid score shown as a secondary detail, 4 decimals. */
export function formatRawScore(rawScore: number): string {
  return rawScore.toFixed(4);
}
