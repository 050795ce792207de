/** Pure projection from controller state to what the page displays.
 * Every number shown is derived from a field of the last service response.
 */

import { ControllerState } from "./controller.js";
import { formatPercent, formatRawScore } from "./format.js";

export interface PredictionView {
  showResult: boolean;
  label: string;
  percentText: string;
  rawScoreText: string;
  modelVersion: string;
  alert: boolean; // positive-class styling hint, presentational only
  fileName: string;
  previewUrl: string | null;
  errorMessage: string | null;
  busy: boolean;
  uploadDisabled: boolean;
  submitDisabled: boolean;
}

export function viewModel(state: ControllerState): PredictionView {
  const result = state.result;
  return {
    showResult: state.phase === "done" && result !== null,
    label: result ? result.label : "",
    percentText: result ? formatPercent(result.probability) : "",
    rawScoreText: result ? formatRawScore(result.raw_score) : "",
    modelVersion: result ? result.model_version : "",
    alert: result !== null && result.label === "PNEUMONIA",
    fileName: state.fileName ?? "",
    previewUrl: state.previewUrl,
    errorMessage: state.phase === "error" ? state.errorMessage : null,
    busy: state.phase === "loading",
    uploadDisabled: state.phase === "loading",
    submitDisabled: state.phase === "loading" || state.fileName === null,
  };
}
