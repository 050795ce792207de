/** Upload flow state machine, kept free of DOM so it is directly testable.
 *
 * One prediction is in flight at a time; while it runs the upload control
 * is disabled. Reset aborts any in-flight request and returns to idle.
 */

import { Poster, PredictionResponse } from "./api.js";
import { messageForCode } from "./errors.js";
import { FileLike, validateFile } from "./validate.js";

export type Phase = "idle" | "ready" | "loading" | "done" | "error";

export interface ControllerState {
  phase: Phase;
  fileName: string | null;
  previewUrl: string | null;
  result: PredictionResponse | null;
  errorMessage: string | null;
}

const INITIAL: ControllerState = {
  phase: "idle",
  fileName: null,
  previewUrl: null,
  result: null,
  errorMessage: null,
};

export type PreviewMaker = (file: Blob) => string | null;
export type PreviewDisposer = (url: string) => void;

export class UploadController {
  private state: ControllerState = { ...INITIAL };
  private file: (Blob & FileLike) | null = null;
  private abort: AbortController | null = null;

  constructor(
    private readonly poster: Poster,
    private readonly onChange: (state: ControllerState) => void,
    private readonly makePreview: PreviewMaker = () => null,
    private readonly disposePreview: PreviewDisposer = () => undefined,
  ) {}

  get snapshot(): ControllerState {
    return { ...this.state };
  }

  /** The upload control is usable only when nothing is in flight. */
  get uploadEnabled(): boolean {
    return this.state.phase !== "loading";
  }

  get canSubmit(): boolean {
    return this.file !== null && this.state.phase !== "loading";
  }

  selectFile(file: Blob & FileLike): void {
    if (!this.uploadEnabled) {
      return;
    }
    const check = validateFile(file);
    if (!check.ok) {
      // invalid selections never produce a request
      this.file = null;
      this.set({ ...INITIAL, phase: "error", errorMessage: check.message ?? null });
      return;
    }
    this.clearPreview();
    this.file = file;
    this.set({
      ...INITIAL,
      phase: "ready",
      fileName: file.name,
      previewUrl: this.makePreview(file),
    });
  }

  async submit(): Promise<void> {
    if (!this.canSubmit || this.file === null) {
      return;
    }
    const inflight = new AbortController();
    this.abort = inflight;
    this.set({ ...this.state, phase: "loading", result: null, errorMessage: null });
    let outcome;
    try {
      outcome = await this.poster(this.file, inflight.signal);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") {
        return; // reset already restored the state
      }
      if (inflight.signal.aborted) {
        return;
      }
      this.set({ ...this.state, phase: "error", errorMessage: messageForCode(undefined) });
      return;
    } finally {
      if (this.abort === inflight) {
        this.abort = null;
      }
    }
    if (inflight.signal.aborted) {
      return; // a reset won the race against the response
    }
    if (outcome.ok) {
      this.set({ ...this.state, phase: "done", result: outcome.data, errorMessage: null });
    } else {
      this.set({
        ...this.state,
        phase: "error",
        result: null,
        errorMessage: messageForCode(outcome.code),
      });
    }
  }

  /** Clear file, preview, and result; abort any in-flight request. */
  reset(): void {
    if (this.abort !== null) {
      this.abort.abort();
      this.abort = null;
    }
    this.clearPreview();
    this.file = null;
    this.set({ ...INITIAL });
  }

  private clearPreview(): void {
    if (this.state.previewUrl !== null) {
      this.disposePreview(this.state.previewUrl);
    }
  }

  private set(state: ControllerState): void {
    this.state = state;
    this.onChange(this.snapshot);
  }
}
