/** Typed client for the inference endpoint. */

export interface PredictionResponse {
  label: "NORMAL" | "PNEUMONIA";
  probability: number;
  raw_score: number;
  model_version: string;
}

export type PostResult =
  | { ok: true; data: PredictionResponse }
  | { ok: false; status: number; code?: string };

export type Poster = (file: Blob, signal: AbortSignal) => Promise<PostResult>;

export async function postPredict(file: Blob, signal: AbortSignal): Promise<PostResult> {
  const body = new FormData();
  body.append("image", file);
  let response: Response;
  try {
    response = await fetch("/api/predict", { method: "POST", body, signal });
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") {
      throw err; // reset aborted us; the controller swallows this
    }
    return { ok: false, status: 0 };
  }
  let payload: unknown = null;
  try {
    payload = await response.json();
  } catch {
    payload = null;
  }
  if (!response.ok) {
    const code =
      payload && typeof payload === "object" && "code" in payload
        ? String((payload as { code: unknown }).code)
        : undefined;
    return { ok: false, status: response.status, code };
  }
  return { ok: true, data: payload as PredictionResponse };
}
