/** Service error codes mapped to human-readable banner messages. */

const MESSAGES: Record<string, string> = {
  invalid_image: "The file could not be read as an image.",
  missing_file: "No file reached the server. Please pick an image and try again.",
  payload_too_large: "The image is too large. Uploads are limited to 10 MiB.",
  model_not_loaded: "The classifier is not ready yet. Please try again shortly.",
};

export const KNOWN_ERROR_CODES = Object.keys(MESSAGES);

export const GENERIC_ERROR_MESSAGE =
  "Something went wrong while classifying the image. Please try again.";

/** Unknown or absent codes fall back to the generic message; never blank. */
export function messageForCode(code: string | undefined | null): string {
  if (code && code in MESSAGES) {
    return MESSAGES[code];
  }
  return GENERIC_ERROR_MESSAGE;
}
