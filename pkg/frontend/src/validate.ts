/** Client-side guard before any request is sent; the service re-validates. */

export const ALLOWED_TYPES = ["image/jpeg", "image/png"];
export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024; // matches the service limit

export interface FileCheck {
  ok: boolean;
  message?: string;
}

export interface FileLike {
  name: string;
  size: number;
  type: string;
}

export function validateFile(file: FileLike): FileCheck {
  if (!ALLOWED_TYPES.includes(file.type)) {
    return { ok: false, message: "Please choose a JPEG or PNG chest X-ray image." };
  }
  if (file.size === 0) {
    return { ok: false, message: "The selected file is empty." };
  }
  if (file.size > MAX_UPLOAD_BYTES) {
    return { ok: false, message: "The image is larger than the 10 MiB upload limit." };
  }
  return { ok: true };
}
