/** DOM wiring for the upload page. All state transitions live in
 * UploadController; this file only reflects state into elements. */

import { postPredict } from "./api.js";
import { ControllerState, UploadController } from "./controller.js";
import { viewModel } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const fileInput = el<HTMLInputElement>("file-input");
const dropZone = el<HTMLElement>("drop-zone");
const classifyButton = el<HTMLButtonElement>("classify-button");
const resetButton = el<HTMLButtonElement>("reset-button");
const preview = el<HTMLImageElement>("preview");
const previewName = el<HTMLElement>("preview-name");
const resultCard = el<HTMLElement>("result");
const resultLabel = el<HTMLElement>("result-label");
const resultPercent = el<HTMLElement>("result-percent");
const resultRaw = el<HTMLElement>("result-raw");
const resultVersion = el<HTMLElement>("result-version");
const errorBanner = el<HTMLElement>("error-banner");
const spinner = el<HTMLElement>("spinner");

function render(state: ControllerState): void {
  const view = viewModel(state);
  fileInput.disabled = view.uploadDisabled;
  dropZone.classList.toggle("disabled", view.uploadDisabled);
  classifyButton.disabled = view.submitDisabled;
  spinner.hidden = !view.busy;

  previewName.textContent = view.fileName;
  if (view.previewUrl !== null) {
    preview.src = view.previewUrl;
    preview.hidden = false;
  } else {
    preview.removeAttribute("src");
    preview.hidden = true;
  }

  resultCard.hidden = !view.showResult;
  resultCard.classList.toggle("alert", view.alert);
  resultLabel.textContent = view.label;
  resultPercent.textContent = view.percentText;
  resultRaw.textContent = view.rawScoreText ? `raw score ${view.rawScoreText}` : "";
  resultVersion.textContent = view.modelVersion ? `model ${view.modelVersion}` : "";

  errorBanner.hidden = view.errorMessage === null;
  errorBanner.textContent = view.errorMessage ?? "";
}

const controller = new UploadController(
  postPredict,
  render,
  (file) => URL.createObjectURL(file),
  (url) => URL.revokeObjectURL(url),
);

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.item(0);
  if (file) {
    controller.selectFile(file);
  }
});

classifyButton.addEventListener("click", () => {
  void controller.submit();
});

resetButton.addEventListener("click", () => {
  controller.reset();
  fileInput.value = "";
});

for (const name of ["dragenter", "dragover"]) {
  dropZone.addEventListener(name, (event) => {
    event.preventDefault();
    dropZone.classList.add("hover");
  });
}
dropZone.addEventListener("dragleave", () => dropZone.classList.remove("hover"));
dropZone.addEventListener("drop", (event) => {
  event.preventDefault();
  dropZone.classList.remove("hover");
  const file = (event as DragEvent).dataTransfer?.files.item(0);
  if (file) {
    controller.selectFile(file);
  }
});
dropZone.addEventListener("click", () => {
  if (!fileInput.disabled) {
    fileInput.click();
  }
});

render(controller.snapshot);
