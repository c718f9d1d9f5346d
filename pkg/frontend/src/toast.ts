/** Non-blocking error/info toasts; every endpoint error surfaces here. */

import { ApiError } from "./api.js";

const TOAST_MS = 4000;

export function showToast(doc: Document, message: string, kind: "error" | "info" = "error"): void {
  let host = doc.getElementById("toast-host");
  if (!host) {
    host = doc.createElement("div");
    host.id = "toast-host";
    doc.body.appendChild(host);
  }
  const toast = doc.createElement("div");
  toast.className = `toast toast-${kind}`;
  toast.textContent = message;
  host.appendChild(toast);
  setTimeout(() => toast.remove(), TOAST_MS);
}

export function toastError(doc: Document, err: unknown): void {
  const message = err instanceof ApiError ? err.envelope.message : String(err);
  showToast(doc, message, "error");
}
