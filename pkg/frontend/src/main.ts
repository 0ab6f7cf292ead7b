/**
 * Browser entry point. Query parameters:
 *   ?api=http://host:port  — annotation server base URL (default: same origin)
 *   ?annotator=NAME        — annotator id (falls back to a stored id, then a prompt)
 */

import { ApiClient } from "./api.js";
import { Workbench } from "./app.js";

function resolveAnnotator(params: URLSearchParams): string {
  const fromQuery = params.get("annotator");
  if (fromQuery) {
    localStorage.setItem("rhetann.annotator", fromQuery);
    return fromQuery;
  }
  const stored = localStorage.getItem("rhetann.annotator");
  if (stored) return stored;
  const asked = window.prompt("Annotator id?")?.trim() || "anonymous";
  localStorage.setItem("rhetann.annotator", asked);
  return asked;
}

const params = new URLSearchParams(window.location.search);
const root = document.querySelector("#root") as HTMLElement | null;
if (!root) throw new Error("missing #root element");

const api = new ApiClient(params.get("api") ?? "");
const workbench = new Workbench(root, api, { annotatorId: resolveAnnotator(params) });
workbench.start().catch((err: unknown) => {
  const message = err instanceof Error ? err.message : String(err);
  root.textContent = `Could not reach the annotation server: ${message}`;
});
