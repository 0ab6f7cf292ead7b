/**
 * Assistant-panel state. Suggestions are advisory: they are fetched only
 * after the annotator opens the panel, and applying one pre-fills the
 * picker without ever submitting. A gateway that is down or exhausted
 * degrades to a non-blocking offline notice.
 */

import { ApiError, type Api } from "./api.js";
import type { AssistResult } from "./types.js";

export type AssistantView =
  | { kind: "idle" }
  | { kind: "loading" }
  | {
      kind: "ready";
      properties: string[] | null;
      explanation: string;
      model: string;
      cached: boolean;
      parseOk: boolean;
    }
  | { kind: "offline"; message: string; retryAfter: string | null };

export async function fetchSuggestion(
  api: Api,
  sentenceId: string,
  featureId: string,
  force = false,
): Promise<AssistantView> {
  let result: AssistResult;
  try {
    result = await api.assist(sentenceId, featureId, force);
  } catch (err) {
    if (err instanceof ApiError) {
      return { kind: "offline", message: err.message, retryAfter: err.retryAfter };
    }
    const message = err instanceof Error ? err.message : String(err);
    return { kind: "offline", message, retryAfter: null };
  }
  return {
    kind: "ready",
    properties: result.properties,
    explanation: result.explanation,
    model: result.model,
    cached: result.cached,
    parseOk: result.parse_ok,
  };
}

/** Partition suggested property ids into applicable and unrecognised. */
export function splitSuggestion(
  properties: string[],
  known: Set<string>,
): { valid: string[]; unknown: string[] } {
  return {
    valid: properties.filter((p) => known.has(p)),
    unknown: properties.filter((p) => !known.has(p)),
  };
}
