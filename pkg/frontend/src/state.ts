/** Form state and its round-trip through the page URL. */

import type { RelationClass, SearchRequest } from "./api.js";

export interface QueryState {
  e1: string[];
  e2: string[];
  classFilter: RelationClass | null;
  k: number;
  symmetric: boolean;
  minConfidence: number;
}

export const DEFAULT_STATE: QueryState = {
  e1: [],
  e2: [],
  classFilter: null,
  k: 20,
  symmetric: false,
  minConfidence: 0.9,
};

/** Encode form state into URL params; defaults are omitted to keep URLs short. */
export function stateToParams(state: QueryState): URLSearchParams {
  const params = new URLSearchParams();
  for (const alt of state.e1) params.append("e1", alt);
  for (const alt of state.e2) params.append("e2", alt);
  if (state.classFilter) params.set("class", state.classFilter.toLowerCase());
  if (state.k !== DEFAULT_STATE.k) params.set("k", String(state.k));
  if (state.symmetric) params.set("symmetric", "true");
  if (state.minConfidence !== DEFAULT_STATE.minConfidence) {
    params.set("min_confidence", String(state.minConfidence));
  }
  return params;
}

/** Decode URL params back into form state; malformed values fall back to defaults. */
export function stateFromParams(params: URLSearchParams): QueryState {
  const classRaw = (params.get("class") ?? "").toUpperCase();
  const rawK = params.get("k");
  const rawConfidence = params.get("min_confidence");
  const k = rawK ? Number(rawK) : NaN;
  const minConfidence = rawConfidence ? Number(rawConfidence) : NaN;
  return {
    e1: params.getAll("e1").filter((v) => v.trim() !== ""),
    e2: params.getAll("e2").filter((v) => v.trim() !== ""),
    classFilter:
      classRaw === "DIRECT" || classRaw === "INDIRECT" ? classRaw : null,
    k: Number.isInteger(k) && k >= 1 ? k : DEFAULT_STATE.k,
    symmetric: params.get("symmetric") === "true",
    minConfidence:
      Number.isFinite(minConfidence) && minConfidence >= 0 && minConfidence <= 1
        ? minConfidence
        : DEFAULT_STATE.minConfidence,
  };
}

export function toSearchRequest(state: QueryState): SearchRequest {
  return {
    e1: state.e1,
    e2: state.e2,
    classFilter: state.classFilter,
    k: state.k,
    symmetric: state.symmetric,
    minConfidence: state.minConfidence,
  };
}

/** One-sided follow-up query pivoting on an argument from a result row. */
export function pivotState(state: QueryState, argText: string): QueryState {
  return {
    ...state,
    e1: [argText],
    e2: [],
    symmetric: false,
  };
}
