/** Page controller: form <-> URL <-> search service <-> result list. */

import { ApiError, MechKbClient } from "./api.js";
import {
  DEFAULT_STATE,
  pivotState,
  stateFromParams,
  stateToParams,
  toSearchRequest,
  type QueryState,
} from "./state.js";
import { renderError, renderResults } from "./render.js";

export interface AppOptions {
  document: Document;
  window: Window;
  client: MechKbClient;
}

export interface App {
  /** Parse the form, sync the URL, run the search, render the rows. */
  submit(): Promise<void>;
  readForm(): QueryState;
  writeForm(state: QueryState): void;
}

const ALT_SEPARATOR = "|";

function parseAlternatives(raw: string): string[] {
  return raw
    .split(ALT_SEPARATOR)
    .map((alt) => alt.trim())
    .filter((alt) => alt !== "");
}

function formatAlternatives(alts: string[]): string {
  return alts.join(` ${ALT_SEPARATOR} `);
}

export function initApp(options: AppOptions): App {
  const { document: doc, window: win, client } = options;
  const form = doc.querySelector("#search-form") as HTMLFormElement;
  const e1Input = doc.querySelector("#e1") as HTMLInputElement;
  const e2Input = doc.querySelector("#e2") as HTMLInputElement;
  const classSelect = doc.querySelector("#class") as HTMLSelectElement;
  const kInput = doc.querySelector("#k") as HTMLInputElement;
  const symmetricInput = doc.querySelector("#symmetric") as HTMLInputElement;
  const confidenceInput = doc.querySelector("#min-confidence") as HTMLInputElement;
  const resultsBox = doc.querySelector("#results") as HTMLElement;
  const statusLine = doc.querySelector("#status") as HTMLElement;

  function readForm(): QueryState {
    const classRaw = classSelect.value.toUpperCase();
    const k = kInput.value ? Number(kInput.value) : NaN;
    const minConfidence = confidenceInput.value ? Number(confidenceInput.value) : NaN;
    return {
      e1: parseAlternatives(e1Input.value),
      e2: parseAlternatives(e2Input.value),
      classFilter:
        classRaw === "DIRECT" || classRaw === "INDIRECT" ? classRaw : null,
      k: Number.isInteger(k) && k >= 1 ? k : DEFAULT_STATE.k,
      symmetric: symmetricInput.checked,
      minConfidence:
        Number.isFinite(minConfidence) && minConfidence >= 0 && minConfidence <= 1
          ? minConfidence
          : DEFAULT_STATE.minConfidence,
    };
  }

  function writeForm(state: QueryState): void {
    e1Input.value = formatAlternatives(state.e1);
    e2Input.value = formatAlternatives(state.e2);
    classSelect.value = state.classFilter ? state.classFilter.toLowerCase() : "any";
    kInput.value = String(state.k);
    symmetricInput.checked = state.symmetric;
    confidenceInput.value = String(state.minConfidence);
  }

  async function runSearch(state: QueryState): Promise<void> {
    if (state.e1.length === 0) {
      renderError(doc, resultsBox, "enter at least one E1 phrase");
      return;
    }
    statusLine.textContent = "searching…";
    try {
      const body = await client.search(toSearchRequest(state));
      renderResults(doc, resultsBox, body.results, pivot);
      statusLine.textContent =
        `${body.results.length} relation(s) · scanned ${body.total_scanned} ` +
        `· ${body.took_ms} ms`;
    } catch (error) {
      const message =
        error instanceof ApiError
          ? error.field
            ? `${error.field}: ${error.message}`
            : error.message
          : String(error);
      renderError(doc, resultsBox, message);
      statusLine.textContent = "error";
    }
  }

  function syncUrl(state: QueryState): void {
    const query = stateToParams(state).toString();
    const url = query === "" ? win.location.pathname : `?${query}`;
    win.history.pushState(null, "", url);
  }

  async function submit(): Promise<void> {
    const state = readForm();
    syncUrl(state);
    await runSearch(state);
  }

  function pivot(argText: string): void {
    const next = pivotState(readForm(), argText);
    writeForm(next);
    void submit();
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });

  win.addEventListener("popstate", () => {
    const state = stateFromParams(new URLSearchParams(win.location.search));
    writeForm(state);
    if (state.e1.length > 0) void runSearch(state);
  });

  // restore any state carried by the URL, e.g. a shared link
  const initial = stateFromParams(new URLSearchParams(win.location.search));
  writeForm(initial);
  if (initial.e1.length > 0) void runSearch(initial);

  void client
    .health()
    .then((health) => {
      statusLine.textContent =
        `index: ${health.index.counts.relations} relations / ` +
        `${health.index.counts.vocabulary} surfaces (${health.provider})`;
    })
    .catch(() => {
      statusLine.textContent = "service has no index loaded";
    });

  return { submit, readForm, writeForm };
}
