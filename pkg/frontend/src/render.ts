/** DOM construction for search results. All text goes through textContent. */

import type { ResultRow } from "./api.js";
import { segmentSentence } from "./highlight.js";

export type PivotHandler = (argText: string) => void;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pivotButton(
  doc: Document,
  argText: string,
  role: "e1" | "e2",
  onPivot: PivotHandler,
): HTMLButtonElement {
  const button = el(doc, "button", `pivot pivot-${role}`, argText);
  button.type = "button";
  button.title = `search relations from "${argText}"`;
  button.dataset.arg = argText;
  button.addEventListener("click", () => onPivot(argText));
  return button;
}

export function renderRow(
  doc: Document,
  row: ResultRow,
  onPivot: PivotHandler,
): HTMLElement {
  const item = el(doc, "li", "result");
  item.dataset.relationId = row.relation_id;

  const head = el(doc, "div", "result-head");
  head.append(
    pivotButton(doc, row.arg1, "e1", onPivot),
    el(doc, "span", "arrow", "→"),
    pivotButton(doc, row.arg2, "e2", onPivot),
    el(doc, "span", `badge badge-${row.class.toLowerCase()}`, row.class),
    el(doc, "span", "score", row.score.toFixed(4)),
    el(doc, "span", "confidence", `conf ${row.confidence.toFixed(2)}`),
  );
  item.append(head);

  const sentence = el(doc, "p", "sentence");
  for (const segment of segmentSentence(row.sentence, row.arg1, row.arg2)) {
    if (segment.role === null) {
      sentence.append(doc.createTextNode(segment.text));
    } else {
      const mark = el(doc, "mark", `hl hl-${segment.role}`, segment.text);
      mark.dataset.role = segment.role;
      sentence.append(mark);
    }
  }
  item.append(sentence);

  const source = el(doc, "p", "source");
  const link = el(doc, "a", "paper-link", row.title || row.url);
  link.href = row.url;
  link.target = "_blank";
  link.rel = "noopener";
  source.append(
    link,
    el(doc, "span", "locator",
       ` · ${row.doc_id} / sentence ${row.sentence_index}`),
  );
  item.append(source);
  return item;
}

export function renderResults(
  doc: Document,
  container: HTMLElement,
  rows: ResultRow[],
  onPivot: PivotHandler,
): void {
  container.replaceChildren();
  if (rows.length === 0) {
    container.append(el(doc, "p", "empty", "no relations matched"));
    return;
  }
  const list = el(doc, "ol", "results");
  for (const row of rows) list.append(renderRow(doc, row, onPivot));
  container.append(list);
}

export function renderError(
  doc: Document,
  container: HTMLElement,
  message: string,
): void {
  container.replaceChildren(el(doc, "p", "error", message));
}
