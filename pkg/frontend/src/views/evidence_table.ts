import { el } from "../dom.js";
import type { EvidenceRow } from "../types.js";

// Verbatim spans are shown byte-for-byte; long ones are visually collapsed
// with the full text available on expand, never truncated in the data.

const COLLAPSE_AT = 240;

export interface EvidenceTableHooks {
  onRowSelected?: (row: EvidenceRow) => void;
  onCopied?: (text: string) => void;
}

function copyText(text: string): Promise<void> {
  const clipboard = navigator.clipboard;
  if (clipboard?.writeText) return clipboard.writeText(text);
  return Promise.reject(new Error("clipboard unavailable"));
}

function verbatimCell(row: EvidenceRow): HTMLElement {
  if (row.verbatim_text.length <= COLLAPSE_AT) {
    return el("td", { class: "verbatim" }, row.verbatim_text);
  }
  const full = el("span", { class: "verbatim-full" }, row.verbatim_text);
  full.hidden = true;
  const preview = el(
    "span",
    { class: "verbatim-preview" },
    `${row.verbatim_text.slice(0, COLLAPSE_AT)}…`,
  );
  const toggle = el("button", {
    type: "button",
    class: "expand",
    onclick: () => {
      full.hidden = !full.hidden;
      preview.hidden = !full.hidden;
      toggle.textContent = full.hidden ? "expand" : "collapse";
    },
  }, "expand");
  return el("td", { class: "verbatim" }, preview, full, " ", toggle);
}

/** All retrieved rows render, including contradictory control lists. */
export function evidenceTable(rows: EvidenceRow[], hooks: EvidenceTableHooks = {}): HTMLElement {
  if (rows.length === 0) {
    return el("p", { class: "no-evidence" }, "No policy evidence was retrieved.");
  }
  const body = el("tbody", {});
  for (const row of rows) {
    const tr = el(
      "tr",
      {
        class: "evidence-row",
        onclick: () => {
          for (const other of body.querySelectorAll("tr.selected")) {
            other.classList.remove("selected");
          }
          tr.classList.add("selected");
          hooks.onRowSelected?.(row);
        },
      },
      el("td", { class: "control-list" }, row.control_list),
      el("td", { class: "section" }, row.section_id),
      verbatimCell(row),
      el("td", { class: "trace" }, row.trace_id),
      el(
        "td",
        {},
        el("button", {
          type: "button",
          class: "copy",
          onclick: (event: Event) => {
            event.stopPropagation();
            void copyText(row.verbatim_text).then(() => hooks.onCopied?.(row.verbatim_text));
          },
        }, "copy"),
      ),
    );
    tr.dataset.snippetId = row.snippet_id;
    tr.dataset.controlList = row.control_list;
    tr.dataset.traceId = row.trace_id;
    body.append(tr);
  }
  return el(
    "table",
    { class: "evidence-table" },
    el(
      "thead",
      {},
      el(
        "tr",
        {},
        el("th", {}, "List"),
        el("th", {}, "Section"),
        el("th", {}, "Extracted text"),
        el("th", {}, "Trace"),
        el("th", {}, ""),
      ),
    ),
    body,
  );
}
