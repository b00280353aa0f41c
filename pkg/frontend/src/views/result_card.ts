import { el, statusChip } from "../dom.js";
import type { EvidenceRow, ResultView } from "../types.js";
import { evidenceTable } from "./evidence_table.js";

// Labels, confidence, and evidence strings come straight from the payload;
// the card never synthesizes content the API did not return.

function predictionBlock(view: ResultView): HTMLElement {
  if (!view.prediction) {
    return el("p", { class: "no-prediction" }, view.error || "No prediction available.");
  }
  const p = view.prediction;
  return el(
    "div",
    { class: "prediction" },
    el("span", { class: "hrp-flag" }, p.hrp_flag ? "HRP" : "Not HRP"),
    " ",
    el("span", { class: "label" }, p.label),
    " ",
    el("span", { class: "risk" }, p.risk_level),
    " ",
    el("span", { class: "confidence", title: "model confidence" }, String(p.confidence)),
  );
}

function reasoningBlock(view: ResultView): HTMLElement {
  const steps = el(
    "ol",
    { class: "reasoning" },
    ...view.reasoning_steps.map((step) => el("li", {}, step)),
  );
  const chips = el(
    "span",
    { class: "cited-chips" },
    ...view.evidence_rows.map((row) => {
      const chip = el("span", { class: "citation-chip" }, row.snippet_id);
      chip.dataset.snippetId = row.snippet_id;
      return chip;
    }),
  );
  return el(
    "section",
    { class: "reasoning-trace" },
    el("h3", {}, "Reasoning"),
    steps,
    el("div", { class: "citations" }, "Citations: ", chips),
  );
}

export function resultCard(view: ResultView): HTMLElement {
  const reasoning = reasoningBlock(view);
  const highlightCitation = (row: EvidenceRow) => {
    for (const chip of reasoning.querySelectorAll(".citation-chip")) {
      chip.classList.toggle(
        "highlight",
        (chip as HTMLElement).dataset.snippetId === row.snippet_id,
      );
    }
  };

  const card = el(
    "article",
    { class: "result-card" },
    el(
      "header",
      {},
      el("h2", {}, view.item_id),
      statusChip(view.status),
      view.override ? el("span", { class: "override-marker" }, view.override) : null,
    ),
    predictionBlock(view),
    view.verdict
      ? el(
          "p",
          { class: "verdict" },
          `Validator: ${view.verdict.verdict} (coverage ${view.verdict.coverage_count}) `,
          view.verdict.conflict_lists.length > 1
            ? el("span", { class: "conflict-note" },
                `conflicting lists: ${view.verdict.conflict_lists.join(", ")}`)
            : null,
        )
      : null,
    reasoning,
    el(
      "section",
      { class: "evidence" },
      el("h3", {}, "Evidence"),
      evidenceTable(view.evidence_rows, { onRowSelected: highlightCitation }),
    ),
  );
  card.dataset.itemId = view.item_id;

  if (view.advisory_feedback.length > 0) {
    card.append(
      el(
        "section",
        { class: "advisory" },
        el("h3", {}, "Prior reviewer feedback (advisory)"),
        el(
          "ul",
          {},
          ...view.advisory_feedback.map((entry) =>
            el("li", {}, `${entry.reviewer_id}: ${entry.action} — ${entry.rationale}`),
          ),
        ),
      ),
    );
  }
  return card;
}
