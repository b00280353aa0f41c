import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import type { ResultView } from "./types.js";
import { BatchDashboard } from "./views/batch_dashboard.js";
import { feedbackPanel } from "./views/feedback_panel.js";
import { resultCard } from "./views/result_card.js";
import { submitForm } from "./views/submit_form.js";
import { loadVersionBadge } from "./views/version_badge.js";

// Single-page wiring: submit -> result (evidence + reasoning) -> feedback,
// plus the batch dashboard. Always re-fetches after a mutation.

export function createApp(root: HTMLElement, client: ApiClient): { showResult: (view: ResultView) => void } {
  const resultContainer = el("div", { class: "result-container" });
  const bundleLink = (view: ResultView) =>
    el(
      "p",
      { class: "bundle-link" },
      el("a", { href: client.bundleUrl(view.item_id), download: `${view.item_id}-bundle.zip` },
        "Download audit bundle"),
    );

  const showResult = (view: ResultView): void => {
    clear(resultContainer);
    resultContainer.append(
      resultCard(view),
      feedbackPanel(view, client, { onResolved: showResult }),
      bundleLink(view),
    );
  };

  root.append(
    el("header", { class: "app-header" }, el("h1", {}, "HRP review console")),
    submitForm(client, { onResult: showResult }),
    resultContainer,
    new BatchDashboard(client).root,
  );
  void loadVersionBadge(client).then((badge) => {
    root.querySelector(".app-header")?.append(badge);
  });
  return { showResult };
}

export function main(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  createApp(root, new ApiClient(""));
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  main();
}
