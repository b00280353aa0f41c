import { ApiClient, ApiError } from "../api.js";
import { el } from "../dom.js";
import type { ControlList, FeedbackRequest, ResultView } from "../types.js";
import { CONTROL_LISTS } from "../types.js";

// The gate the server enforces is mirrored here: a flagged item can never be
// finalized without a rationale, and an override always needs a target label.
// There is no code path that posts without passing these checks.

export interface FeedbackPanelHooks {
  onResolved?: (view: ResultView) => void;
}

export function feedbackPanel(
  view: ResultView,
  client: ApiClient,
  hooks: FeedbackPanelHooks = {},
): HTMLElement {
  const flagged = view.status === "AWAITING_HUMAN";
  const actionSelect = el(
    "select",
    { name: "action" },
    el("option", { value: "ACCEPT" }, "Accept"),
    el("option", { value: "OVERRIDE" }, "Override"),
  ) as HTMLSelectElement;
  const labelSelect = el(
    "select",
    { name: "override_label" },
    el("option", { value: "" }, "choose label"),
    ...CONTROL_LISTS.map((label) => el("option", { value: label }, label)),
  ) as HTMLSelectElement;
  const rationale = el("textarea", {
    name: "rationale",
    placeholder: "short rationale (required)",
  }) as HTMLTextAreaElement;
  const rating = el(
    "select",
    { name: "rating" },
    el("option", { value: "" }, "rating (optional)"),
    ...[1, 2, 3, 4, 5].map((n) => el("option", { value: String(n) }, String(n))),
  ) as HTMLSelectElement;
  const policyRef = el("input", {
    name: "policy_ref",
    placeholder: "policy reference (optional)",
  }) as HTMLInputElement;
  const submit = el("button", { type: "submit", class: "submit-feedback" },
    "Submit Feedback") as HTMLButtonElement;
  const errorBox = el("p", { class: "feedback-error" });
  errorBox.hidden = true;

  const formReady = (): boolean => {
    if (rationale.value.trim() === "") return false;
    if (actionSelect.value === "OVERRIDE" && labelSelect.value === "") return false;
    return true;
  };
  const refreshGate = () => {
    submit.disabled = !formReady();
    labelSelect.hidden = actionSelect.value !== "OVERRIDE";
  };
  for (const control of [actionSelect, labelSelect, rationale]) {
    control.addEventListener("input", refreshGate);
    control.addEventListener("change", refreshGate);
  }

  const form = el(
    "form",
    {
      class: "feedback-panel",
      onsubmit: (event: Event) => {
        event.preventDefault();
        if (!formReady()) return; // belt and braces: the button is disabled too
        const body: FeedbackRequest = {
          action: actionSelect.value as "ACCEPT" | "OVERRIDE",
          rationale: rationale.value,
        };
        if (actionSelect.value === "OVERRIDE") {
          body.override_label = labelSelect.value as ControlList;
        }
        if (rating.value) body.rating = Number(rating.value);
        if (policyRef.value.trim()) body.policy_ref = policyRef.value.trim();
        submit.disabled = true;
        client
          .postFeedback(view.item_id, body)
          .then((updated) => hooks.onResolved?.(updated))
          .catch((error: unknown) => {
            errorBox.hidden = false;
            errorBox.textContent =
              error instanceof ApiError
                ? `Feedback rejected (${error.status}): ${JSON.stringify(error.detail)}`
                : `Feedback failed: ${String(error)}`;
            refreshGate();
          });
      },
    },
    el(
      "p",
      { class: "panel-mode" },
      flagged
        ? "This item is awaiting review: accept or override with a rationale."
        : "Item already finalized; feedback is recorded as advisory only.",
    ),
    actionSelect,
    labelSelect,
    rationale,
    rating,
    policyRef,
    submit,
    errorBox,
  );
  form.dataset.mode = flagged ? "gate" : "advisory";
  refreshGate();
  return form;
}
