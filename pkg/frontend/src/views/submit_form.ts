import { ApiClient, ApiError } from "../api.js";
import { el } from "../dom.js";
import type { ResultView } from "../types.js";

// Client-side mirror of server validation: the three required fields must be
// non-empty before any request is sent. Server errors surface inline; a dead
// server shows a banner and never silently retries.

export interface SubmitFormHooks {
  onResult?: (view: ResultView) => void;
}

export function submitForm(client: ApiClient, hooks: SubmitFormHooks = {}): HTMLElement {
  const manufacturer = el("input", { name: "manufacturer", placeholder: "vendor name" }) as HTMLInputElement;
  const equipment = el("input", { name: "equipment_or_service", placeholder: "item name" }) as HTMLInputElement;
  const model = el("input", { name: "model_no", placeholder: "model number" }) as HTMLInputElement;
  const description = el("textarea", {
    name: "description",
    placeholder: "optional description",
  }) as HTMLTextAreaElement;
  const useDescription = el("input", { type: "checkbox", name: "use_description", checked: true }) as HTMLInputElement;
  useDescription.checked = true;
  const fieldError = el("p", { class: "field-error" });
  fieldError.hidden = true;
  const banner = el("div", { class: "failure-banner" });
  banner.hidden = true;
  const submit = el("button", { type: "submit", class: "submit-item" }, "Submit") as HTMLButtonElement;

  const requiredFields: Array<[HTMLInputElement, string]> = [
    [manufacturer, "manufacturer"],
    [equipment, "equipment_or_service"],
    [model, "model_no"],
  ];

  const form = el(
    "form",
    {
      class: "submit-form",
      onsubmit: (event: Event) => {
        event.preventDefault();
        banner.hidden = true;
        const missing = requiredFields
          .filter(([input]) => input.value.trim() === "")
          .map(([, name]) => name);
        if (missing.length > 0) {
          fieldError.hidden = false;
          fieldError.textContent = `Required: ${missing.join(", ")}`;
          return; // no request leaves the browser
        }
        fieldError.hidden = true;
        submit.disabled = true;
        client
          .submitItem({
            manufacturer: manufacturer.value,
            equipment_or_service: equipment.value,
            model_no: model.value,
            description: description.value.trim() || null,
            use_description: useDescription.checked,
          })
          .then(({ item_id }) => client.getItem(item_id))
          .then((view) => {
            submit.disabled = false;
            hooks.onResult?.(view);
          })
          .catch((error: unknown) => {
            submit.disabled = false;
            if (error instanceof ApiError) {
              fieldError.hidden = false;
              fieldError.textContent = `Rejected (${error.status}): ${JSON.stringify(error.detail)}`;
            } else {
              banner.hidden = false;
              banner.textContent = `Service unreachable: ${String(error)}`;
            }
          });
      },
    },
    el("h2", {}, "Submit item"),
    manufacturer,
    equipment,
    model,
    description,
    el("label", { class: "use-description" }, useDescription, " use description"),
    submit,
    fieldError,
    banner,
  );
  return form;
}
