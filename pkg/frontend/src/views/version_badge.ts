import { ApiClient } from "../api.js";
import { el } from "../dom.js";
import type { VersionInfo } from "../types.js";

// The deployment's version strip is visible on every page, and on-prem mode
// is surfaced explicitly so a reviewer always knows no data leaves the site.

export function versionBadge(version: VersionInfo): HTMLElement {
  const badge = el(
    "div",
    { class: "version-badge" },
    version.on_prem ? el("span", { class: "on-prem-badge" }, "ON-PREM") : null,
    el("span", { class: "model-id" }, version.model_identifier),
    el("span", { class: "snapshot-id" }, version.index_snapshot_id.slice(0, 12)),
    el("span", { class: "config-hash" }, version.config_hash.slice(0, 12)),
  );
  badge.dataset.onPrem = String(version.on_prem);
  return badge;
}

export async function loadVersionBadge(client: ApiClient): Promise<HTMLElement> {
  try {
    return versionBadge(await client.version());
  } catch (error) {
    return el("div", { class: "version-badge version-error" }, `version unavailable: ${String(error)}`);
  }
}
