import { ApiClient } from "../api.js";
import { parseCsvVersionStrip } from "../api.js";
import { clear, el, statusChip } from "../dom.js";
import type { BatchStatus, VersionInfo, VersionStrip } from "../types.js";
import { stripMatchesVersion } from "../types.js";

// Batch runs are polled, one status chip per row; exports re-fetch from the
// server and the downloaded strip is checked against /version before the
// footer reports it.

const POLL_MS = 750;

export interface BatchDashboardHooks {
  onExported?: (format: "json" | "csv", strip: VersionStrip, content: string) => void;
}

function triggerDownload(filename: string, content: string, mime: string): void {
  if (typeof URL.createObjectURL !== "function") return; // non-browser env
  const url = URL.createObjectURL(new Blob([content], { type: mime }));
  const anchor = el("a", { href: url, download: filename });
  anchor.click();
  URL.revokeObjectURL(url);
}

export class BatchDashboard {
  readonly root: HTMLElement;
  private batchId: string | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private readonly rowsBody: HTMLElement;
  private readonly stripFooter: HTMLElement;
  private readonly statusLine: HTMLElement;
  private readonly csvInput: HTMLTextAreaElement;

  constructor(
    private readonly client: ApiClient,
    private readonly hooks: BatchDashboardHooks = {},
  ) {
    this.rowsBody = el("tbody", {});
    this.stripFooter = el("footer", { class: "version-strip" });
    this.statusLine = el("p", { class: "batch-status" }, "no batch running");
    this.csvInput = el("textarea", {
      name: "batch_csv",
      placeholder: "manufacturer,equipment_or_service,model_no,description\n…",
    }) as HTMLTextAreaElement;

    this.root = el(
      "section",
      { class: "batch-dashboard" },
      el("h2", {}, "Batch"),
      this.csvInput,
      el("button", { type: "button", class: "run-batch", onclick: () => void this.start() }, "Run batch"),
      this.statusLine,
      el(
        "table",
        { class: "batch-table" },
        el("thead", {}, el("tr", {}, el("th", {}, "Row"), el("th", {}, "Item"), el("th", {}, "Status"))),
        this.rowsBody,
      ),
      el(
        "div",
        { class: "export-controls" },
        el("button", { type: "button", class: "export-json", onclick: () => void this.export("json") }, "Export JSON"),
        el("button", { type: "button", class: "export-csv", onclick: () => void this.export("csv") }, "Export CSV"),
      ),
      this.stripFooter,
    );
  }

  async start(): Promise<void> {
    const { batch_id } = await this.client.submitBatchCsv(this.csvInput.value);
    this.batchId = batch_id;
    this.statusLine.textContent = `batch ${batch_id}: running`;
    await this.refresh();
  }

  /** One poll step; reschedules itself while the batch is running. */
  async refresh(): Promise<BatchStatus | null> {
    if (!this.batchId) return null;
    const status = await this.client.batchStatus(this.batchId);
    this.render(status);
    if (status.status === "running") {
      this.timer = setTimeout(() => void this.refresh(), POLL_MS);
    } else if (this.timer) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    return status;
  }

  private render(status: BatchStatus): void {
    this.statusLine.textContent = `batch ${status.batch_id}: ${status.status}`;
    clear(this.rowsBody);
    for (const item of status.items) {
      this.rowsBody.append(
        el(
          "tr",
          {},
          el("td", {}, String(item.row)),
          el("td", {}, item.item_id || "—"),
          el("td", {}, statusChip(item.status)),
        ),
      );
    }
  }

  async export(format: "json" | "csv"): Promise<VersionStrip | null> {
    if (!this.batchId) return null;
    const version = await this.client.version();
    let strip: VersionStrip;
    let content: string;
    if (format === "csv") {
      content = await this.client.downloadBatchCsv(this.batchId);
      strip = parseCsvVersionStrip(content);
      triggerDownload(`${this.batchId}.csv`, content, "text/csv");
    } else {
      const payload = await this.client.downloadBatchJson(this.batchId);
      strip = payload.version_strip;
      content = JSON.stringify(payload);
      triggerDownload(`${this.batchId}.json`, content, "application/json");
    }
    this.renderStrip(strip, version);
    this.hooks.onExported?.(format, strip, content);
    return strip;
  }

  private renderStrip(strip: VersionStrip, version: VersionInfo): void {
    clear(this.stripFooter);
    const verified = stripMatchesVersion(strip, version);
    this.stripFooter.append(
      el(
        "span",
        { class: verified ? "strip-verified" : "strip-mismatch" },
        `${strip.model_identifier} @ ${strip.index_snapshot} (${strip.timestamp})`,
      ),
      verified ? " ✓ matches /version" : " ✗ DOES NOT match /version",
    );
    this.stripFooter.dataset.verified = String(verified);
  }
}
