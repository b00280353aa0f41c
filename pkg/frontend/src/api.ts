import type {
  BatchJsonDownload,
  BatchStatus,
  FeedbackRequest,
  ResultView,
  SubmitRequest,
  VersionInfo,
  VersionStrip,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

async function parseDetail(response: Response): Promise<unknown> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    return body.detail ?? body;
  } catch {
    return response.statusText;
  }
}

/** Thin typed client over the documented HTTP API; no private endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string = "",
  ) {}

  private headers(contentType?: string): Record<string, string> {
    const headers: Record<string, string> = {};
    if (contentType) headers["Content-Type"] = contentType;
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await fetch(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return response;
  }

  async submitItem(body: SubmitRequest): Promise<{ item_id: string; status: string }> {
    const response = await this.request("/items", {
      method: "POST",
      headers: this.headers("application/json"),
      body: JSON.stringify(body),
    });
    return response.json();
  }

  async getItem(itemId: string): Promise<ResultView> {
    const response = await this.request(`/items/${encodeURIComponent(itemId)}`, {
      headers: this.headers(),
    });
    return response.json();
  }

  async postFeedback(itemId: string, body: FeedbackRequest): Promise<ResultView> {
    const response = await this.request(`/items/${encodeURIComponent(itemId)}/feedback`, {
      method: "POST",
      headers: this.headers("application/json"),
      body: JSON.stringify(body),
    });
    return response.json();
  }

  async submitBatchCsv(csv: string): Promise<{ batch_id: string }> {
    const response = await this.request("/batch", {
      method: "POST",
      headers: this.headers("text/csv"),
      body: csv,
    });
    return response.json();
  }

  async batchStatus(batchId: string): Promise<BatchStatus> {
    const response = await this.request(`/batch/${encodeURIComponent(batchId)}`, {
      headers: this.headers(),
    });
    return response.json();
  }

  async downloadBatchCsv(batchId: string): Promise<string> {
    const response = await this.request(
      `/batch/${encodeURIComponent(batchId)}/download?format=csv`,
      { headers: this.headers() },
    );
    return response.text();
  }

  async downloadBatchJson(batchId: string): Promise<BatchJsonDownload> {
    const response = await this.request(
      `/batch/${encodeURIComponent(batchId)}/download?format=json`,
      { headers: this.headers() },
    );
    return response.json();
  }

  bundleUrl(itemId: string): string {
    return `${this.baseUrl}/items/${encodeURIComponent(itemId)}/bundle`;
  }

  async version(): Promise<VersionInfo> {
    const response = await this.request("/version", { headers: this.headers() });
    return response.json();
  }

  async health(): Promise<{ status: string }> {
    const response = await this.request("/health", { headers: this.headers() });
    return response.json();
  }
}

const STRIP_PREFIX = "# version_strip: ";

/** CSV downloads carry the strip as a leading comment line. */
export function parseCsvVersionStrip(csvText: string): VersionStrip {
  const firstLine = csvText.split("\n", 1)[0] ?? "";
  if (!firstLine.startsWith(STRIP_PREFIX)) {
    throw new Error("CSV download is missing its version strip line");
  }
  return JSON.parse(firstLine.slice(STRIP_PREFIX.length)) as VersionStrip;
}
