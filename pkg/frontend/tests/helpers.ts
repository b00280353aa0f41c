import { vi } from "vitest";
import fixtures from "./fixtures.json";
import type { BatchStatus, ResultView, VersionInfo } from "../src/types.js";

// Recorded payloads from the live service (see fixtures.json); the UI tests
// run against exactly what the API returns.

export const conflictView = fixtures.conflictView as unknown as ResultView;
export const finalizedView = fixtures.finalizedView as unknown as ResultView;
export const versionInfo = fixtures.version as unknown as VersionInfo;
export const batchStatus = fixtures.batchStatus as unknown as BatchStatus;
export const csvDownload = fixtures.csvDownload as string;
export const jsonDownload = fixtures.jsonDownload as {
  version_strip: { model_identifier: string; index_snapshot: string; timestamp: string };
  results: unknown[];
};

export interface RecordedCall {
  url: string;
  method: string;
  body: string | null;
}

export interface Route {
  method: string;
  path: string | RegExp;
  respond: (call: RecordedCall) => Response;
}

export function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function text(body: string, status = 200, contentType = "text/csv"): Response {
  return new Response(body, { status, headers: { "Content-Type": contentType } });
}

/** Install a route-table fetch stub; returns the recorded calls. */
export function stubFetch(routes: Route[]): RecordedCall[] {
  const calls: RecordedCall[] = [];
  vi.stubGlobal("fetch", async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = (init?.method ?? "GET").toUpperCase();
    const call: RecordedCall = {
      url,
      method,
      body: typeof init?.body === "string" ? init.body : null,
    };
    calls.push(call);
    for (const route of routes) {
      const matches =
        typeof route.path === "string" ? url.endsWith(route.path) : route.path.test(url);
      if (matches && route.method === method) return route.respond(call);
    }
    return json({ detail: `unrouted ${method} ${url}` }, 404);
  });
  return calls;
}

export function stubFetchFailure(message = "connection refused"): RecordedCall[] {
  const calls: RecordedCall[] = [];
  vi.stubGlobal("fetch", async (input: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(input),
      method: (init?.method ?? "GET").toUpperCase(),
      body: typeof init?.body === "string" ? init.body : null,
    });
    throw new TypeError(message);
  });
  return calls;
}

export function setValue(input: HTMLInputElement | HTMLTextAreaElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function selectValue(select: HTMLSelectElement, value: string): void {
  select.value = value;
  select.dispatchEvent(new Event("change", { bubbles: true }));
}

export function submitForm(form: HTMLFormElement): void {
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
