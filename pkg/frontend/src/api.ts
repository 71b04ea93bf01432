// Typed REST client over the documented HTTP surface; the API key lives in
// sessionStorage only.

import type { Device, Job } from "./types.js";

export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

export interface Connection {
  url: string;
  apiKey: string;
}

export function loadConnection(): Connection | null {
  const url = sessionStorage.getItem("qstack_url");
  const apiKey = sessionStorage.getItem("qstack_api_key");
  return url && apiKey ? { url, apiKey } : null;
}

export function saveConnection(conn: Connection): void {
  sessionStorage.setItem("qstack_url", conn.url);
  sessionStorage.setItem("qstack_api_key", conn.apiKey);
}

export function clearConnection(): void {
  sessionStorage.removeItem("qstack_url");
  sessionStorage.removeItem("qstack_api_key");
}

export class ApiClient {
  constructor(private conn: Connection) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.conn.url.replace(/\/$/, "") + path, {
        method,
        headers: {
          Authorization: `Bearer ${this.conn.apiKey}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new ApiError(0, `cannot reach server: ${err}`);
    }
    const text = await resp.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = text;
    }
    if (!resp.ok) {
      const detail =
        parsed && typeof parsed === "object" && "detail" in (parsed as Record<string, unknown>)
          ? String((parsed as Record<string, unknown>).detail)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, detail);
    }
    return parsed as T;
  }

  listDevices(): Promise<Device[]> {
    return this.request("GET", "/devices");
  }

  getDevice(id: string): Promise<Device> {
    return this.request("GET", `/devices/${id}`);
  }

  listJobs(): Promise<Job[]> {
    return this.request("GET", "/jobs?owner=me");
  }

  getJob(id: string): Promise<Job> {
    return this.request("GET", `/jobs/${id}`);
  }

  submitJob(draft: Record<string, unknown>): Promise<{ job_id: string; job: Job }> {
    return this.request("POST", "/jobs", draft);
  }

  cancelJob(id: string): Promise<Job> {
    return this.request("POST", `/jobs/${id}/cancel`);
  }
}
