/** Thin typed client for the labeling service.
 *
 * The fetch implementation is injectable so the session logic can be
 * exercised against an in-memory fake in tests.
 */

import type { LabelMap, MetricsDoc, QueryBatch, StatusDoc } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  createRun(config: unknown): Promise<{ run_id: string }> {
    return this.post('/runs', config);
  }

  getPending(runId: string): Promise<QueryBatch> {
    return this.get(`/runs/${runId}/pending`);
  }

  submitLabels(runId: string, labels: LabelMap): Promise<{ status: string }> {
    return this.post(`/runs/${runId}/labels`, { labels });
  }

  getStatus(runId: string): Promise<StatusDoc> {
    return this.get(`/runs/${runId}/status`);
  }

  getMetrics(runId: string): Promise<MetricsDoc> {
    return this.get(`/runs/${runId}/metrics`);
  }

  getHistory(runId: string): Promise<{ cycle: number | null; csv: string }> {
    return this.get(`/runs/${runId}/history`);
  }
}
