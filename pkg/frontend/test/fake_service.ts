/** In-memory stand-in for the labeling service.
 *
 * Implements the endpoint contract the real backend exposes: one pending
 * batch at a time, submissions must cover the batch exactly (422
 * otherwise, state untouched), completed batches acknowledge duplicates,
 * and a report is appended per cycle plus a terminal one. Cycle
 * accuracies are a deterministic function of every label received, so
 * two sessions produce identical reports if and only if they submit
 * identical labels.
 */

import type { FetchLike } from '../src/api.js';
import type { CycleReport, QueryItem } from '../src/types.js';

export interface FakeOptions {
  cycles?: number;
  batchSize?: number;
  classCount?: number;
  poolSize?: number;
  initialCount?: number;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export class FakeService {
  readonly runId = 'fake-run-1';
  readonly cycles: number;
  readonly batchSize: number;
  readonly classCount: number;
  readonly poolSize: number;
  readonly initialCount: number;
  readonly groundTruth = new Map<number, number>();

  created = false;
  cycle = 0;
  status: 'training' | 'waiting_for_labels' | 'finished' = 'training';
  pending: { cycle: number; items: QueryItem[]; status: 'pending' | 'complete' } | null = null;
  reports: CycleReport[] = [];
  labeledCount: number;
  private labelTrace: number[] = [];

  constructor(options: FakeOptions = {}) {
    this.cycles = options.cycles ?? 2;
    this.batchSize = options.batchSize ?? 4;
    this.classCount = options.classCount ?? 3;
    this.poolSize = options.poolSize ?? 100;
    this.initialCount = options.initialCount ?? 10;
    this.labeledCount = this.initialCount;
    for (let i = 0; i < this.poolSize; i += 1) {
      this.groundTruth.set(i, (i * 7 + 3) % this.classCount);
    }
  }

  /** Deterministic batch for a cycle: ids spread across the pool. */
  private makeBatch(cycle: number): QueryItem[] {
    const items: QueryItem[] = [];
    for (let i = 0; i < this.batchSize; i += 1) {
      const sampleId = (cycle * 17 + i * 5 + 11) % this.poolSize;
      items.push({
        sample_id: sampleId,
        features: [sampleId / this.poolSize, (sampleId % 7) / 7],
        projection: [sampleId / this.poolSize, (sampleId % 7) / 7],
        predicted_class: (sampleId + cycle) % this.classCount,
        dispersion_score: ((sampleId % 10) + 1) / 10,
      });
    }
    return items;
  }

  /** Accuracy is a hash of every label ever received: equal label
   * streams give equal reports. */
  private accuracy(): number {
    let hash = 2166136261;
    for (const value of this.labelTrace) {
      hash = Math.imul(hash ^ value, 16777619) >>> 0;
    }
    return 0.5 + (hash % 1000) / 4000 + this.reports.length * 0.02;
  }

  private appendReport(cycle: number, queried: number[]): void {
    this.reports.push({
      strategy: 'dispersion',
      seed: 0,
      cycle,
      labeled_count: this.initialCount + cycle * this.batchSize,
      test_accuracy: this.accuracy(),
      queried,
      query_scores: queried.map((q) => ((q % 10) + 1) / 10),
      wall_time_seconds: 0,
    });
  }

  advance(): void {
    // training step: publish the next batch or finish with a terminal report
    if (this.cycle < this.cycles) {
      this.pending = {
        cycle: this.cycle,
        items: this.makeBatch(this.cycle),
        status: 'pending',
      };
      this.status = 'waiting_for_labels';
    } else {
      this.appendReport(this.cycles, []);
      this.status = 'finished';
      // the last completed batch stays visible, as in the real service
    }
  }

  submit(labels: Record<string, number>): { code: number; body: unknown } {
    if (!this.pending) {
      return { code: 422, body: { detail: 'no batch has been issued' } };
    }
    const expected = new Set(this.pending.items.map((item) => item.sample_id));
    const got = new Set(Object.keys(labels).map(Number));
    const sameIds =
      expected.size === got.size && [...expected].every((id) => got.has(id));
    if (this.pending.status === 'complete') {
      if (sameIds) return { code: 200, body: { status: 'duplicate' } };
      return { code: 422, body: { detail: 'batch already completed' } };
    }
    if (!sameIds) {
      const missing = [...expected].filter((id) => !got.has(id));
      const extra = [...got].filter((id) => !expected.has(id));
      return {
        code: 422,
        body: { detail: `missing ${JSON.stringify(missing)}, unexpected ${JSON.stringify(extra)}` },
      };
    }
    for (const value of Object.values(labels)) {
      if (!Number.isInteger(value) || value < 0 || value >= this.classCount) {
        return { code: 422, body: { detail: `class id ${value} out of range` } };
      }
    }
    const queried = [...expected].sort((a, b) => a - b);
    for (const id of queried) {
      this.labelTrace.push(id, labels[String(id)]!);
    }
    this.pending = { ...this.pending, status: 'complete' };
    this.appendReport(this.pending.cycle, queried);
    this.labeledCount += this.batchSize;
    this.cycle += 1;
    this.advance();
    return { code: 200, body: { status: 'accepted' } };
  }

  /** Drive this (or an identical) fake with ground-truth labels and
   * return the reports: the reference "simulated oracle" run. */
  static simulatedReports(options: FakeOptions = {}): CycleReport[] {
    const fake = new FakeService(options);
    fake.created = true;
    fake.advance();
    while (fake.status === 'waiting_for_labels' && fake.pending) {
      const labels: Record<string, number> = {};
      for (const item of fake.pending.items) {
        labels[String(item.sample_id)] = fake.groundTruth.get(item.sample_id)!;
      }
      fake.submit(labels);
    }
    return fake.reports;
  }

  /** FetchLike entry point for the ApiClient. */
  fetch: FetchLike = async (url, init) => {
    const path = url.replace(/^https?:\/\/[^/]+/, '');
    const method = (init?.method ?? 'GET').toUpperCase();
    if (method === 'POST' && path === '/runs') {
      this.created = true;
      this.advance();
      return json(201, { run_id: this.runId });
    }
    const match = path.match(/^\/runs\/([^/]+)\/(pending|labels|status|metrics|history)$/);
    if (!match || match[1] !== this.runId || !this.created) {
      return json(404, { detail: `unknown run` });
    }
    const endpoint = match[2];
    if (endpoint === 'labels' && method === 'POST') {
      const body = JSON.parse(String(init?.body ?? '{}')) as {
        labels?: Record<string, number>;
      };
      const { code, body: reply } = this.submit(body.labels ?? {});
      return json(code, reply);
    }
    if (endpoint === 'pending') {
      return json(200, this.pending ?? { run_id: this.runId, status: 'none', items: [] });
    }
    if (endpoint === 'status') {
      return json(200, {
        run_id: this.runId,
        status: this.status,
        error: null,
        cycle: this.cycle,
        cycles: this.cycles,
        strategy: 'dispersion',
        labeled_count: this.labeledCount,
        pool_size: this.poolSize,
        class_count: this.classCount,
        budget_per_cycle: this.batchSize,
        seed: 0,
      });
    }
    if (endpoint === 'metrics') {
      return json(200, { run_id: this.runId, reports: this.reports });
    }
    return json(200, { cycle: null, csv: '', dispersion: [] });
  };
}
