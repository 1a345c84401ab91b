/** Labeling-session state machine.
 *
 * Pure logic over the ApiClient: tracks the pending batch, the classes
 * the annotator has chosen so far, the accuracy-per-cycle series, and
 * the terminal state. Every piece of state is rebuilt from the service
 * endpoints on refresh, so a page reload loses nothing. Submission is
 * blocked until every item in the batch has a chosen class, and only
 * explicitly chosen classes are ever sent.
 */

import { ApiClient, ApiError } from './api.js';
import type { CycleReport, QueryItem, StatusDoc } from './types.js';

export type SessionPhase =
  | 'loading'
  | 'training'
  | 'labeling'
  | 'submitting'
  | 'finished'
  | 'failed';

export interface AccuracyPoint {
  cycle: number;
  labeledCount: number;
  accuracy: number;
}

export interface SessionView {
  phase: SessionPhase;
  runId: string;
  cycle: number;
  totalCycles: number;
  classCount: number;
  labeledCount: number;
  poolSize: number;
  items: QueryItem[];
  /** sample_id -> chosen class, only for the current batch */
  choices: Map<number, number>;
  canSubmit: boolean;
  accuracySeries: AccuracyPoint[];
  message: string | null;
  error: string | null;
}

export class LabelingSession {
  private status: StatusDoc | null = null;
  private items: QueryItem[] = [];
  private batchCycle: number | null = null;
  private choices = new Map<number, number>();
  private reports: CycleReport[] = [];
  private phase: SessionPhase = 'loading';
  private message: string | null = null;
  private error: string | null = null;

  constructor(
    private readonly client: ApiClient,
    readonly runId: string,
  ) {}

  /** Rebuild the view from the service (poll tick / page load). */
  async refresh(): Promise<SessionView> {
    this.status = await this.client.getStatus(this.runId);
    this.reports = (await this.client.getMetrics(this.runId)).reports;
    const status = this.status.status;

    if (status === 'failed' || status === 'aborted') {
      this.phase = 'failed';
      this.error = this.status.error ?? `run ${status}`;
      return this.view();
    }
    if (status === 'finished') {
      this.phase = 'finished';
      this.items = [];
      this.choices.clear();
      return this.view();
    }
    if (status === 'waiting_for_labels') {
      const batch = await this.client.getPending(this.runId);
      if (batch.status === 'pending') {
        const cycle = batch.cycle ?? 0;
        if (this.batchCycle !== cycle) {
          // a new batch: previous choices do not carry over
          this.choices.clear();
          this.batchCycle = cycle;
        }
        this.items = batch.items;
        this.phase = 'labeling';
        return this.view();
      }
    }
    this.phase = 'training';
    this.items = [];
    return this.view();
  }

  /** Record the annotator's class choice for one sample. */
  choose(sampleId: number, classId: number): SessionView {
    if (this.phase !== 'labeling') {
      throw new Error(`cannot label in phase ${this.phase}`);
    }
    if (!this.items.some((item) => item.sample_id === sampleId)) {
      throw new Error(`sample ${sampleId} is not in the pending batch`);
    }
    const classCount = this.status?.class_count ?? 0;
    if (!Number.isInteger(classId) || classId < 0 || classId >= classCount) {
      throw new Error(`class ${classId} out of range`);
    }
    this.choices.set(sampleId, classId);
    return this.view();
  }

  get canSubmit(): boolean {
    return (
      this.phase === 'labeling' &&
      this.items.length > 0 &&
      this.items.every((item) => this.choices.has(item.sample_id))
    );
  }

  /** Send exactly the chosen labels for the pending batch. */
  async submit(): Promise<SessionView> {
    if (!this.canSubmit) {
      throw new Error('submit blocked: not every item has a chosen class');
    }
    const labels: Record<string, number> = {};
    for (const item of this.items) {
      labels[String(item.sample_id)] = this.choices.get(item.sample_id)!;
    }
    this.phase = 'submitting';
    try {
      await this.client.submitLabels(this.runId, labels);
      this.message = `batch for cycle ${this.batchCycle} submitted`;
      this.error = null;
    } catch (err) {
      // validation errors keep the entered labels so nothing is lost
      this.phase = 'labeling';
      this.error = err instanceof ApiError ? err.detail : String(err);
      return this.view();
    }
    return this.refresh();
  }

  view(): SessionView {
    return {
      phase: this.phase,
      runId: this.runId,
      cycle: this.batchCycle ?? this.status?.cycle ?? 0,
      totalCycles: this.status?.cycles ?? 0,
      classCount: this.status?.class_count ?? 0,
      labeledCount: this.status?.labeled_count ?? 0,
      poolSize: this.status?.pool_size ?? 0,
      items: [...this.items],
      choices: new Map(this.choices),
      canSubmit: this.canSubmit,
      accuracySeries: this.reports.map((report) => ({
        cycle: report.cycle,
        labeledCount: report.labeled_count,
        accuracy: report.test_accuracy,
      })),
      message: this.message,
      error: this.error,
    };
  }
}

/** Create a run and wait until its first batch (or a terminal state). */
export async function startSession(
  client: ApiClient,
  config: unknown,
  pollMs = 200,
  sleep: (ms: number) => Promise<void> = (ms) =>
    new Promise((resolve) => setTimeout(resolve, ms)),
): Promise<LabelingSession> {
  const { run_id } = await client.createRun(config);
  const session = new LabelingSession(client, run_id);
  for (;;) {
    const view = await session.refresh();
    if (view.phase !== 'training' && view.phase !== 'loading') return session;
    await sleep(pollMs);
  }
}
