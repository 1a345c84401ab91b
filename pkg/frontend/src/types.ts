/** Documents exchanged with the labeling service. */

export interface QueryItem {
  sample_id: number;
  features: number[];
  projection: [number, number];
  predicted_class: number;
  dispersion_score: number;
}

export type BatchStatus = 'none' | 'pending' | 'complete';

export interface QueryBatch {
  run_id: string;
  cycle?: number;
  items: QueryItem[];
  status: BatchStatus;
}

export type RunStatus =
  | 'created'
  | 'training'
  | 'waiting_for_labels'
  | 'finished'
  | 'failed'
  | 'aborted';

export interface StatusDoc {
  run_id: string;
  status: RunStatus;
  error: string | null;
  cycle: number;
  cycles: number;
  strategy: string;
  labeled_count: number;
  pool_size: number;
  class_count: number;
  budget_per_cycle: number;
  seed: number;
}

export interface CycleReport {
  strategy: string;
  seed: number;
  cycle: number;
  labeled_count: number;
  test_accuracy: number;
  queried: number[];
  query_scores: number[] | null;
  wall_time_seconds: number;
}

export interface MetricsDoc {
  run_id: string;
  reports: CycleReport[];
}

/** sample_id -> chosen class id */
export type LabelMap = Record<string, number>;

export interface RunConfig {
  dataset: unknown;
  initial_fraction: number;
  budget_per_cycle_fraction: number;
  cycles: number;
  strategy: string;
  seeds: number[];
  oracle_mode: 'interactive' | 'simulated';
  learner: Record<string, unknown>;
}
