/** DOM wiring: connects the session state machine to the page.
 *
 * All state lives in the LabelingSession and is rebuilt from the service
 * on every poll tick, so reloading the page mid-run is safe.
 */

import { ApiClient } from './api.js';
import { LabelingSession } from './session.js';
import {
  renderAccuracyChart,
  renderBatchCards,
  renderScatter,
  renderStatusLine,
} from './render.js';

const POLL_MS = 750;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let session: LabelingSession | null = null;
let busy = false;

function draw(): void {
  if (!session) return;
  const view = session.view();
  el('status-line').innerHTML = renderStatusLine(view);
  el('scatter-box').innerHTML = renderScatter(view.items, view.choices);
  el('cards-box').innerHTML = renderBatchCards(view.items, view.choices, view.classCount);
  el('chart-box').innerHTML = renderAccuracyChart(view.accuracySeries);
  const submit = el<HTMLButtonElement>('submit-btn');
  submit.disabled = !view.canSubmit;
  submit.textContent = view.canSubmit
    ? `submit ${view.items.length} labels`
    : `label all ${view.items.length} items to submit`;
  el('error-box').textContent = view.error ?? '';
  el('message-box').textContent = view.message ?? '';
}

async function poll(): Promise<void> {
  if (!session || busy) return;
  const phase = session.view().phase;
  if (phase === 'training' || phase === 'loading' || phase === 'submitting') {
    try {
      await session.refresh();
    } catch {
      // transient polling errors: try again next tick
    }
    draw();
  }
}

async function connect(): Promise<void> {
  const base = el<HTMLInputElement>('service-url').value.replace(/\/+$/, '');
  const runId = el<HTMLInputElement>('run-id').value.trim();
  const client = new ApiClient(base);
  if (runId) {
    session = new LabelingSession(client, runId);
  } else {
    const configText = el<HTMLTextAreaElement>('config-box').value;
    const { run_id } = await client.createRun(JSON.parse(configText));
    session = new LabelingSession(client, run_id);
    el<HTMLInputElement>('run-id').value = run_id;
  }
  await session.refresh();
  draw();
}

function onCardClick(event: Event): void {
  const target = event.target as HTMLElement;
  if (!session || !target.matches('button.class-btn')) return;
  const sampleId = Number(target.dataset.sample);
  const classId = Number(target.dataset.class);
  session.choose(sampleId, classId);
  draw();
}

async function onSubmit(): Promise<void> {
  if (!session || busy) return;
  busy = true;
  try {
    await session.submit();
  } finally {
    busy = false;
  }
  draw();
}

export function init(): void {
  el('connect-btn').addEventListener('click', () => {
    connect().catch((err) => {
      el('error-box').textContent = String(err);
    });
  });
  el('cards-box').addEventListener('click', onCardClick);
  el('submit-btn').addEventListener('click', () => {
    onSubmit().catch((err) => {
      el('error-box').textContent = String(err);
    });
  });
  window.setInterval(() => void poll(), POLL_MS);
}

init();
