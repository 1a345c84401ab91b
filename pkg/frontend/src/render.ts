/** SVG/HTML string renderers.
 *
 * Pure functions from view state to markup, so they are testable without
 * a DOM; app.ts injects the strings into the page.
 */

import type { AccuracyPoint, SessionView } from './session.js';
import type { QueryItem } from './types.js';

/** Distinguishable class colors; cycles past 10 classes. */
export const CLASS_PALETTE = [
  '#4c78a8', '#f58518', '#54a24b', '#e45756', '#72b7b2',
  '#eeca3b', '#b279a2', '#ff9da6', '#9d755d', '#bab0ac',
];

export function classColor(classId: number): string {
  return CLASS_PALETTE[((classId % CLASS_PALETTE.length) + CLASS_PALETTE.length) % CLASS_PALETTE.length]!;
}

function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function fmt(x: number, digits = 3): string {
  return Number.isFinite(x) ? x.toFixed(digits) : '-';
}

/** Scatter of the pending batch in its 2-D projection.
 *
 * Fill shows the annotator's chosen class (gray until chosen); the ring
 * shows the model's current guess; radius grows with dispersion.
 */
export function renderScatter(
  items: QueryItem[],
  choices: Map<number, number>,
  width = 420,
  height = 320,
): string {
  if (items.length === 0) {
    return `<svg class="scatter" width="${width}" height="${height}"></svg>`;
  }
  const xs = items.map((item) => item.projection[0]);
  const ys = items.map((item) => item.projection[1]);
  const pad = 24;
  const xmin = Math.min(...xs);
  const xmax = Math.max(...xs);
  const ymin = Math.min(...ys);
  const ymax = Math.max(...ys);
  const sx = (x: number) =>
    xmax === xmin ? width / 2 : pad + ((x - xmin) / (xmax - xmin)) * (width - 2 * pad);
  const sy = (y: number) =>
    ymax === ymin ? height / 2 : height - pad - ((y - ymin) / (ymax - ymin)) * (height - 2 * pad);

  const points = items
    .map((item) => {
      const chosen = choices.get(item.sample_id);
      const fill = chosen === undefined ? '#d0d0d0' : classColor(chosen);
      const ring = classColor(item.predicted_class);
      const radius = 4 + 6 * item.dispersion_score;
      const title =
        `sample ${item.sample_id} | dispersion ${fmt(item.dispersion_score)}` +
        ` | model says ${item.predicted_class}` +
        (chosen === undefined ? '' : ` | labeled ${chosen}`);
      return (
        `<circle data-sample="${item.sample_id}" cx="${fmt(sx(item.projection[0]), 1)}"` +
        ` cy="${fmt(sy(item.projection[1]), 1)}" r="${fmt(radius, 1)}"` +
        ` fill="${fill}" stroke="${ring}" stroke-width="2">` +
        `<title>${esc(title)}</title></circle>`
      );
    })
    .join('');
  return `<svg class="scatter" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">${points}</svg>`;
}

/** One labelable card per batch item. */
export function renderBatchCards(
  items: QueryItem[],
  choices: Map<number, number>,
  classCount: number,
): string {
  const cards = items
    .map((item) => {
      const chosen = choices.get(item.sample_id);
      const buttons = Array.from({ length: classCount }, (_, classId) => {
        const active = chosen === classId ? ' active' : '';
        return (
          `<button class="class-btn${active}" data-sample="${item.sample_id}"` +
          ` data-class="${classId}" style="--class-color:${classColor(classId)}">` +
          `${classId}</button>`
        );
      }).join('');
      const preview = item.features
        .slice(0, 4)
        .map((v) => fmt(v, 2))
        .join(', ');
      const ellipsis = item.features.length > 4 ? ', ...' : '';
      return (
        `<div class="card" data-sample="${item.sample_id}">` +
        `<div class="card-head">#${item.sample_id}` +
        `<span class="disp">dispersion ${fmt(item.dispersion_score)}</span></div>` +
        `<div class="card-feats">[${esc(preview)}${ellipsis}]</div>` +
        `<div class="card-guess">model says <b style="color:${classColor(item.predicted_class)}">` +
        `${item.predicted_class}</b></div>` +
        `<div class="card-classes">${buttons}</div>` +
        `</div>`
      );
    })
    .join('');
  return `<div class="cards">${cards}</div>`;
}

/** Test-accuracy-per-cycle line chart. */
export function renderAccuracyChart(
  series: AccuracyPoint[],
  width = 420,
  height = 220,
): string {
  const pad = 34;
  if (series.length === 0) {
    return `<svg class="chart" width="${width}" height="${height}"></svg>`;
  }
  const counts = series.map((p) => p.labeledCount);
  const xmin = Math.min(...counts);
  const xmax = Math.max(...counts);
  const sx = (c: number) =>
    xmax === xmin ? width / 2 : pad + ((c - xmin) / (xmax - xmin)) * (width - 2 * pad);
  const sy = (a: number) => height - pad - a * (height - 2 * pad);
  const path = series
    .map((p, i) => `${i === 0 ? 'M' : 'L'}${fmt(sx(p.labeledCount), 1)},${fmt(sy(p.accuracy), 1)}`)
    .join(' ');
  const dots = series
    .map(
      (p) =>
        `<circle class="chart-pt" cx="${fmt(sx(p.labeledCount), 1)}" cy="${fmt(sy(p.accuracy), 1)}" r="3">` +
        `<title>cycle ${p.cycle}: ${fmt(p.accuracy)} @ ${p.labeledCount} labels</title></circle>`,
    )
    .join('');
  const labels = series
    .map(
      (p) =>
        `<text x="${fmt(sx(p.labeledCount), 1)}" y="${height - 12}" text-anchor="middle" class="tick">` +
        `${p.labeledCount}</text>`,
    )
    .join('');
  return (
    `<svg class="chart" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
    `<line x1="${pad}" y1="${sy(0)}" x2="${width - pad}" y2="${sy(0)}" class="axis"/>` +
    `<line x1="${pad}" y1="${sy(0)}" x2="${pad}" y2="${sy(1)}" class="axis"/>` +
    `<text x="${pad - 6}" y="${sy(1) + 4}" text-anchor="end" class="tick">1.0</text>` +
    `<text x="${pad - 6}" y="${sy(0) + 4}" text-anchor="end" class="tick">0.0</text>` +
    `<path d="${path}" class="chart-line" fill="none"/>` +
    dots +
    labels +
    `</svg>`
  );
}

/** Status banner, including the terminal budget-exhausted state. */
export function renderStatusLine(view: SessionView): string {
  const base =
    `run ${esc(view.runId)} | strategy batch cycle ${view.cycle + 1}/${view.totalCycles}` +
    ` | ${view.labeledCount}/${view.poolSize} labeled`;
  switch (view.phase) {
    case 'finished':
      return `<span class="done">budget exhausted - ${view.labeledCount}/${view.poolSize} labeled</span>`;
    case 'failed':
      return `<span class="fail">${esc(view.error ?? 'run failed')}</span>`;
    case 'training':
      return `<span>${base} | model training...</span>`;
    case 'labeling':
      return `<span>${base} | ${view.choices.size}/${view.items.length} items labeled</span>`;
    case 'submitting':
      return `<span>${base} | submitting...</span>`;
    default:
      return `<span>loading...</span>`;
  }
}
