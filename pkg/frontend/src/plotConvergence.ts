/** Refinement-convergence figure: log2 max error vs level, slope-2 reference. */

import { readFileSync, writeFileSync } from 'fs';

import { RunSummary } from './csv.js';
import { Frame, PALETTE, SvgCanvas, extent, scaleX, scaleY } from './svg.js';

export interface PlotConvergenceOptions {
  summaryPaths: string[];
  outPath: string;
}

interface Point {
  rf: number;
  log2err: number;
}

export interface GroupResult {
  eta: number;
  points: Point[];
  order: number | null;
}

function loadPoint(path: string): { eta: number; point: Point } {
  const summary = JSON.parse(readFileSync(path, 'utf8')) as RunSummary;
  const cfg = summary.config ?? {};
  const rf = Number(cfg.rf);
  const eta = Number(cfg.eta);
  const err = summary.max_error;
  if (!Number.isInteger(rf) || !Number.isFinite(eta)) {
    throw new Error(`${path}: summary lacks config.rf / config.eta`);
  }
  if (typeof err !== 'number' || !(err > 0)) {
    throw new Error(`${path}: max_error missing or nonpositive (${err})`);
  }
  return { eta, point: { rf, log2err: Math.log2(err) } };
}

/** Mean observed order from successive log2-error drops per level. */
function observedOrder(points: Point[]): number | null {
  if (points.length < 2) return null;
  let total = 0;
  for (let i = 1; i < points.length; i++) {
    total += (points[i - 1].log2err - points[i].log2err)
      / (points[i].rf - points[i - 1].rf);
  }
  return total / (points.length - 1);
}

export function plotConvergence(options: PlotConvergenceOptions): GroupResult[] {
  if (options.summaryPaths.length === 0) {
    throw new Error('no summary inputs given');
  }
  const byEta = new Map<number, Point[]>();
  for (const path of options.summaryPaths) {
    const { eta, point } = loadPoint(path);
    const list = byEta.get(eta) ?? [];
    list.push(point);
    byEta.set(eta, list);
  }
  const groups: GroupResult[] = [...byEta.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([eta, points]) => {
      points.sort((a, b) => a.rf - b.rf);
      return { eta, points, order: observedOrder(points) };
    });

  const allPoints = groups.flatMap((g) => g.points);
  const xExt = extent(allPoints.map((p) => p.rf));
  const yExt = extent(allPoints.map((p) => p.log2err));
  const haveReference = allPoints.length >= 2 && xExt.max > xExt.min;
  if (haveReference) {
    const anchor = groups[0].points[0];
    yExt.min = Math.min(yExt.min, anchor.log2err - 2 * (xExt.max - anchor.rf));
  }
  xExt.min -= 0.2;
  xExt.max += 0.2;
  yExt.min -= 0.5;
  yExt.max += 0.5;
  const frame: Frame = {
    width: 640, height: 460, left: 60, right: 24, top: 36, bottom: 46,
    x: xExt, y: yExt,
  };
  const canvas = new SvgCanvas(frame);
  canvas.axes('refinement level', 'log2 max error', 'Convergence under refinement');

  groups.forEach((group, i) => {
    const color = PALETTE[i % PALETTE.length];
    const xs = group.points.map((p) => p.rf);
    const ys = group.points.map((p) => p.log2err);
    if (xs.length > 1) canvas.polyline(xs, ys, color);
    canvas.markers(xs, ys, color);
    if (group.order !== null) {
      canvas.annotation(
        'order-annotation', `eta=${group.eta}`,
        `order~${group.order.toFixed(2)}`,
        scaleX(frame, xs[xs.length - 1]) + 8,
        scaleY(frame, ys[ys.length - 1]),
        color,
      );
    }
  });

  const legend = groups.map((g, i) => ({
    label: `eta=${g.eta}`, color: PALETTE[i % PALETTE.length],
  }));
  if (haveReference) {
    const anchor = groups[0].points[0];
    const xs = [anchor.rf, xExt.max - 0.2];
    const ys = xs.map((x) => anchor.log2err - 2 * (x - anchor.rf));
    canvas.polyline(xs, ys, '#444444', true);
    canvas.annotation('reference-annotation', 'slope-2', 'slope -2',
                      scaleX(frame, xs[1]) - 70, scaleY(frame, ys[1]) + 16,
                      '#444444');
    legend.push({ label: 'slope -2 reference', color: '#444444' });
  }
  canvas.legend(legend);

  writeFileSync(options.outPath, canvas.render());
  return groups;
}
