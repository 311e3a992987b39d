/** ln-norm trajectory figure: one line per run CSV, slope annotations. */

import { readFileSync, existsSync, writeFileSync } from 'fs';
import { basename } from 'path';

import { NormColumn, NORM_COLUMNS, RunSummary, parseNormCsv, summaryLabel } from './csv.js';
import { lnRateFit } from './fit.js';
import { Frame, PALETTE, SvgCanvas, extent, scaleX, scaleY } from './svg.js';

export interface PlotNormsOptions {
  csvPaths: string[];
  series: NormColumn;
  outPath: string;
  window?: [number, number];
}

export interface SeriesResult {
  label: string;
  rate: number;
}

function sidecarSummary(csvPath: string): RunSummary | null {
  const jsonPath = csvPath.replace(/\.csv$/, '.json');
  if (jsonPath === csvPath || !existsSync(jsonPath)) return null;
  try {
    return JSON.parse(readFileSync(jsonPath, 'utf8')) as RunSummary;
  } catch {
    return null;
  }
}

/** Render the figure and return the per-series fitted rates. */
export function plotNorms(options: PlotNormsOptions): SeriesResult[] {
  if (options.csvPaths.length === 0) {
    throw new Error('no CSV inputs given');
  }
  if (!NORM_COLUMNS.includes(options.series)) {
    throw new Error(`unknown series ${options.series}; pick one of ${NORM_COLUMNS.join(', ')}`);
  }

  const loaded = options.csvPaths.map((path) => {
    const table = parseNormCsv(readFileSync(path, 'utf8'), path);
    const values = table.columns[options.series];
    if (values.some((v) => !(v > 0))) {
      throw new Error(`${path}: ${options.series} has nonpositive samples; cannot draw ln scale`);
    }
    return {
      path,
      t: table.t,
      ln: values.map(Math.log),
      fit: lnRateFit(table.t, values, options.window),
      label: summaryLabel(sidecarSummary(path), basename(path, '.csv')),
    };
  });

  const xExt = extent(loaded.flatMap((s) => s.t));
  const yExt = extent(loaded.flatMap((s) => s.ln));
  const frame: Frame = {
    width: 760, height: 480, left: 62, right: 24, top: 36, bottom: 46,
    x: xExt, y: yExt,
  };
  const canvas = new SvgCanvas(frame);
  canvas.axes('t', `ln ||${options.series}||`, `Evolution of ${options.series}`);

  const results: SeriesResult[] = [];
  loaded.forEach((series, i) => {
    const color = PALETTE[i % PALETTE.length];
    canvas.polyline(series.t, series.ln, color);
    const tail = series.t.length - 1;
    const rateText = `rate=${series.fit.rate >= 0 ? '+' : ''}${series.fit.rate.toFixed(2)}`;
    canvas.annotation(
      'rate-annotation', series.label, rateText,
      Math.min(scaleX(frame, series.t[tail]) - 60, frame.width - frame.right - 64),
      scaleY(frame, series.ln[tail]) - 6 - 12 * i,
      color,
    );
    results.push({ label: series.label, rate: series.fit.rate });
  });
  canvas.legend(loaded.map((s, i) => ({
    label: s.label, color: PALETTE[i % PALETTE.length],
  })));

  writeFileSync(options.outPath, canvas.render());
  return results;
}
