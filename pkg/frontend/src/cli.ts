#!/usr/bin/env node
/** CLI entry: `plot-norms` and `plot-convergence` over memstab run outputs. */

import { basename } from 'path';

import { NormColumn } from './csv.js';
import { plotConvergence } from './plotConvergence.js';
import { plotNorms } from './plotNorms.js';

interface Parsed {
  lists: Map<string, string[]>;
  scalars: Map<string, string>;
}

function parseArgs(argv: string[], listFlags: string[], scalarFlags: string[]): Parsed {
  const lists = new Map<string, string[]>();
  const scalars = new Map<string, string>();
  let current: string | null = null;
  for (const arg of argv) {
    if (arg.startsWith('--')) {
      const name = arg.slice(2);
      if (listFlags.includes(name)) {
        current = name;
        if (!lists.has(name)) lists.set(name, []);
      } else if (scalarFlags.includes(name)) {
        current = `=${name}`;
      } else {
        throw new Error(`unknown flag --${name}`);
      }
    } else if (current === null) {
      throw new Error(`unexpected positional argument ${arg}`);
    } else if (current.startsWith('=')) {
      scalars.set(current.slice(1), arg);
      current = null;
    } else {
      lists.get(current)!.push(arg);
    }
  }
  return { lists, scalars };
}

function runPlotNorms(argv: string[]): void {
  const { lists, scalars } = parseArgs(argv, ['csv'], ['series', 'out', 'window']);
  const csvPaths = lists.get('csv') ?? [];
  const outPath = scalars.get('out');
  if (!outPath) throw new Error('missing --out');
  const series = (scalars.get('series') ?? 'norm_y') as NormColumn;
  let window: [number, number] | undefined;
  const windowText = scalars.get('window');
  if (windowText) {
    const parts = windowText.split(',').map(Number);
    if (parts.length !== 2 || parts.some((v) => !Number.isFinite(v))) {
      throw new Error(`cannot parse --window ${windowText}`);
    }
    window = [parts[0], parts[1]];
  }
  const results = plotNorms({ csvPaths, series, outPath, window });
  for (const r of results) {
    console.log(`${r.label}: rate=${r.rate >= 0 ? '+' : ''}${r.rate.toFixed(2)}`);
  }
  console.log(`wrote ${outPath}`);
}

function runPlotConvergence(argv: string[]): void {
  const { lists, scalars } = parseArgs(argv, ['summary'], ['out']);
  const summaryPaths = lists.get('summary') ?? [];
  const outPath = scalars.get('out');
  if (!outPath) throw new Error('missing --out');
  const groups = plotConvergence({ summaryPaths, outPath });
  for (const g of groups) {
    const order = g.order === null ? 'undefined' : g.order.toFixed(2);
    console.log(`eta=${g.eta}: ${g.points.length} level(s), order ${order}`);
  }
  console.log(`wrote ${outPath}`);
}

export function main(argv = process.argv): number {
  const invoked = basename(argv[1] ?? '');
  let command = invoked === 'plot-norms' || invoked === 'plot-convergence'
    ? invoked
    : argv[2];
  let rest = invoked === command ? argv.slice(2) : argv.slice(3);
  if (command !== 'plot-norms' && command !== 'plot-convergence') {
    console.error('usage: plot-norms --csv A.csv [B.csv ...] --series norm_y --out fig.svg\n' +
                  '       plot-convergence --summary s0.json [s1.json ...] --out fig.svg');
    return 2;
  }
  try {
    if (command === 'plot-norms') runPlotNorms(rest);
    else runPlotConvergence(rest);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 1;
  }
}

const thisFile = new URL(import.meta.url).pathname;
if (process.argv[1] && (process.argv[1] === thisFile
    || basename(process.argv[1]).startsWith('plot-'))) {
  process.exit(main());
}
