import { mkdtempSync, existsSync, readFileSync, readdirSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

import { describe, expect, it } from 'vitest';

import { plotConvergence } from '../src/plotConvergence.js';

const FIXTURES = join(__dirname, 'fixtures');

function refinementSummaries(): string[] {
  return readdirSync(FIXTURES)
    .filter((name) => name.includes('riesz0.5_eta0.1') && name.endsWith('.json'))
    .sort()
    .map((name) => join(FIXTURES, name));
}

function outFile(): string {
  return join(mkdtempSync(join(tmpdir(), 'plots-')), 'conv.svg');
}

function syntheticSummary(dir: string, rf: number, eta: number, err: number): string {
  const path = join(dir, `synthetic_rf${rf}_eta${eta}.json`);
  writeFileSync(path, JSON.stringify({
    config: { rf, eta, mode: 'manufactured' },
    max_error: err,
  }));
  return path;
}

describe('plotConvergence', () => {
  it('renders the refinement study against a slope-2 reference', () => {
    const out = outFile();
    const groups = plotConvergence({ summaryPaths: refinementSummaries(), outPath: out });
    const svg = readFileSync(out, 'utf8');
    expect(svg).toContain('reference-annotation');
    expect(svg).toContain('order-annotation');
    const [group] = groups.filter((g) => g.eta === 0.1);
    expect(group.points.length).toBe(4);
    expect(group.order).not.toBeNull();
    expect(group.order!).toBeGreaterThan(1.6);
    expect(group.order!).toBeLessThan(2.4);
  });

  it('puts exactly quadratic data parallel to the reference', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    const paths = [0, 1, 2, 3].map((rf) =>
      syntheticSummary(dir, rf, 0.5, 0.08 * Math.pow(4, -rf)));
    const [group] = plotConvergence({ summaryPaths: paths, outPath: join(dir, 'f.svg') });
    expect(group.order!).toBeCloseTo(2.0, 10);
  });

  it('draws points only, without order annotation, for a single level', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    const path = syntheticSummary(dir, 0, 0.1, 0.05);
    const out = join(dir, 'single.svg');
    const groups = plotConvergence({ summaryPaths: [path], outPath: out });
    expect(groups[0].order).toBeNull();
    const svg = readFileSync(out, 'utf8');
    expect(svg).toContain('<circle');
    expect(svg).not.toContain('order-annotation');
    expect(svg).not.toContain('reference-annotation');
  });

  it('fails loudly on missing or nonpositive errors', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    const bad = join(dir, 'bad.json');
    writeFileSync(bad, JSON.stringify({ config: { rf: 0, eta: 0.1 }, max_error: null }));
    const out = join(dir, 'bad.svg');
    expect(() => plotConvergence({ summaryPaths: [bad], outPath: out }))
      .toThrow(/max_error/);
    expect(existsSync(out)).toBe(false);
    expect(() => plotConvergence({ summaryPaths: [], outPath: out }))
      .toThrow(/no summary inputs/);
  });
});
