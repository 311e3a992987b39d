/** Parsing of the simulator's norm-trajectory CSV files. */

export const NORM_COLUMNS = ['norm_y', 'norm_err', 'norm_yhat', 'norm_input'] as const;
export type NormColumn = (typeof NORM_COLUMNS)[number];

export interface NormTable {
  t: number[];
  columns: Record<NormColumn, number[]>;
}

const EXPECTED_HEADER = ['t', ...NORM_COLUMNS].join(',');

/** Parse one run CSV (header `t,norm_y,norm_err,norm_yhat,norm_input`). */
export function parseNormCsv(text: string, source = '<csv>'): NormTable {
  const lines = text.split(/\r?\n/).filter((line) => line.trim() !== '');
  if (lines.length === 0) {
    throw new Error(`${source}: empty CSV`);
  }
  if (lines[0].trim() !== EXPECTED_HEADER) {
    throw new Error(
      `${source}: unexpected header ${JSON.stringify(lines[0])}, ` +
      `expected ${JSON.stringify(EXPECTED_HEADER)}`,
    );
  }
  if (lines.length === 1) {
    throw new Error(`${source}: CSV has a header but no data rows`);
  }
  const t: number[] = [];
  const columns: Record<NormColumn, number[]> = {
    norm_y: [], norm_err: [], norm_yhat: [], norm_input: [],
  };
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(',');
    if (parts.length !== 5) {
      throw new Error(`${source}:${i + 1}: expected 5 fields, got ${parts.length}`);
    }
    const values = parts.map((part) => Number(part));
    if (values.some((v) => !Number.isFinite(v))) {
      throw new Error(`${source}:${i + 1}: non-numeric field in ${lines[i]}`);
    }
    t.push(values[0]);
    NORM_COLUMNS.forEach((name, j) => columns[name].push(values[j + 1]));
  }
  return { t, columns };
}

/** Run summary fields used for legends and cross-checks. */
export interface RunSummary {
  config?: Record<string, unknown>;
  rates?: { window?: [number, number]; y?: number | null; err?: number | null };
  max_error?: number | null;
  [key: string]: unknown;
}

export function summaryLabel(summary: RunSummary | null, fallback: string): string {
  const cfg = summary?.config;
  if (!cfg) return fallback;
  const parts: string[] = [];
  if (cfg.ell !== undefined) parts.push(`l=${cfg.ell}`);
  if (cfg.eta !== undefined) parts.push(`eta=${cfg.eta}`);
  if (cfg.kernel !== undefined) parts.push(`${cfg.kernel}(${cfg.gamma})`);
  if (cfg.lambda1 !== undefined && cfg.lambda2 !== undefined) {
    parts.push(`lam=(${cfg.lambda1},${cfg.lambda2})`);
  }
  if (cfg.rf !== undefined) parts.push(`rf=${cfg.rf}`);
  return parts.length > 0 ? parts.join(' ') : fallback;
}
