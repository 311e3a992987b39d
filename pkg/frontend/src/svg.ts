/** Minimal SVG scatter/line plotting without a DOM. */

export interface Extent {
  min: number;
  max: number;
}

export function extent(values: number[]): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    throw new Error('cannot compute an extent of empty or non-finite data');
  }
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  return { min, max };
}

export function niceTicks(ext: Extent, count = 6): number[] {
  const span = ext.max - ext.min;
  const rawStep = span / Math.max(count - 1, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const candidates = [1, 2, 2.5, 5, 10].map((m) => m * mag);
  const step = candidates.find((c) => span / c <= count) ?? candidates[4];
  const start = Math.ceil(ext.min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= ext.max + 1e-9 * span; v += step) {
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

export const PALETTE = [
  '#1f77b4', '#d62728', '#2ca02c', '#9467bd',
  '#ff7f0e', '#8c564b', '#17becf', '#7f7f7f',
];

export interface Frame {
  width: number;
  height: number;
  left: number;
  right: number;
  top: number;
  bottom: number;
  x: Extent;
  y: Extent;
}

export function scaleX(frame: Frame, v: number): number {
  const { left, width, right, x } = frame;
  return left + ((v - x.min) / (x.max - x.min)) * (width - left - right);
}

export function scaleY(frame: Frame, v: number): number {
  const { top, height, bottom, y } = frame;
  return height - bottom - ((v - y.min) / (y.max - y.min)) * (height - top - bottom);
}

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

export function fmt(v: number): string {
  if (v === 0) return '0';
  const abs = Math.abs(v);
  if (abs >= 1e4 || abs < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(6)));
}

export class SvgCanvas {
  private parts: string[] = [];

  constructor(public frame: Frame) {}

  axes(xLabel: string, yLabel: string, title: string): void {
    const f = this.frame;
    const x0 = f.left;
    const x1 = f.width - f.right;
    const y0 = f.height - f.bottom;
    const y1 = f.top;
    this.parts.push(
      `<rect x="0" y="0" width="${f.width}" height="${f.height}" fill="white"/>`,
      `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`,
      `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`,
    );
    for (const tick of niceTicks(f.x)) {
      const px = scaleX(f, tick);
      this.parts.push(
        `<line x1="${px.toFixed(2)}" y1="${y0}" x2="${px.toFixed(2)}" y2="${y0 + 5}" stroke="black"/>`,
        `<text x="${px.toFixed(2)}" y="${y0 + 18}" font-size="11" text-anchor="middle">${fmt(tick)}</text>`,
      );
    }
    for (const tick of niceTicks(f.y)) {
      const py = scaleY(f, tick);
      this.parts.push(
        `<line x1="${x0 - 5}" y1="${py.toFixed(2)}" x2="${x0}" y2="${py.toFixed(2)}" stroke="black"/>`,
        `<text x="${x0 - 8}" y="${(py + 4).toFixed(2)}" font-size="11" text-anchor="end">${fmt(tick)}</text>`,
        `<line x1="${x0}" y1="${py.toFixed(2)}" x2="${x1}" y2="${py.toFixed(2)}" stroke="#dddddd" stroke-dasharray="2,4"/>`,
      );
    }
    this.parts.push(
      `<text x="${(x0 + x1) / 2}" y="${f.height - 8}" font-size="12" text-anchor="middle">${esc(xLabel)}</text>`,
      `<text x="14" y="${(y0 + y1) / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 ${(y0 + y1) / 2})">${esc(yLabel)}</text>`,
      `<text x="${(x0 + x1) / 2}" y="${f.top - 8}" font-size="13" text-anchor="middle" font-weight="bold">${esc(title)}</text>`,
    );
  }

  polyline(xs: number[], ys: number[], color: string, dashed = false): void {
    const pts = xs
      .map((x, i) => `${scaleX(this.frame, x).toFixed(2)},${scaleY(this.frame, ys[i]).toFixed(2)}`)
      .join(' ');
    const dash = dashed ? ' stroke-dasharray="6,4"' : '';
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="1.5"${dash}/>`,
    );
  }

  markers(xs: number[], ys: number[], color: string): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${scaleX(this.frame, xs[i]).toFixed(2)}" cy="${scaleY(this.frame, ys[i]).toFixed(2)}" r="3.2" fill="${color}"/>`,
      );
    }
  }

  legend(entries: { label: string; color: string; dashed?: boolean }[]): void {
    const f = this.frame;
    const x = f.width - f.right - 230;
    let y = f.top + 14;
    for (const entry of entries) {
      const dash = entry.dashed ? ' stroke-dasharray="6,4"' : '';
      this.parts.push(
        `<line x1="${x}" y1="${y - 4}" x2="${x + 24}" y2="${y - 4}" stroke="${entry.color}" stroke-width="2"${dash}/>`,
        `<text x="${x + 30}" y="${y}" font-size="11">${esc(entry.label)}</text>`,
      );
      y += 16;
    }
  }

  annotation(cls: string, series: string, text: string, x: number, y: number,
             color: string): void {
    this.parts.push(
      `<text class="${cls}" data-series="${esc(series)}" x="${x.toFixed(2)}" ` +
      `y="${y.toFixed(2)}" font-size="11" fill="${color}">${esc(text)}</text>`,
    );
  }

  render(): string {
    const f = this.frame;
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${f.width}" height="${f.height}" ` +
      `viewBox="0 0 ${f.width} ${f.height}">\n` +
      this.parts.join('\n') +
      '\n</svg>\n'
    );
  }
}
