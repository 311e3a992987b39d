/** Least-squares line fit of ln(values) over a time window.
 *
 * Mirrors the simulator's rate convention: the returned rate is the negated
 * slope, so positive rates mean decay.
 */

export interface RateFit {
  rate: number;
  intercept: number;
  window: [number, number];
}

export function lnRateFit(
  t: number[],
  values: number[],
  window?: [number, number],
): RateFit {
  if (t.length !== values.length) {
    throw new Error(`length mismatch: ${t.length} times vs ${values.length} values`);
  }
  if (t.length < 2) {
    throw new Error('need at least two samples to fit a rate');
  }
  const tEnd = t[t.length - 1];
  const [a, b] = window ?? [0.5 * tEnd, tEnd];
  const xs: number[] = [];
  const ys: number[] = [];
  for (let i = 0; i < t.length; i++) {
    if (t[i] >= a - 1e-12 && t[i] <= b + 1e-12) {
      if (!(values[i] > 0)) {
        throw new Error(
          `nonpositive sample ${values[i]} at t=${t[i]} inside the fit window`,
        );
      }
      xs.push(t[i]);
      ys.push(Math.log(values[i]));
    }
  }
  if (xs.length < 2) {
    throw new Error(`window [${a}, ${b}] selects fewer than two samples`);
  }
  const n = xs.length;
  const meanX = xs.reduce((s, v) => s + v, 0) / n;
  const meanY = ys.reduce((s, v) => s + v, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - meanX) ** 2;
    sxy += (xs[i] - meanX) * (ys[i] - meanY);
  }
  const slope = sxy / sxx;
  return { rate: -slope, intercept: meanY - slope * meanX, window: [a, b] };
}
