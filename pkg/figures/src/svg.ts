/**
 * Minimal hand-rolled SVG chart renderer: line series over a framed plot
 * area with nice-number ticks, dashed vertical event markers labelled along
 * the top edge, and a legend. No DOM, no dependencies; returns the SVG
 * document as a string.
 */

export interface Series {
  x: number[];
  y: number[];
  label: string;
  color: string;
  /** draw as a step function (used by stability sweeps) */
  stepped?: boolean;
}

export interface EventMarker {
  t: number;
  label: string;
}

export interface ChartOptions {
  title?: string;
  xlabel: string;
  ylabel: string;
  xlim?: [number, number];
  ylim?: [number, number];
  markers?: EventMarker[];
  width?: number;
  height?: number;
  /** extra dashed horizontal guides, e.g. a reference level */
  hguides?: number[];
}

const PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

export function defaultColor(i: number): string {
  return PALETTE[i % PALETTE.length];
}

/** Round-valued tick positions covering [lo, hi] (1/2/5 ladder). */
export function niceTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) {
    const pad = Math.max(Math.abs(lo) * 0.1, 1e-9);
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  const rawStep = span / Math.max(count - 1, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= rawStep) {
      step = m * mag;
      break;
    }
  }
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function formatTick(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e4 || abs < 1e-3) return value.toExponential(1);
  return String(parseFloat(value.toPrecision(6)));
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Per-pixel min/max decimation. Keeps oscillation envelopes intact while
 * holding polyline sizes down for long traces.
 */
export function decimateMinMax(
  x: number[],
  y: number[],
  maxBins: number,
): { x: number[]; y: number[] } {
  if (x.length <= 2 * maxBins) {
    return { x, y };
  }
  const xo: number[] = [];
  const yo: number[] = [];
  const per = x.length / maxBins;
  for (let b = 0; b < maxBins; b++) {
    const start = Math.floor(b * per);
    const end = Math.min(Math.floor((b + 1) * per), x.length);
    if (start >= end) continue;
    let iMin = start;
    let iMax = start;
    for (let i = start; i < end; i++) {
      if (y[i] < y[iMin]) iMin = i;
      if (y[i] > y[iMax]) iMax = i;
    }
    const first = Math.min(iMin, iMax);
    const second = Math.max(iMin, iMax);
    xo.push(x[first], x[second]);
    yo.push(y[first], y[second]);
  }
  return { x: xo, y: yo };
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}

export function lineChart(series: Series[], opts: ChartOptions): string {
  if (series.length === 0 || series.every((s) => s.x.length === 0)) {
    throw new Error("nothing to plot: every series is empty");
  }
  const width = opts.width ?? 760;
  const height = opts.height ?? 420;
  const margin = { left: 64, right: 18, top: opts.title ? 40 : 26, bottom: 48 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;

  let [xLo, xHi] = opts.xlim ?? extent(series.flatMap((s) => s.x));
  let [yLo, yHi] = opts.ylim ?? extent(series.flatMap((s) => s.y));
  if (!(xHi > xLo)) [xLo, xHi] = [xLo - 0.5, xHi + 0.5];
  if (!(yHi > yLo)) [yLo, yHi] = [yLo - 0.5, yHi + 0.5];
  if (!opts.ylim) {
    const pad = 0.06 * (yHi - yLo);
    yLo -= pad;
    yHi += pad;
  }

  const sx = (v: number) => margin.left + ((v - xLo) / (xHi - xLo)) * plotW;
  const sy = (v: number) => margin.top + plotH - ((v - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<clipPath id="plot"><rect x="${margin.left}" y="${margin.top}" ` +
      `width="${plotW}" height="${plotH}"/></clipPath>`,
  );

  // grid and ticks
  for (const tick of niceTicks(xLo, xHi)) {
    const px = sx(tick);
    parts.push(
      `<line x1="${px.toFixed(1)}" y1="${margin.top}" x2="${px.toFixed(1)}" ` +
        `y2="${margin.top + plotH}" stroke="#e5e5e5" stroke-width="1"/>`,
      `<text x="${px.toFixed(1)}" y="${margin.top + plotH + 18}" font-size="11" ` +
        `text-anchor="middle" fill="#333">${formatTick(tick)}</text>`,
    );
  }
  for (const tick of niceTicks(yLo, yHi)) {
    const py = sy(tick);
    parts.push(
      `<line x1="${margin.left}" y1="${py.toFixed(1)}" x2="${margin.left + plotW}" ` +
        `y2="${py.toFixed(1)}" stroke="#e5e5e5" stroke-width="1"/>`,
      `<text x="${margin.left - 8}" y="${(py + 4).toFixed(1)}" font-size="11" ` +
        `text-anchor="end" fill="#333">${formatTick(tick)}</text>`,
    );
  }
  for (const guide of opts.hguides ?? []) {
    const py = sy(guide);
    parts.push(
      `<line x1="${margin.left}" y1="${py.toFixed(1)}" x2="${margin.left + plotW}" ` +
        `y2="${py.toFixed(1)}" stroke="#999" stroke-width="1" stroke-dasharray="2,3"/>`,
    );
  }

  // series
  for (const s of series) {
    const { x, y } = decimateMinMax(s.x, s.y, 2 * plotW);
    const points: string[] = [];
    for (let i = 0; i < x.length; i++) {
      if (s.stepped && i > 0) {
        points.push(`${sx(x[i]).toFixed(2)},${sy(y[i - 1]).toFixed(2)}`);
      }
      points.push(`${sx(x[i]).toFixed(2)},${sy(y[i]).toFixed(2)}`);
    }
    parts.push(
      `<polyline points="${points.join(" ")}" fill="none" stroke="${s.color}" ` +
        `stroke-width="1.4" clip-path="url(#plot)"/>`,
    );
  }

  // event markers: dashed verticals labelled along the top edge
  for (const marker of opts.markers ?? []) {
    if (marker.t < xLo || marker.t > xHi) continue;
    const px = sx(marker.t);
    parts.push(
      `<line x1="${px.toFixed(1)}" y1="${margin.top}" x2="${px.toFixed(1)}" ` +
        `y2="${margin.top + plotH}" stroke="#444" stroke-width="1" ` +
        `stroke-dasharray="5,4"/>`,
      `<text x="${(px + 3).toFixed(1)}" y="${margin.top + 12}" font-size="12" ` +
        `fill="#222">${escapeXml(marker.label)}</text>`,
    );
  }

  // frame, axis labels, title
  parts.push(
    `<rect x="${margin.left}" y="${margin.top}" width="${plotW}" height="${plotH}" ` +
      `fill="none" stroke="#333" stroke-width="1"/>`,
    `<text x="${margin.left + plotW / 2}" y="${height - 10}" font-size="13" ` +
      `text-anchor="middle" fill="#111">${escapeXml(opts.xlabel)}</text>`,
    `<text x="16" y="${margin.top + plotH / 2}" font-size="13" text-anchor="middle" ` +
      `fill="#111" transform="rotate(-90 16 ${margin.top + plotH / 2})">` +
      `${escapeXml(opts.ylabel)}</text>`,
  );
  if (opts.title) {
    parts.push(
      `<text x="${margin.left + plotW / 2}" y="20" font-size="14" ` +
        `text-anchor="middle" fill="#111">${escapeXml(opts.title)}</text>`,
    );
  }

  // legend
  const legendX = margin.left + plotW - 150;
  series.forEach((s, i) => {
    const ly = margin.top + 16 + 17 * i;
    parts.push(
      `<line x1="${legendX}" y1="${ly - 4}" x2="${legendX + 22}" y2="${ly - 4}" ` +
        `stroke="${s.color}" stroke-width="2"/>`,
      `<text x="${legendX + 28}" y="${ly}" font-size="12" fill="#111">` +
        `${escapeXml(s.label)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
