#!/usr/bin/env node
/**
 * Figure renderer for simulator outputs.
 *
 * Usage:
 *   render --spec <figure.json> [--out <file.svg>]
 *   render --sweep <sweep.csv> [--critical <critical.json>] --out <file.svg>
 *
 * Trace paths inside a spec resolve relative to the spec file; the output
 * path resolves relative to the working directory (or the spec file when
 * given inside the spec). Rendering is read-only over its inputs and
 * idempotent.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { parseArgs } from "node:util";

import { parseSweepCsv, parseTraceCsv, SweepRow, TraceData } from "./csv.js";
import { FigureSpec, validateSpec } from "./spec.js";
import { defaultColor, lineChart, Series } from "./svg.js";

const CHANNEL_LABELS: Record<string, string> = {
  vdc2: "DC-link voltage squared (p.u.)",
  vpll: "PCC voltage magnitude (p.u.)",
  iref_d: "d-axis current reference (p.u.)",
  iref_q: "q-axis current reference (p.u.)",
};

export function renderSpec(specPath: string, outOverride?: string): string {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(specPath, "utf8"));
  } catch (err) {
    throw new Error(`cannot read figure spec ${specPath}: ${(err as Error).message}`);
  }
  const spec: FigureSpec = validateSpec(raw);
  const specDir = dirname(resolve(specPath));

  const series: Series[] = spec.traces.map((ref, i) => {
    const path = resolve(specDir, ref.path);
    const trace: TraceData = parseTraceCsv(readFileSync(path, "utf8"), ref.path);
    return {
      x: trace.t,
      y: trace[spec.channel],
      label: ref.label,
      color: ref.color ?? defaultColor(i),
    };
  });

  const svg = lineChart(series, {
    title: spec.title,
    xlabel: "time (s)",
    ylabel: CHANNEL_LABELS[spec.channel],
    xlim: spec.xlim,
    ylim: spec.ylim,
    markers: spec.markers,
  });

  const outPath = outOverride
    ? resolve(outOverride)
    : resolve(specDir, spec.output);
  mkdirSync(dirname(outPath), { recursive: true });
  writeFileSync(outPath, svg);
  return outPath;
}

interface CriticalEntry {
  critical_xg: number;
}

export function renderSweep(
  sweepPath: string,
  outPath: string,
  criticalPath?: string,
): string {
  const rows: SweepRow[] = parseSweepCsv(
    readFileSync(sweepPath, "utf8"),
    sweepPath,
  );
  const modes = [...new Set(rows.map((r) => r.mode))];
  const series: Series[] = modes.map((mode, i) => {
    const points = rows
      .filter((r) => r.mode === mode)
      .sort((a, b) => a.xgFault - b.xgFault);
    return {
      x: points.map((p) => p.xgFault),
      y: points.map((p) => (p.stable ? 1 : 0)),
      label: mode,
      color: defaultColor(i),
      stepped: true,
    };
  });

  const markers: { t: number; label: string }[] = [];
  if (criticalPath) {
    const critical = JSON.parse(readFileSync(criticalPath, "utf8")) as Record<
      string,
      CriticalEntry
    >;
    for (const [mode, entry] of Object.entries(critical)) {
      if (typeof entry?.critical_xg === "number") {
        markers.push({
          t: entry.critical_xg,
          label: `${mode} ${entry.critical_xg.toFixed(3)}`,
        });
      }
    }
  }

  const svg = lineChart(series, {
    title: "Post-fault stability vs grid reactance",
    xlabel: "fault grid reactance (p.u.)",
    ylabel: "classified stable",
    ylim: [-0.1, 1.15],
    markers,
  });
  const out = resolve(outPath);
  mkdirSync(dirname(out), { recursive: true });
  writeFileSync(out, svg);
  return out;
}

export function main(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      spec: { type: "string" },
      sweep: { type: "string" },
      critical: { type: "string" },
      out: { type: "string" },
    },
  });
  try {
    if (values.spec) {
      const out = renderSpec(values.spec, values.out);
      console.log(`wrote ${out}`);
      return 0;
    }
    if (values.sweep) {
      if (!values.out) {
        throw new Error("--sweep requires --out <file.svg>");
      }
      const out = renderSweep(values.sweep, values.out, values.critical);
      console.log(`wrote ${out}`);
      return 0;
    }
    throw new Error(
      "usage: render --spec <figure.json> [--out f.svg] | " +
        "render --sweep <sweep.csv> [--critical <critical.json>] --out f.svg",
    );
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  resolve(process.argv[1]) === fileURLToPath(import.meta.url);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
