/**
 * Figure specification files: which traces to overlay, which channel to
 * plot, where the event markers sit, and where the image goes. Validation
 * names the offending field.
 */

import { TraceChannel } from "./csv.js";

export interface TraceRef {
  path: string;
  label: string;
  color?: string;
}

export interface MarkerSpec {
  t: number;
  label: string;
}

export interface FigureSpec {
  title?: string;
  channel: TraceChannel;
  traces: TraceRef[];
  markers: MarkerSpec[];
  xlim?: [number, number];
  ylim?: [number, number];
  output: string;
}

const CHANNELS = ["vdc2", "vpll", "iref_d", "iref_q"];

function fail(field: string, message: string): never {
  throw new Error(`figure spec: ${field}: ${message}`);
}

function requireString(obj: Record<string, unknown>, field: string): string {
  const value = obj[field.split(".").pop() as string];
  if (typeof value !== "string" || value.length === 0) {
    fail(field, "expected a non-empty string");
  }
  return value;
}

function optionalRange(
  obj: Record<string, unknown>,
  field: string,
): [number, number] | undefined {
  const value = obj[field];
  if (value === undefined) return undefined;
  if (
    !Array.isArray(value) ||
    value.length !== 2 ||
    value.some((v) => typeof v !== "number" || !Number.isFinite(v)) ||
    value[0] >= value[1]
  ) {
    fail(field, "expected [low, high] with low < high");
  }
  return [value[0], value[1]];
}

export function validateSpec(raw: unknown): FigureSpec {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("figure spec: expected a JSON object");
  }
  const obj = raw as Record<string, unknown>;

  const channel = requireString(obj, "channel");
  if (!CHANNELS.includes(channel)) {
    fail("channel", `expected one of ${CHANNELS.join(", ")}, got '${channel}'`);
  }

  if (!Array.isArray(obj.traces) || obj.traces.length === 0) {
    fail("traces", "expected a non-empty array");
  }
  const traces = (obj.traces as unknown[]).map((entry, i) => {
    if (typeof entry !== "object" || entry === null) {
      fail(`traces[${i}]`, "expected an object with path and label");
    }
    const t = entry as Record<string, unknown>;
    const ref: TraceRef = {
      path: requireString(t, `traces[${i}].path`),
      label: requireString(t, `traces[${i}].label`),
    };
    if (t.color !== undefined) {
      if (typeof t.color !== "string") fail(`traces[${i}].color`, "expected a string");
      ref.color = t.color;
    }
    return ref;
  });

  const markersRaw = obj.markers ?? [];
  if (!Array.isArray(markersRaw)) {
    fail("markers", "expected an array");
  }
  const markers = (markersRaw as unknown[]).map((entry, i) => {
    if (typeof entry !== "object" || entry === null) {
      fail(`markers[${i}]`, "expected an object with t and label");
    }
    const m = entry as Record<string, unknown>;
    if (typeof m.t !== "number" || !Number.isFinite(m.t)) {
      fail(`markers[${i}].t`, "expected a finite number");
    }
    return { t: m.t as number, label: requireString(m, `markers[${i}].label`) };
  });

  const spec: FigureSpec = {
    channel: channel as TraceChannel,
    traces,
    markers,
    output: requireString(obj, "output"),
  };
  if (obj.title !== undefined) {
    if (typeof obj.title !== "string") fail("title", "expected a string");
    spec.title = obj.title;
  }
  const xlim = optionalRange(obj, "xlim");
  if (xlim) spec.xlim = xlim;
  const ylim = optionalRange(obj, "ylim");
  if (ylim) spec.ylim = ylim;
  return spec;
}
