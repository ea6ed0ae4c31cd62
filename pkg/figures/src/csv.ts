/**
 * Strict parsers for the simulator's CSV outputs.
 *
 * Both schemas are fixed by the producing tool; any missing, unexpected or
 * non-numeric column is reported by name so a corrupted file fails loudly
 * rather than rendering garbage.
 */

export const TRACE_COLUMNS = [
  "t",
  "vdc2",
  "vpll",
  "iref_d",
  "iref_q",
  "controller",
  "phase",
] as const;

export type TraceColumn = (typeof TRACE_COLUMNS)[number];
export type TraceChannel = "vdc2" | "vpll" | "iref_d" | "iref_q";

export interface TraceData {
  t: number[];
  vdc2: number[];
  vpll: number[];
  iref_d: number[];
  iref_q: number[];
  controller: string[];
  phase: string[];
}

export interface SweepRow {
  mode: string;
  xgFault: number;
  stable: boolean;
}

const NUMERIC_TRACE: ReadonlySet<string> = new Set([
  "t",
  "vdc2",
  "vpll",
  "iref_d",
  "iref_q",
]);

function splitLines(text: string): string[] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0);
}

function checkHeader(
  name: string,
  header: string[],
  expected: readonly string[],
): void {
  for (const column of expected) {
    if (!header.includes(column)) {
      throw new Error(`${name}: missing column '${column}'`);
    }
  }
  for (const column of header) {
    if (!expected.includes(column)) {
      throw new Error(`${name}: unexpected column '${column}'`);
    }
  }
}

function parseNumber(
  name: string,
  column: string,
  row: number,
  cell: string,
): number {
  const value = Number(cell);
  if (cell.trim() === "" || !Number.isFinite(value)) {
    throw new Error(
      `${name}: row ${row}, column '${column}': expected a number, got '${cell}'`,
    );
  }
  return value;
}

/** Parse a simulation trace; `name` labels the source in error messages. */
export function parseTraceCsv(text: string, name = "trace.csv"): TraceData {
  const lines = splitLines(text);
  if (lines.length === 0) {
    throw new Error(`${name}: file is empty`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  checkHeader(name, header, TRACE_COLUMNS);
  if (lines.length === 1) {
    throw new Error(`${name}: no data rows`);
  }
  const index = new Map(header.map((column, i) => [column, i]));
  const data: TraceData = {
    t: [],
    vdc2: [],
    vpll: [],
    iref_d: [],
    iref_q: [],
    controller: [],
    phase: [],
  };
  for (let r = 1; r < lines.length; r++) {
    const cells = lines[r].split(",");
    if (cells.length !== header.length) {
      throw new Error(
        `${name}: row ${r} has ${cells.length} fields, expected ${header.length}`,
      );
    }
    for (const column of TRACE_COLUMNS) {
      const cell = cells[index.get(column)!];
      if (NUMERIC_TRACE.has(column)) {
        (data[column] as number[]).push(parseNumber(name, column, r, cell));
      } else {
        (data[column] as string[]).push(cell.trim());
      }
    }
  }
  return data;
}

const SWEEP_COLUMNS = ["mode", "xg_fault", "stable"] as const;

/** Parse a stability-sweep table (one classified run per row). */
export function parseSweepCsv(text: string, name = "sweep.csv"): SweepRow[] {
  const lines = splitLines(text);
  if (lines.length === 0) {
    throw new Error(`${name}: file is empty`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  checkHeader(name, header, SWEEP_COLUMNS);
  const index = new Map(header.map((column, i) => [column, i]));
  const rows: SweepRow[] = [];
  for (let r = 1; r < lines.length; r++) {
    const cells = lines[r].split(",");
    if (cells.length !== header.length) {
      throw new Error(
        `${name}: row ${r} has ${cells.length} fields, expected ${header.length}`,
      );
    }
    const stableCell = cells[index.get("stable")!].trim().toLowerCase();
    if (stableCell !== "true" && stableCell !== "false") {
      throw new Error(
        `${name}: row ${r}, column 'stable': expected true/false, got '${stableCell}'`,
      );
    }
    rows.push({
      mode: cells[index.get("mode")!].trim(),
      xgFault: parseNumber(name, "xg_fault", r, cells[index.get("xg_fault")!]),
      stable: stableCell === "true",
    });
  }
  return rows;
}
