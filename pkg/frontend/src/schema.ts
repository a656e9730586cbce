import Papa from "papaparse";

export const SCHEMA_VERSION = 1;

export const BENCH_COLUMNS = [
  "schema_version",
  "workers",
  "zipf_theta",
  "blocks",
  "committed_tx",
  "wall_clock_ms",
  "throughput_tps",
  "abort_rate",
  "early_hash_waste",
  "speedup",
] as const;

export interface BenchRow {
  workers: number;
  zipfTheta: number;
  blocks: number;
  committedTx: number;
  wallClockMs: number;
  throughputTps: number;
  abortRate: number;
  earlyHashWaste: number;
  speedup: number;
}

export class SchemaError extends Error {}

/** Parse a bench sweep CSV, rejecting unknown schemas or malformed rows. */
export function parseBench(csvText: string): BenchRow[] {
  const parsed = Papa.parse<Record<string, string>>(csvText.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`CSV parse error: ${parsed.errors[0].message}`);
  }
  const header = parsed.meta.fields ?? [];
  const expected = BENCH_COLUMNS as readonly string[];
  if (header.length !== expected.length ||
      expected.some((col, i) => header[i] !== col)) {
    throw new SchemaError(
      `unexpected header [${header.join(",")}]; want [${expected.join(",")}]`);
  }
  return parsed.data.map((raw, i) => {
    const version = Number(raw.schema_version);
    if (version !== SCHEMA_VERSION) {
      throw new SchemaError(
        `row ${i + 1}: schema_version ${raw.schema_version} unsupported ` +
        `(expected ${SCHEMA_VERSION})`);
    }
    const num = (field: string): number => {
      const value = Number(raw[field]);
      if (!Number.isFinite(value)) {
        throw new SchemaError(`row ${i + 1}: non-numeric ${field}=${raw[field]}`);
      }
      return value;
    };
    return {
      workers: num("workers"),
      zipfTheta: num("zipf_theta"),
      blocks: num("blocks"),
      committedTx: num("committed_tx"),
      wallClockMs: num("wall_clock_ms"),
      throughputTps: num("throughput_tps"),
      abortRate: num("abort_rate"),
      earlyHashWaste: num("early_hash_waste"),
      speedup: num("speedup"),
    };
  });
}
