import * as fs from "fs";
import * as path from "path";
import { BenchRow } from "./schema";
import { renderChart, Series } from "./chart";

export const OUTPUT_FILES = ["speedup.png", "abort_rate.png", "hash_waste.png"];

function groupByTheta(rows: BenchRow[]): Map<number, BenchRow[]> {
  const groups = new Map<number, BenchRow[]>();
  for (const row of rows) {
    const list = groups.get(row.zipfTheta) ?? [];
    list.push(row);
    groups.set(row.zipfTheta, list);
  }
  return new Map([...groups.entries()].sort((a, b) => a[0] - b[0]));
}

function seriesOverWorkers(rows: BenchRow[],
                           pick: (r: BenchRow) => number): Series[] {
  return [...groupByTheta(rows).entries()].map(([theta, group]) => ({
    label: `zipf=${theta}`,
    points: group.map((r): [number, number] => [r.workers, pick(r)]),
  }));
}

/** Render all three charts from a parsed bench sweep. Idempotent. */
export function plotAll(rows: BenchRow[], outDir: string): string[] {
  if (rows.length === 0) throw new Error("no bench rows to plot");
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  const emit = (file: string, title: string, yLabel: string,
                series: Series[]) => {
    const target = path.join(outDir, file);
    renderChart({ title, xLabel: "workers", yLabel, series }, target);
    written.push(target);
  };
  emit("speedup.png", "speedup vs workers", "speedup",
       seriesOverWorkers(rows, (r) => r.speedup));
  emit("abort_rate.png", "abort rate vs workers", "abort rate",
       seriesOverWorkers(rows, (r) => r.abortRate));
  emit("hash_waste.png", "early hash waste vs workers", "waste",
       seriesOverWorkers(rows, (r) => r.earlyHashWaste));
  return written;
}
