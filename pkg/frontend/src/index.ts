#!/usr/bin/env node
import * as fs from "fs";
import { parseBench, SchemaError } from "./schema";
import { plotAll } from "./plots";

function usage(): string {
  return "usage: plots <bench.csv> --out <dir>";
}

export function main(argv: string[]): number {
  const args = [...argv];
  let outDir = ".";
  const outIdx = args.indexOf("--out");
  if (outIdx >= 0) {
    if (outIdx + 1 >= args.length) {
      console.error(usage());
      return 1;
    }
    outDir = args[outIdx + 1];
    args.splice(outIdx, 2);
  }
  if (args.length !== 1) {
    console.error(usage());
    return 1;
  }
  let text: string;
  try {
    text = fs.readFileSync(args[0], "utf8");
  } catch (err) {
    console.error(`cannot read ${args[0]}: ${(err as Error).message}`);
    return 1;
  }
  try {
    const files = plotAll(parseBench(text), outDir);
    for (const f of files) console.log(f);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema mismatch: ${err.message}`);
      return 2;
    }
    console.error((err as Error).message);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
