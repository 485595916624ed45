#!/usr/bin/env node
/** Render a figure from episode logs:
 *   urbansmpc-plot --kind speed_profile --log run.jsonl [--compare other.jsonl] --out fig.svg
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { LogParseError, parseEpisodeLog } from "./log.js";
import { render, type FigureKind } from "./render.js";

const KINDS: FigureKind[] = ["speed_profile", "trajectory", "gap_vs_time"];

export function main(argv: string[]): number {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        kind: { type: "string" },
        log: { type: "string" },
        compare: { type: "string" },
        out: { type: "string" },
      },
    }));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }

  const kind = values.kind as FigureKind | undefined;
  if (!kind || !KINDS.includes(kind) || !values.log || !values.out) {
    console.error(
      `usage: urbansmpc-plot --kind {${KINDS.join("|")}} --log FILE [--compare FILE] --out FILE`,
    );
    return 1;
  }

  try {
    const log = parseEpisodeLog(readFileSync(values.log, "utf8"));
    const compare = values.compare
      ? parseEpisodeLog(readFileSync(values.compare, "utf8"))
      : undefined;
    writeFileSync(values.out, render({ kind, log, compare }));
  } catch (err) {
    if (err instanceof LogParseError) {
      console.error(`parse error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  return 0;
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
