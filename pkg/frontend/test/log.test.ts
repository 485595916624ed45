import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { LogParseError, parseEpisodeLog } from "../src/log.js";

const FIXTURES = join(__dirname, "fixtures");

function fixture(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf8");
}

describe("parseEpisodeLog", () => {
  it("parses a full episode", () => {
    const log = parseEpisodeLog(fixture("intersection_hl_on.jsonl"));
    expect(log.header.scenario).toBe("intersection_tv");
    expect(log.header.hl).toBe(true);
    expect(log.records.length).toBeGreaterThan(100);
    expect(log.summary.collision).toBe(false);
    expect(typeof log.summary.J_sim).toBe("number");
  });

  it("keeps step records in time order with ego samples", () => {
    const log = parseEpisodeLog(fixture("pedestrian_hl_on.jsonl"));
    for (let i = 1; i < log.records.length; i++) {
      expect(log.records[i]!.t).toBeGreaterThan(log.records[i - 1]!.t);
    }
    expect(log.records[0]!.ego.v).toBeCloseTo(10.0);
  });

  it("reports the line number for invalid JSON", () => {
    const text =
      '{"header": {"scenario": "s", "seed": 0, "hl": true}}\n' +
      '{"t": 0.0, "ego": {"s": 1, "d": 0, "phi": 0, "v": 1, "x": 0, "y": 0}}\n' +
      '{"t": 0.2, "ego": {broken\n';
    expect(() => parseEpisodeLog(text)).toThrowError(/^line 3: invalid JSON/);
  });

  it("fails with a line-numbered error on a truncated log", () => {
    const full = fixture("intersection_hl_on.jsonl");
    const lines = full.trimEnd().split("\n");
    const truncated = lines.slice(0, 40).join("\n");
    let caught: unknown;
    try {
      parseEpisodeLog(truncated);
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(LogParseError);
    expect((caught as LogParseError).line).toBe(40);
    expect((caught as LogParseError).message).toMatch(/^line 40: .*summary/);
  });

  it("rejects a log without a header", () => {
    expect(() => parseEpisodeLog('{"summary": {}}\n')).toThrowError(/header/);
  });

  it("rejects step records without time or ego", () => {
    const text =
      '{"header": {"scenario": "s", "seed": 0, "hl": true}}\n' + '{"bogus": 1}\n';
    expect(() => parseEpisodeLog(text)).toThrowError(/line 2/);
  });
});
