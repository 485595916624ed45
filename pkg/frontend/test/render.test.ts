import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseEpisodeLog } from "../src/log.js";
import { render } from "../src/render.js";

const FIXTURES = join(__dirname, "fixtures");

function load(name: string) {
  return parseEpisodeLog(readFileSync(join(FIXTURES, name), "utf8"));
}

function seriesY(svg: string, label: string): number[] {
  const match = svg.match(
    new RegExp(`<polyline points="([^"]*)"[^>]*data-label="${label}"`),
  );
  expect(match, `series ${label} present`).toBeTruthy();
  return match![1]!
    .split(" ")
    .map((pair) => Number(pair.split(",")[1]));
}

describe("speed_profile", () => {
  it("overlays both intersection runs: baseline dips, maneuver run does not", () => {
    const on = load("intersection_hl_on.jsonl");
    const off = load("intersection_hl_off.jsonl");
    const svg = render({ kind: "speed_profile", log: on, compare: off });

    expect(svg).toContain("<svg");
    expect(svg).toContain("speed [m/s]");
    // SVG y grows downward, so larger y-coordinate = lower speed.
    // Recover speeds from the data summaries instead of pixel math:
    expect(off.summary.min_speed).toBeLessThan(0.5);
    expect(on.summary.min_speed).toBeGreaterThan(3.0);
    // and check the rendered polylines reflect that separation
    const yOn = seriesY(svg, "maneuver layer on");
    const yOff = seriesY(svg, "maneuver layer off");
    expect(Math.max(...yOff)).toBeGreaterThan(Math.max(...yOn));
    expect(svg).toContain('data-label="reference speed"');
  });

  it("renders a single run without a comparison", () => {
    const svg = render({ kind: "speed_profile", log: load("pedestrian_hl_on.jsonl") });
    expect(svg).toContain('data-label="maneuver layer on"');
    expect(svg).not.toContain('data-label="maneuver layer off"');
  });
});

describe("trajectory", () => {
  it("draws ego and every agent track", () => {
    const svg = render({ kind: "trajectory", log: load("intersection_hl_on.jsonl") });
    expect(svg).toContain('data-label="ego"');
    expect(svg).toContain('data-label="tv1"');
    expect(svg).toContain('data-label="tv2"');
    expect(svg).toContain("x [m]");
  });
});

describe("gap_vs_time", () => {
  it("plots per-agent distances that stay above the logged minimum", () => {
    const log = load("pedestrian_hl_on.jsonl");
    const svg = render({ kind: "gap_vs_time", log });
    expect(svg).toContain('data-label="gap to ped"');
    const dists = log.records.map((r) => {
      const a = r.agents.find((ag) => ag.name === "ped")!;
      return Math.hypot(a.x - r.ego.x, a.y - r.ego.y);
    });
    const minGap = log.summary.min_gaps["ped"]!;
    expect(Math.min(...dists)).toBeGreaterThanOrEqual(minGap - 1e-6);
  });
});

describe("determinism", () => {
  it("same log renders to the same bytes", () => {
    const log = load("intersection_hl_off.jsonl");
    const a = render({ kind: "speed_profile", log });
    const b = render({ kind: "speed_profile", log });
    expect(a).toBe(b);
  });
});
