/** Figure rendering from parsed episode logs. */

import type { EpisodeLog, StepRecord } from "./log.js";
import { renderChart, type Series } from "./svg.js";

export type FigureKind = "speed_profile" | "trajectory" | "gap_vs_time";

export interface PlotSpec {
  kind: FigureKind;
  log: EpisodeLog;
  /** Second episode overlaid for comparison (speed_profile only). */
  compare?: EpisodeLog;
}

// color convention: green = maneuver layer off, blue = on, red = reference
const COLOR_OFF = "#2a9d2a";
const COLOR_ON = "#1f5fbf";
const COLOR_REF = "#d62728";

function speedSeries(log: EpisodeLog): Series {
  const steps = log.records;
  return {
    label: log.header.hl ? "maneuver layer on" : "maneuver layer off",
    color: log.header.hl ? COLOR_ON : COLOR_OFF,
    x: steps.map((r) => r.t),
    y: steps.map((r) => r.ego.v),
  };
}

function referenceSeries(log: EpisodeLog): Series | undefined {
  const withRef = log.records.filter((r) => typeof r.v_ref === "number");
  if (withRef.length === 0) return undefined;
  return {
    label: "reference speed",
    color: COLOR_REF,
    dash: "6 4",
    x: withRef.map((r) => r.t),
    y: withRef.map((r) => r.v_ref!),
  };
}

function speedProfile(spec: PlotSpec): string {
  const series: Series[] = [];
  if (spec.compare) series.push(speedSeries(spec.compare));
  series.push(speedSeries(spec.log));
  const ref = referenceSeries(spec.log);
  if (ref) series.push(ref);
  return renderChart(series, {
    title: `Ego speed profile (${spec.log.header.scenario})`,
    xLabel: "time [s]",
    yLabel: "speed [m/s]",
    yRange: [0, Math.max(...series.flatMap((s) => s.y)) * 1.1],
  });
}

function trajectory(spec: PlotSpec): string {
  const series: Series[] = [
    {
      label: "ego",
      color: spec.log.header.hl ? COLOR_ON : COLOR_OFF,
      x: spec.log.records.map((r) => r.ego.x),
      y: spec.log.records.map((r) => r.ego.y),
    },
  ];
  const names = new Set(
    spec.log.records.flatMap((r) => (r.agents ?? []).map((a) => a.name)),
  );
  const palette = ["#8c564b", "#9467bd", "#e377c2", "#7f7f7f"];
  let i = 0;
  for (const name of names) {
    series.push({
      label: name,
      color: palette[i++ % palette.length]!,
      x: spec.log.records.map(
        (r) => (r.agents ?? []).find((a) => a.name === name)?.x ?? NaN,
      ),
      y: spec.log.records.map(
        (r) => (r.agents ?? []).find((a) => a.name === name)?.y ?? NaN,
      ),
    });
  }
  return renderChart(series, {
    title: `Trajectories (${spec.log.header.scenario})`,
    xLabel: "x [m]",
    yLabel: "y [m]",
    width: 640,
    height: 640,
  });
}

function gap(rec: StepRecord, name: string): number {
  const a = (rec.agents ?? []).find((ag) => ag.name === name);
  if (!a) return NaN;
  return Math.hypot(a.x - rec.ego.x, a.y - rec.ego.y);
}

function gapVsTime(spec: PlotSpec): string {
  const names = new Set(
    spec.log.records.flatMap((r) => (r.agents ?? []).map((a) => a.name)),
  );
  const palette = [COLOR_ON, "#ff7f0e", "#8c564b", "#9467bd"];
  const series: Series[] = [...names].map((name, i) => ({
    label: `gap to ${name}`,
    color: palette[i % palette.length]!,
    x: spec.log.records.map((r) => r.t),
    y: spec.log.records.map((r) => gap(r, name)),
  }));
  return renderChart(series, {
    title: `Ego-agent gaps (${spec.log.header.scenario})`,
    xLabel: "time [s]",
    yLabel: "distance [m]",
  });
}

/** Render the requested figure as an SVG document string. */
export function render(spec: PlotSpec): string {
  switch (spec.kind) {
    case "speed_profile":
      return speedProfile(spec);
    case "trajectory":
      return trajectory(spec);
    case "gap_vs_time":
      return gapVsTime(spec);
  }
}
