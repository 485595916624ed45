export { parseEpisodeLog, LogParseError } from "./log.js";
export type {
  EpisodeLog,
  EpisodeHeader,
  EpisodeSummary,
  StepRecord,
  AgentSample,
  EgoSample,
} from "./log.js";
export { render } from "./render.js";
export type { PlotSpec, FigureKind } from "./render.js";
export { renderChart } from "./svg.js";
export type { Series, ChartOptions } from "./svg.js";
