/** Episode-log reader: line-delimited JSON with a header line, one record
 * per simulation step, and a summary footer. */

export interface EgoSample {
  s: number;
  d: number;
  phi: number;
  v: number;
  x: number;
  y: number;
}

export interface AgentSample {
  name: string;
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export interface StepRecord {
  t: number;
  ego: EgoSample;
  agents: AgentSample[];
  v_ref?: number;
  ref_source?: string;
  hl?: { age: number; degraded: boolean; pattern: Record<string, number> };
}

export interface EpisodeHeader {
  scenario: string;
  seed: number;
  hl: boolean;
}

export interface EpisodeSummary {
  J_sim: number;
  collision: boolean;
  min_speed: number;
  min_gaps: Record<string, number | null>;
  [key: string]: unknown;
}

export interface EpisodeLog {
  header: EpisodeHeader;
  records: StepRecord[];
  summary: EpisodeSummary;
}

export class LogParseError extends Error {
  constructor(
    message: string,
    public readonly line?: number,
  ) {
    super(line === undefined ? message : `line ${line}: ${message}`);
    this.name = "LogParseError";
  }
}

function asRecord(value: unknown, line: number): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new LogParseError("expected a JSON object", line);
  }
  return value as Record<string, unknown>;
}

/** Parse one episode log. Errors carry the 1-based line number. */
export function parseEpisodeLog(text: string): EpisodeLog {
  let header: EpisodeHeader | undefined;
  let summary: EpisodeSummary | undefined;
  const records: StepRecord[] = [];

  const lines = text.split("\n");
  let lastLine = 0;
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i]!.trim();
    if (line === "") continue;
    const lineno = i + 1;
    lastLine = lineno;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new LogParseError(
        `invalid JSON (${(err as Error).message})`,
        lineno,
      );
    }
    const rec = asRecord(obj, lineno);
    if ("header" in rec) {
      header = asRecord(rec.header, lineno) as unknown as EpisodeHeader;
    } else if ("summary" in rec) {
      summary = asRecord(rec.summary, lineno) as unknown as EpisodeSummary;
    } else {
      if (typeof rec.t !== "number" || typeof rec.ego !== "object") {
        throw new LogParseError("step record needs numeric t and an ego object", lineno);
      }
      records.push(rec as unknown as StepRecord);
    }
  }

  if (header === undefined) {
    throw new LogParseError("log has no header line", lastLine || undefined);
  }
  if (summary === undefined) {
    throw new LogParseError("log has no summary line (truncated?)", lastLine || undefined);
  }
  return { header, records, summary };
}
