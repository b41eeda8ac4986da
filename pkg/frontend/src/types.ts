/** Wire types, mirroring the service's JSON payloads field for field.
 *
 * The dashboard derives everything it shows from these; no business rules
 * are re-implemented client side.
 */

export interface Envelope<T> {
  status: "ok" | "error";
  data?: T;
  error?: { code: string; message: string };
  schema_version: number;
}

export interface RecordDoc {
  id: string;
  kind: string;
  title: string;
  authors: string[];
  year: number;
  month: number | null;
  venue: string | null;
  doi: string | null;
  abstract: string | null;
  keywords: string[];
  extra: [string, string][];
}

export interface DecisionDoc {
  seq: number;
  reviewer: string;
  verdict: "include" | "exclude";
  criteria: string[];
  rationale: string | null;
  at: string;
  is_consensus: boolean;
}

export interface CandidateDoc {
  record: RecordDoc;
  state: "discovered" | "prescreened" | "needs_consensus" | "included"
    | "excluded" | "deposited";
  iteration: string;
  seeds: string[];
  score: number;
  matched_inclusion: string[];
  matched_exclusion: string[];
  title_only: boolean;
  trend: boolean;
  resolution: "auto" | "unanimous" | "consensus" | null;
  decisions: DecisionDoc[];
}

export interface StepConfigDoc {
  index: number;
  question: string;
  gate: boolean;
  disqualifies_on: string;
}

export interface StepAnswerDoc {
  index: number;
  answer: "yes" | "no" | "not_applicable";
  rationale: string | null;
  by: string;
  at: string;
}

export type SessionOutcome = "pending" | "update_needed" | "no_update";

export interface SessionDoc {
  id: string;
  lineage_id: string;
  steps: StepConfigDoc[];
  opened_at: string;
  evidence: Record<string, unknown>;
  answers: StepAnswerDoc[];
  outcome: SessionOutcome;
  evaluated_at: string | null;
}

export interface FunnelPointDoc {
  iteration_id: string;
  raw_hits: number;
  window_hits: number;
  new_unique: number;
  status: string;
}

export interface MetricsDoc {
  lineage_id: string;
  node: string;
  status: string;
  funnel: FunnelPointDoc[];
  candidates_by_state: Record<string, number>;
  trend_count: number;
  deposits: number;
  last_run: string | null;
  next_run: string | null;
}

export interface LineageSummaryDoc {
  id: string;
  status: string;
  node: string;
  [extra: string]: unknown;
}

export interface EventDocWire {
  seq: number;
  lineage_id: string;
  kind: string;
  payload: Record<string, unknown>;
  at: string;
}

export interface DecisionBody {
  reviewer: string;
  verdict: "include" | "exclude";
  criteria?: string[];
  rationale?: string;
  is_consensus?: boolean;
}

export interface TrendBody {
  actor: string;
  note?: string;
  flagged?: boolean;
}

export interface AnswerBody {
  index: number;
  answer: "yes" | "no" | "not_applicable";
  by: string;
  rationale?: string;
}
