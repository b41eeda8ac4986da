/** In-memory stand-in for the surveillance service.
 *
 * Implements just enough of the HTTP contract for the dashboard tests:
 * the same response envelope, the same validation rules the UI relies on
 * (exclude needs a rationale, steps answer in order, gates seal sessions),
 * and an audit log recording every request so tests can assert that each
 * UI mutation maps to exactly one API call.
 */

import type {
  CandidateDoc,
  EventDocWire,
  FunnelPointDoc,
  SessionDoc,
  StepConfigDoc,
} from "../src/types.js";

export interface AuditEntry {
  method: string;
  path: string;
  body: unknown;
}

const GATE_STEPS = new Set([1, 2, 3, 7]);

export function defaultSteps(): StepConfigDoc[] {
  const questions = [
    "Does the review question still matter to current practice?",
    "Have new relevant studies been found?",
    "Could the new evidence change the review's conclusions?",
    "Have the applicable research methods changed?",
    "Are additional outcomes or populations now relevant?",
    "Has the credibility of included studies changed?",
    "Do resources exist to carry out an update?",
  ];
  return questions.map((question, i) => ({
    index: i + 1,
    question,
    gate: GATE_STEPS.has(i + 1),
    disqualifies_on: "no",
  }));
}

export function makeCandidate(
  id: string,
  overrides: Partial<CandidateDoc> = {},
): CandidateDoc {
  return {
    record: {
      id,
      kind: "article",
      title: `Candidate study ${id}`,
      authors: ["Ada Byron"],
      year: 2023,
      month: null,
      venue: null,
      doi: `10.9000/${id}`,
      abstract: `Abstract for ${id}.`,
      keywords: ["prediction"],
      extra: [],
    },
    state: "prescreened",
    iteration: "it-0001",
    seeds: ["s01"],
    score: 1,
    matched_inclusion: ["ic1"],
    matched_exclusion: [],
    title_only: false,
    trend: false,
    resolution: null,
    decisions: [],
    ...overrides,
  };
}

interface Route {
  pattern: RegExp;
  method: string;
  handler: (match: RegExpMatchArray, body: any, query: URLSearchParams)
    => { status?: number; data?: unknown } | { error: [string, string, number] };
}

export class MockServer {
  audit: AuditEntry[] = [];
  candidates = new Map<string, CandidateDoc>();
  sessions: SessionDoc[] = [];
  events: EventDocWire[] = [];
  funnel: FunnelPointDoc[] = [];
  lineageId: string;
  status = "up_to_date";
  node = "ApplyCriteria";
  deposits = 0;
  lastRun: string | null = "2026-08-01T06:00:00+00:00";
  nextRun: string | null = "2026-08-02T06:00:00+00:00";
  quorum: number;
  private failMatch: string | null = null;
  private decisionSeq = 0;
  private sessionSeq = 0;
  private routes: Route[];

  constructor(lineageId = "demo-review", quorum = 1) {
    this.lineageId = lineageId;
    this.quorum = quorum;
    this.routes = this.buildRoutes();
  }

  /** Make the next request whose path contains `fragment` fail at the
   * network level (fetch rejects), then recover. */
  failOnce(fragment: string): void {
    this.failMatch = fragment;
  }

  /** Mutating requests only, for 1:1 mutation-to-call audits. */
  mutations(): AuditEntry[] {
    return this.audit.filter((a) => a.method !== "GET");
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const url = new URL(input, "http://mock.local");
    const path = url.pathname;
    const body = init?.body === undefined || init?.body === null
      ? undefined
      : JSON.parse(String(init.body));
    this.audit.push({ method, path, body });
    if (this.failMatch !== null && path.includes(this.failMatch)) {
      this.failMatch = null;
      throw new TypeError("fetch failed");
    }
    for (const route of this.routes) {
      if (route.method !== method) continue;
      const match = path.match(route.pattern);
      if (match === null) continue;
      const result = route.handler(match, body, url.searchParams);
      if ("error" in result) {
        const [code, message, status] = result.error;
        return jsonResponse(
          { status: "error", error: { code, message }, schema_version: 1 },
          status,
        );
      }
      return jsonResponse(
        { status: "ok", data: result.data, schema_version: 1 },
        result.status ?? 200,
      );
    }
    return jsonResponse(
      {
        status: "error",
        error: { code: "not_found", message: `no route ${method} ${path}` },
        schema_version: 1,
      },
      404,
    );
  };

  pushEvent(kind: string, payload: Record<string, unknown>): void {
    this.events.push({
      seq: this.events.length + 1,
      lineage_id: this.lineageId,
      kind,
      payload,
      at: `2026-08-0${Math.min(9, this.events.length + 1)}T00:00:00+00:00`,
    });
  }

  private summary() {
    return { id: this.lineageId, status: this.status, node: this.node };
  }

  private metricsDoc() {
    const byState: Record<string, number> = {
      discovered: 0, prescreened: 0, needs_consensus: 0,
      included: 0, excluded: 0, deposited: 0,
    };
    for (const c of this.candidates.values()) {
      byState[c.state] = (byState[c.state] ?? 0) + 1;
    }
    return {
      lineage_id: this.lineageId,
      node: this.node,
      status: this.status,
      funnel: this.funnel,
      candidates_by_state: byState,
      trend_count: [...this.candidates.values()].filter((c) => c.trend).length,
      deposits: this.deposits,
      last_run: this.lastRun,
      next_run: this.nextRun,
    };
  }

  private settle(candidate: CandidateDoc): CandidateDoc {
    const latest = new Map<string, "include" | "exclude">();
    for (const d of candidate.decisions) {
      latest.set(d.reviewer, d.verdict);
    }
    if (latest.size < this.quorum) {
      return { ...candidate, state: "prescreened" };
    }
    const verdicts = new Set(latest.values());
    if (verdicts.size > 1) {
      return { ...candidate, state: "needs_consensus" };
    }
    const verdict = [...verdicts][0];
    return {
      ...candidate,
      state: verdict === "include" ? "included" : "excluded",
      resolution: "unanimous",
    };
  }

  private buildRoutes(): Route[] {
    const lid = "/lineages/([^/]+)";
    return [
      {
        method: "GET", pattern: /^\/lineages$/,
        handler: () => ({ data: [this.summary()] }),
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}$`),
        handler: () => ({ data: this.summary() }),
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}/queue$`),
        handler: () => ({
          data: [...this.candidates.values()].filter(
            (c) => c.state === "prescreened" || c.state === "needs_consensus",
          ),
        }),
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}/candidates$`),
        handler: () => ({ data: [...this.candidates.values()] }),
      },
      {
        method: "POST",
        pattern: new RegExp(`^${lid}/candidates/([^/]+)/decisions$`),
        handler: (match, body) => {
          const candidate = this.candidates.get(match[2]!);
          if (candidate === undefined) {
            return { error: ["not_found", `no candidate ${match[2]}`, 404] };
          }
          if (body.verdict === "exclude" &&
              (body.rationale === undefined || body.rationale === "")) {
            return {
              error: ["validation", "exclude requires a rationale", 400],
            };
          }
          const decided: CandidateDoc = {
            ...candidate,
            decisions: [...candidate.decisions, {
              seq: ++this.decisionSeq,
              reviewer: body.reviewer,
              verdict: body.verdict,
              criteria: body.criteria ?? [],
              rationale: body.rationale ?? null,
              at: "2026-08-10T00:00:00+00:00",
              is_consensus: body.is_consensus ?? false,
            }],
          };
          const settled = body.is_consensus
            ? {
              ...decided,
              state: (body.verdict === "include" ? "included" : "excluded") as
                CandidateDoc["state"],
              resolution: "consensus" as const,
            }
            : this.settle(decided);
          this.candidates.set(match[2]!, settled);
          return { data: settled, status: 201 };
        },
      },
      {
        method: "POST",
        pattern: new RegExp(`^${lid}/candidates/([^/]+)/trend$`),
        handler: (match, body) => {
          const candidate = this.candidates.get(match[2]!);
          if (candidate === undefined) {
            return { error: ["not_found", `no candidate ${match[2]}`, 404] };
          }
          const updated = { ...candidate, trend: body.flagged ?? true };
          this.candidates.set(match[2]!, updated);
          return { data: updated };
        },
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}/sessions$`),
        handler: () => ({ data: this.sessions }),
      },
      {
        method: "POST", pattern: new RegExp(`^${lid}/sessions$`),
        handler: () => {
          if (this.sessions.some((s) => s.outcome === "pending")) {
            return { error: ["conflict", "a session is already open", 409] };
          }
          const included = [...this.candidates.values()]
            .filter((c) => c.state === "included" || c.state === "deposited")
            .length;
          if (included === 0) {
            return { error: ["validation", "nothing to decide about", 400] };
          }
          const session: SessionDoc = {
            id: `ses-${String(++this.sessionSeq).padStart(4, "0")}`,
            lineage_id: this.lineageId,
            steps: defaultSteps(),
            opened_at: "2026-08-10T00:00:00+00:00",
            evidence: {
              included_count: included,
              trend_count: [...this.candidates.values()]
                .filter((c) => c.trend).length,
              last_iteration_at: this.lastRun,
            },
            answers: [],
            outcome: "pending",
            evaluated_at: null,
          };
          this.sessions.push(session);
          return { data: session, status: 201 };
        },
      },
      {
        method: "POST", pattern: new RegExp(`^${lid}/sessions/answers$`),
        handler: (_match, body) => {
          const session = this.sessions.find((s) => s.outcome === "pending");
          if (session === undefined) {
            return { error: ["validation", "no open session", 400] };
          }
          const expected = session.answers.length + 1;
          if (body.index !== expected) {
            return {
              error: ["validation", `step ${expected} is next`, 400],
            };
          }
          session.answers.push({
            index: body.index,
            answer: body.answer,
            rationale: body.rationale ?? null,
            by: body.by,
            at: "2026-08-10T00:00:00+00:00",
          });
          const step = session.steps[body.index - 1]!;
          if (step.gate && body.answer === step.disqualifies_on) {
            session.outcome = "no_update";
            session.evaluated_at = "2026-08-10T00:00:00+00:00";
          }
          return { data: session, status: 201 };
        },
      },
      {
        method: "POST", pattern: new RegExp(`^${lid}/sessions/evaluate$`),
        handler: () => {
          const session = this.sessions.find((s) => s.outcome === "pending");
          if (session === undefined) {
            return { error: ["validation", "no open session", 400] };
          }
          if (session.answers.length < session.steps.length) {
            return { error: ["validation", "steps still unanswered", 400] };
          }
          session.outcome = "update_needed";
          session.evaluated_at = "2026-08-10T00:00:00+00:00";
          this.status = "suitable_for_update";
          this.node = "MonitorAlert";
          this.pushEvent("flagged", {
            status: "suitable_for_update", noop: false,
          });
          return { data: session };
        },
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}/metrics$`),
        handler: () => ({ data: this.metricsDoc() }),
      },
      {
        method: "GET", pattern: new RegExp(`^${lid}/events$`),
        handler: (_match, _body, query) => {
          const after = Number(query.get("after_seq") ?? "0");
          return { data: this.events.filter((e) => e.seq > after) };
        },
      },
    ];
  }
}

function jsonResponse(payload: unknown, status: number): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}
