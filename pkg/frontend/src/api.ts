/** Typed client for the review surveillance HTTP API.
 *
 * One method per endpoint the dashboard uses; every response is unwrapped
 * from the {status, data, error} envelope and failures become ApiError.
 */

import type {
  AnswerBody,
  CandidateDoc,
  DecisionBody,
  Envelope,
  EventDocWire,
  LineageSummaryDoc,
  MetricsDoc,
  SessionDoc,
  TrendBody,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly httpStatus: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) =>
      globalThis.fetch(input, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, {
        method,
        headers: body === undefined
          ? undefined
          : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError("network", `request failed: ${String(err)}`, 0);
    }
    let envelope: Envelope<T>;
    try {
      envelope = (await response.json()) as Envelope<T>;
    } catch {
      throw new ApiError(
        "protocol",
        `non-JSON response (HTTP ${response.status})`,
        response.status,
      );
    }
    if (envelope.status === "ok") {
      return envelope.data as T;
    }
    const detail = envelope.error ?? {
      code: "unknown",
      message: `HTTP ${response.status}`,
    };
    throw new ApiError(detail.code, detail.message, response.status);
  }

  listLineages(): Promise<LineageSummaryDoc[]> {
    return this.request("GET", "/lineages");
  }

  getLineage(id: string): Promise<LineageSummaryDoc> {
    return this.request("GET", `/lineages/${encodeURIComponent(id)}`);
  }

  queue(id: string): Promise<CandidateDoc[]> {
    return this.request("GET", `/lineages/${encodeURIComponent(id)}/queue`);
  }

  candidates(id: string): Promise<CandidateDoc[]> {
    return this.request(
      "GET",
      `/lineages/${encodeURIComponent(id)}/candidates`,
    );
  }

  decide(
    id: string,
    recordId: string,
    body: DecisionBody,
  ): Promise<CandidateDoc> {
    return this.request(
      "POST",
      `/lineages/${encodeURIComponent(id)}/candidates/` +
        `${encodeURIComponent(recordId)}/decisions`,
      body,
    );
  }

  markTrend(
    id: string,
    recordId: string,
    body: TrendBody,
  ): Promise<CandidateDoc> {
    return this.request(
      "POST",
      `/lineages/${encodeURIComponent(id)}/candidates/` +
        `${encodeURIComponent(recordId)}/trend`,
      body,
    );
  }

  sessions(id: string): Promise<SessionDoc[]> {
    return this.request("GET", `/lineages/${encodeURIComponent(id)}/sessions`);
  }

  openSession(id: string): Promise<SessionDoc> {
    return this.request(
      "POST",
      `/lineages/${encodeURIComponent(id)}/sessions`,
    );
  }

  answerStep(id: string, body: AnswerBody): Promise<SessionDoc> {
    return this.request(
      "POST",
      `/lineages/${encodeURIComponent(id)}/sessions/answers`,
      body,
    );
  }

  evaluateSession(id: string): Promise<SessionDoc> {
    return this.request(
      "POST",
      `/lineages/${encodeURIComponent(id)}/sessions/evaluate`,
    );
  }

  metrics(id: string): Promise<MetricsDoc> {
    return this.request("GET", `/lineages/${encodeURIComponent(id)}/metrics`);
  }

  events(
    id: string,
    afterSeq: number,
    waitSeconds = 0,
  ): Promise<EventDocWire[]> {
    const query = `after_seq=${afterSeq}&wait_seconds=${waitSeconds}`;
    return this.request(
      "GET",
      `/lineages/${encodeURIComponent(id)}/events?${query}`,
    );
  }
}
