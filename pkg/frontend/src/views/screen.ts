/** Screening queue: include/exclude with rationale, trend flags, conflicts.
 *
 * The queue renders in server order. Excluding requires a rationale and is
 * blocked client side before any request goes out; the server enforces the
 * same rule. Every API failure is shown inline with a retry button that
 * re-runs the exact same action.
 */

import { ApiClient, ApiError } from "../api.js";
import { clear, el } from "../dom.js";
import type { CandidateDoc } from "../types.js";

export interface ScreenOptions {
  reviewer: () => string;
}

const CONFLICT_STATE = "needs_consensus";

export class ScreenView {
  readonly root: HTMLElement;
  private list: HTMLElement;
  private notice: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly lineageId: string,
    private readonly options: ScreenOptions,
  ) {
    this.notice = el("p", { class: "notice", role: "status" });
    this.list = el("ol", { class: "queue", "aria-label": "screening queue" });
    this.root = el(
      "section",
      { class: "screen-view" },
      el("h2", { text: "Screening queue" }),
      this.notice,
      this.list,
    );
  }

  async refresh(): Promise<void> {
    let queue: CandidateDoc[];
    try {
      queue = await this.api.queue(this.lineageId);
    } catch (err) {
      this.showNotice(describeError(err), () => this.refresh());
      return;
    }
    this.showNotice("");
    clear(this.list);
    if (queue.length === 0) {
      this.list.append(el("li", { class: "empty", text: "Queue is empty." }));
      return;
    }
    for (const candidate of queue) {
      this.list.append(this.renderRow(candidate));
    }
  }

  private renderRow(candidate: CandidateDoc): HTMLElement {
    const record = candidate.record;
    const row = el("li", {
      class: "candidate" +
        (candidate.state === CONFLICT_STATE ? " conflict" : ""),
      "data-record-id": record.id,
      "data-state": candidate.state,
    });

    const header = el(
      "div",
      { class: "candidate-header" },
      el("strong", { text: record.title }),
      el("span", { class: "meta", text: ` (${record.year}) score ${candidate.score}` }),
    );
    if (candidate.state === CONFLICT_STATE) {
      header.append(el("span", {
        class: "badge conflict-badge",
        text: "conflict, needs consensus",
      }));
    }
    if (candidate.trend) {
      header.append(el("span", { class: "badge trend-badge", text: "trend" }));
    }
    row.append(header);

    row.append(renderMatches(candidate));
    row.append(renderDetail(record.abstract, record.keywords));

    const rationale = el("textarea", {
      class: "rationale",
      rows: "2",
      placeholder: "rationale (required to exclude)",
      "aria-label": `rationale for ${record.id}`,
    });
    const error = el("p", { class: "row-error", role: "alert" });

    const include = el("button", {
      type: "button",
      class: "include",
      text: "Include",
    });
    const exclude = el("button", {
      type: "button",
      class: "exclude",
      text: "Exclude",
    });
    const trend = el("button", {
      type: "button",
      class: "trend-toggle",
      text: candidate.trend ? "Unflag trend" : "Flag trend",
      "aria-pressed": candidate.trend ? "true" : "false",
    });

    include.addEventListener("click", () =>
      this.submitDecision(candidate, "include", rationale.value, error));
    exclude.addEventListener("click", () =>
      this.submitDecision(candidate, "exclude", rationale.value, error));
    trend.addEventListener("click", () =>
      this.toggleTrend(candidate, error));

    row.append(
      el("div", { class: "actions" }, include, exclude, trend),
      rationale,
      error,
    );
    return row;
  }

  private async submitDecision(
    candidate: CandidateDoc,
    verdict: "include" | "exclude",
    rationale: string,
    error: HTMLElement,
  ): Promise<void> {
    const trimmed = rationale.trim();
    if (verdict === "exclude" && trimmed === "") {
      // Blocked before any request goes out; the server rejects it too.
      error.textContent = "A rationale is required to exclude.";
      return;
    }
    error.textContent = "";
    const body = {
      reviewer: this.options.reviewer(),
      verdict,
      ...(trimmed === "" ? {} : { rationale: trimmed }),
    };
    try {
      await this.api.decide(this.lineageId, candidate.record.id, body);
    } catch (err) {
      this.attachRetry(error, describeError(err), () =>
        this.submitDecision(candidate, verdict, rationale, error));
      return;
    }
    await this.refresh();
  }

  private async toggleTrend(
    candidate: CandidateDoc,
    error: HTMLElement,
  ): Promise<void> {
    error.textContent = "";
    try {
      await this.api.markTrend(this.lineageId, candidate.record.id, {
        actor: this.options.reviewer(),
        flagged: !candidate.trend,
      });
    } catch (err) {
      this.attachRetry(error, describeError(err), () =>
        this.toggleTrend(candidate, error));
      return;
    }
    await this.refresh();
  }

  private attachRetry(
    target: HTMLElement,
    message: string,
    action: () => Promise<void>,
  ): void {
    clear(target);
    target.append(message + " ");
    const retry = el("button", { type: "button", class: "retry", text: "Retry" });
    retry.addEventListener("click", () => void action());
    target.append(retry);
  }

  private showNotice(message: string, retry?: () => Promise<void>): void {
    clear(this.notice);
    if (message === "") return;
    if (retry === undefined) {
      this.notice.textContent = message;
    } else {
      this.attachRetry(this.notice, message, retry);
    }
  }
}

function renderMatches(candidate: CandidateDoc): HTMLElement {
  const chips = el("div", { class: "matches" });
  for (const id of candidate.matched_inclusion) {
    chips.append(el("span", { class: "chip inclusion", text: `+${id}` }));
  }
  for (const id of candidate.matched_exclusion) {
    chips.append(el("span", { class: "chip exclusion", text: `-${id}` }));
  }
  if (candidate.title_only) {
    chips.append(el("span", { class: "chip title-only", text: "title only" }));
  }
  return chips;
}

function renderDetail(
  abstract: string | null,
  keywords: string[],
): HTMLElement {
  const detail = el(
    "details",
    { class: "candidate-detail" },
    el("summary", { text: "Abstract and keywords" }),
  );
  detail.append(el("p", {
    class: "abstract",
    text: abstract ?? "No abstract available.",
  }));
  if (keywords.length > 0) {
    detail.append(el("p", { class: "keywords", text: keywords.join(", ") }));
  }
  return detail;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `Request failed (${err.code}): ${err.message}`;
  }
  return `Request failed: ${String(err)}`;
}
