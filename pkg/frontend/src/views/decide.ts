/** Update-decision wizard: seven ordered steps, one at a time.
 *
 * The current step is always derived from the server's session document
 * (answers so far + outcome), so a page refresh resumes exactly at the
 * first unanswered step and out-of-order submission is impossible. A
 * disqualifying gate answer seals the session server side; the final
 * qualifying answer is followed by one evaluate call to seal the outcome.
 */

import { ApiClient, ApiError } from "../api.js";
import { clear, el } from "../dom.js";
import type { SessionDoc, SessionOutcome } from "../types.js";

export interface DecideOptions {
  reviewer: () => string;
}

const ANSWERS: ["yes", "no", "not_applicable"] = [
  "yes",
  "no",
  "not_applicable",
];

const OUTCOME_TEXT: Record<SessionOutcome, string> = {
  pending: "in progress",
  update_needed: "Update needed",
  no_update: "No update needed",
};

export class DecideView {
  readonly root: HTMLElement;
  private panel: HTMLElement;
  private error: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly lineageId: string,
    private readonly options: DecideOptions,
  ) {
    this.error = el("p", { class: "row-error", role: "alert" });
    this.panel = el("div", { class: "wizard-panel" });
    this.root = el(
      "section",
      { class: "decide-view" },
      el("h2", { text: "Update decision" }),
      this.error,
      this.panel,
    );
  }

  async refresh(): Promise<void> {
    let sessions: SessionDoc[];
    try {
      sessions = await this.api.sessions(this.lineageId);
    } catch (err) {
      this.showError(err);
      return;
    }
    this.error.textContent = "";
    const pending = sessions.find((s) => s.outcome === "pending");
    if (pending !== undefined) {
      this.renderStep(pending);
      return;
    }
    this.renderIdle(sessions[sessions.length - 1]);
  }

  private renderIdle(last: SessionDoc | undefined): void {
    clear(this.panel);
    if (last !== undefined) {
      this.panel.append(outcomeBanner(last.outcome));
    }
    const open = el("button", {
      type: "button",
      class: "open-session",
      text: "Start a decision session",
    });
    open.addEventListener("click", () => void this.openSession());
    this.panel.append(open);
  }

  private async openSession(): Promise<void> {
    try {
      const session = await this.api.openSession(this.lineageId);
      this.error.textContent = "";
      this.renderStep(session);
    } catch (err) {
      this.showError(err);
    }
  }

  private renderStep(session: SessionDoc): void {
    clear(this.panel);
    this.panel.append(evidencePanel(session));

    const index = session.answers.length + 1;
    const step = session.steps[index - 1];
    if (step === undefined) {
      return;
    }
    const form = el(
      "div",
      { class: "wizard-step", "data-step-index": String(index) },
      el("h3", {
        text: `Step ${index} of ${session.steps.length}` +
          (step.gate ? " (gate)" : ""),
      }),
      el("p", { class: "question", text: step.question }),
    );
    const rationale = el("textarea", {
      class: "rationale",
      rows: "2",
      placeholder: "rationale (optional)",
      "aria-label": `rationale for step ${index}`,
    });
    const buttons = el("div", { class: "actions" });
    for (const answer of ANSWERS) {
      const button = el("button", {
        type: "button",
        class: `answer answer-${answer}`,
        text: answer === "not_applicable" ? "Not applicable" :
          answer === "yes" ? "Yes" : "No",
      });
      button.addEventListener("click", () =>
        void this.submitAnswer(session, index, answer, rationale.value));
      buttons.append(button);
    }
    form.append(buttons, rationale);
    this.panel.append(form);
  }

  private async submitAnswer(
    session: SessionDoc,
    index: number,
    answer: "yes" | "no" | "not_applicable",
    rationale: string,
  ): Promise<void> {
    const trimmed = rationale.trim();
    let updated: SessionDoc;
    try {
      updated = await this.api.answerStep(this.lineageId, {
        index,
        answer,
        by: this.options.reviewer(),
        ...(trimmed === "" ? {} : { rationale: trimmed }),
      });
    } catch (err) {
      this.showError(err);
      return;
    }
    this.error.textContent = "";
    if (updated.outcome !== "pending") {
      // A gate disqualified; the session is sealed with steps unanswered.
      this.renderFinished(updated);
      return;
    }
    if (updated.answers.length === updated.steps.length) {
      try {
        updated = await this.api.evaluateSession(this.lineageId);
      } catch (err) {
        this.showError(err);
        return;
      }
      this.renderFinished(updated);
      return;
    }
    this.renderStep(updated);
  }

  private renderFinished(session: SessionDoc): void {
    clear(this.panel);
    this.panel.append(evidencePanel(session));
    this.panel.append(outcomeBanner(session.outcome));
    this.panel.append(el("p", {
      class: "answered-count",
      text: `${session.answers.length} of ${session.steps.length} steps answered.`,
    }));
  }

  private showError(err: unknown): void {
    this.error.textContent = err instanceof ApiError
      ? `Request failed (${err.code}): ${err.message}`
      : `Request failed: ${String(err)}`;
  }
}

function evidencePanel(session: SessionDoc): HTMLElement {
  const included = session.evidence["included_count"];
  const trends = session.evidence["trend_count"];
  const lastRun = session.evidence["last_iteration_at"];
  return el(
    "div",
    { class: "evidence" },
    el("span", {
      class: "evidence-included",
      text: `Included candidates: ${String(included ?? 0)}`,
    }),
    el("span", {
      class: "evidence-trends",
      text: `Trend signals: ${String(trends ?? 0)}`,
    }),
    el("span", {
      class: "evidence-last-run",
      text: `Last search: ${String(lastRun ?? "never")}`,
    }),
  );
}

function outcomeBanner(outcome: SessionOutcome): HTMLElement {
  return el("p", {
    class: `outcome outcome-${outcome}`,
    role: "status",
    "data-outcome": outcome,
    text: OUTCOME_TEXT[outcome],
  });
}
