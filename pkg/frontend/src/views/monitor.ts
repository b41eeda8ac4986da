/** Monitoring dashboard: funnel bars, candidate states, and the status flag.
 *
 * Data comes from the metrics endpoint; freshness comes from long-polling
 * the event log. Each arriving event triggers an in-place re-render, so the
 * status badge updates without a page reload. A failed poll raises a stale
 * indicator that clears on the next successful one.
 */

import { ApiClient } from "../api.js";
import { clear, el } from "../dom.js";
import type { FunnelPointDoc, MetricsDoc } from "../types.js";

const STAGES: (keyof Pick<
  FunnelPointDoc, "raw_hits" | "window_hits" | "new_unique"
>)[] = ["raw_hits", "window_hits", "new_unique"];

const STAGE_LABEL: Record<string, string> = {
  raw_hits: "raw",
  window_hits: "in window",
  new_unique: "new unique",
};

export class MonitorView {
  readonly root: HTMLElement;
  private panel: HTMLElement;
  private staleBadge: HTMLElement;
  private lastSeq = 0;
  private stopped = false;

  constructor(
    private readonly api: ApiClient,
    private readonly lineageId: string,
    private readonly waitSeconds: number = 25,
  ) {
    this.staleBadge = el("span", {
      class: "badge stale-badge",
      role: "status",
      hidden: "hidden",
      text: "stale data, retrying",
    });
    this.panel = el("div", { class: "monitor-panel" });
    this.root = el(
      "section",
      { class: "monitor-view" },
      el("h2", {}, "Monitoring ", this.staleBadge),
      this.panel,
    );
  }

  async refresh(): Promise<void> {
    let metrics: MetricsDoc;
    try {
      metrics = await this.api.metrics(this.lineageId);
    } catch {
      this.setStale(true);
      return;
    }
    this.setStale(false);
    clear(this.panel);
    this.panel.append(
      this.renderStatus(metrics),
      this.renderFunnel(metrics),
      this.renderStates(metrics),
    );
  }

  /** One long-poll round: wait for events, then re-render if any arrived. */
  async pollOnce(): Promise<boolean> {
    let events;
    try {
      events = await this.api.events(
        this.lineageId, this.lastSeq, this.waitSeconds);
    } catch {
      this.setStale(true);
      return false;
    }
    this.setStale(false);
    if (events.length > 0) {
      for (const event of events) {
        if (event.seq > this.lastSeq) this.lastSeq = event.seq;
      }
      await this.refresh();
    }
    return true;
  }

  async start(retryDelayMs = 2000): Promise<void> {
    this.stopped = false;
    await this.refresh();
    while (!this.stopped) {
      const ok = await this.pollOnce();
      if (!ok) {
        await sleep(retryDelayMs);
      }
    }
  }

  stop(): void {
    this.stopped = true;
  }

  private renderStatus(metrics: MetricsDoc): HTMLElement {
    return el(
      "div",
      { class: "status-row" },
      el("span", {
        class: `badge status-badge status-${metrics.status}`,
        "data-status": metrics.status,
        text: metrics.status.replace(/_/g, " "),
      }),
      el("span", { class: "node", text: `node: ${metrics.node}` }),
      el("span", {
        class: "last-run",
        text: `last run: ${metrics.last_run ?? "never"}`,
      }),
      el("span", {
        class: "next-run",
        text: `next run: ${metrics.next_run ?? "not scheduled"}`,
      }),
      el("span", {
        class: "deposit-count",
        text: `deposits: ${metrics.deposits}`,
      }),
      el("span", {
        class: "trend-count",
        text: `trend signals: ${metrics.trend_count}`,
      }),
    );
  }

  private renderFunnel(metrics: MetricsDoc): HTMLElement {
    const chart = el("div", {
      class: "funnel",
      role: "img",
      "aria-label": "search funnel per iteration",
    });
    if (metrics.funnel.length === 0) {
      chart.append(el("p", { class: "empty", text: "No iterations yet." }));
      return chart;
    }
    const widest = Math.max(
      1,
      ...metrics.funnel.map((point) => point.raw_hits),
    );
    for (const point of metrics.funnel) {
      const group = el("div", {
        class: "funnel-iteration",
        "data-iteration-id": point.iteration_id,
      }, el("h4", { text: `${point.iteration_id} (${point.status})` }));
      for (const stage of STAGES) {
        const value = point[stage];
        const bar = el("div", {
          class: `bar bar-${stage}`,
          "data-metric": stage,
          "data-value": String(value),
          style: `width: ${(value / widest) * 100}%`,
          text: `${STAGE_LABEL[stage]}: ${value}`,
        });
        group.append(bar);
      }
      chart.append(group);
    }
    return chart;
  }

  private renderStates(metrics: MetricsDoc): HTMLElement {
    const table = el("table", { class: "state-breakdown" });
    const body = el("tbody", {});
    for (const [state, count] of Object.entries(metrics.candidates_by_state)) {
      body.append(el(
        "tr",
        { "data-state": state },
        el("td", { text: state.replace(/_/g, " ") }),
        el("td", { class: "count", text: String(count) }),
      ));
    }
    table.append(body);
    return table;
  }

  private setStale(stale: boolean): void {
    if (stale) {
      this.staleBadge.removeAttribute("hidden");
    } else {
      this.staleBadge.setAttribute("hidden", "hidden");
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
