/** Scripted end-to-end dashboard flow against the audited mock service.
 *
 * Screens a 10-candidate queue (include 6, exclude 4 with rationales),
 * completes a fully qualifying decision wizard, and watches the status
 * badge flip to "suitable for update" via the event poll. The audit log
 * must show exactly one API call per UI mutation, in order. Also checks
 * that the funnel bars equal the metrics values exactly.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DecideView } from "../src/views/decide.js";
import { MonitorView } from "../src/views/monitor.js";
import { ScreenView } from "../src/views/screen.js";
import { MockServer, makeCandidate } from "./helpers.js";

async function flush(rounds = 10): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function row(id: string): HTMLElement {
  return document.querySelector<HTMLElement>(`[data-record-id="${id}"]`)!;
}

describe("dashboard contract", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("screens, decides, and flips the badge with 1:1 audited calls", async () => {
    const server = new MockServer("demo-review");
    const ids = Array.from({ length: 10 }, (_, i) =>
      `q${String(i + 1).padStart(2, "0")}`);
    for (const id of ids) {
      server.candidates.set(id, makeCandidate(id));
    }
    server.funnel = [{
      iteration_id: "it-0001", raw_hits: 300, window_hits: 120,
      new_unique: 80, status: "ok",
    }];
    const api = new ApiClient("", server.fetch);

    // Screen: queue renders all 10 in server order, then include 6 and
    // exclude 4 with rationales.
    const screen = new ScreenView(api, "demo-review", {
      reviewer: () => "ana",
    });
    document.body.append(screen.root);
    await screen.refresh();
    expect(
      [...document.querySelectorAll<HTMLElement>("[data-record-id]")]
        .map((r) => r.dataset.recordId),
    ).toEqual(ids);

    for (const id of ids.slice(0, 6)) {
      row(id).querySelector<HTMLButtonElement>("button.include")!.click();
      await flush();
    }
    for (const id of ids.slice(6)) {
      row(id).querySelector<HTMLTextAreaElement>(".rationale")!.value =
        `not in scope: ${id}`;
      row(id).querySelector<HTMLButtonElement>("button.exclude")!.click();
      await flush();
    }
    expect(document.querySelector(".queue")!.textContent)
      .toContain("Queue is empty");
    const included = [...server.candidates.values()]
      .filter((c) => c.state === "included");
    const excluded = [...server.candidates.values()]
      .filter((c) => c.state === "excluded");
    expect(included).toHaveLength(6);
    expect(excluded).toHaveLength(4);
    expect(excluded.every((c) =>
      c.decisions[0]!.rationale!.startsWith("not in scope"))).toBe(true);

    // Decide: a fully qualifying walk through all seven steps.
    const decide = new DecideView(api, "demo-review", {
      reviewer: () => "chair",
    });
    document.body.innerHTML = "";
    document.body.append(decide.root);
    await decide.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    expect(document.querySelector(".evidence")!.textContent)
      .toContain("Included candidates: 6");
    for (let step = 1; step <= 7; step++) {
      document.querySelector<HTMLButtonElement>("button.answer-yes")!
        .click();
      await flush();
    }
    expect(document.querySelector<HTMLElement>(".outcome")!.dataset.outcome)
      .toBe("update_needed");

    // Monitor: the flag event arrives through the poll and flips the badge
    // without any reload.
    const monitor = new MonitorView(api, "demo-review", 0);
    document.body.innerHTML = "";
    document.body.append(monitor.root);
    server.status = "up_to_date"; // what the page believed before the poll
    await monitor.refresh();
    expect(document.querySelector<HTMLElement>(".status-badge")!
      .dataset.status).toBe("up_to_date");
    server.status = "suitable_for_update";
    await monitor.pollOnce(); // sees the flagged event from the evaluate
    const badge = document.querySelector<HTMLElement>(".status-badge")!;
    expect(badge.dataset.status).toBe("suitable_for_update");
    expect(badge.textContent).toBe("suitable for update");

    // Funnel fidelity: bar values equal the metrics exactly.
    const bars = [...document.querySelectorAll<HTMLElement>(".bar")];
    expect(bars.map((b) => Number(b.dataset.value))).toEqual([300, 120, 80]);

    // Audit: every UI mutation maps to exactly one API call, in order.
    const decisionPath = (id: string) =>
      `/lineages/demo-review/candidates/${id}/decisions`;
    expect(server.mutations().map((m) => [m.method, m.path])).toEqual([
      ...ids.slice(0, 6).map((id) => ["POST", decisionPath(id)]),
      ...ids.slice(6).map((id) => ["POST", decisionPath(id)]),
      ["POST", "/lineages/demo-review/sessions"],
      ...Array(7).fill(["POST", "/lineages/demo-review/sessions/answers"]),
      ["POST", "/lineages/demo-review/sessions/evaluate"],
    ]);
  });
});
