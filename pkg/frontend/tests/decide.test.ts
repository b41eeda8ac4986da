import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DecideView } from "../src/views/decide.js";
import { MockServer, makeCandidate } from "./helpers.js";

function setup() {
  const server = new MockServer("demo-review");
  server.candidates.set("c01", makeCandidate("c01", { state: "included" }));
  server.candidates.set("c02", makeCandidate("c02", {
    state: "included", trend: true,
  }));
  const api = new ApiClient("", server.fetch);
  const view = new DecideView(api, "demo-review", { reviewer: () => "chair" });
  document.body.innerHTML = "";
  document.body.append(view.root);
  return { server, api, view };
}

async function flush(rounds = 10): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function stepIndex(): string | undefined {
  return document.querySelector<HTMLElement>(".wizard-step")
    ?.dataset.stepIndex;
}

function answer(label: "yes" | "no" | "not_applicable"): void {
  document.querySelector<HTMLButtonElement>(`button.answer-${label}`)!
    .click();
}

describe("update-decision wizard", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("opens a session and shows step 1 with the evidence panel", async () => {
    const { view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    expect(stepIndex()).toBe("1");
    const evidence = document.querySelector<HTMLElement>(".evidence")!;
    expect(evidence.textContent).toContain("Included candidates: 2");
    expect(evidence.textContent).toContain("Trend signals: 1");
  });

  it("presents exactly one step at a time, in order", async () => {
    const { view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    expect(document.querySelectorAll(".wizard-step")).toHaveLength(1);
    answer("yes");
    await flush();
    expect(stepIndex()).toBe("2");
    expect(document.querySelectorAll(".wizard-step")).toHaveLength(1);
  });

  it("walks all seven steps and shows the update-needed banner", async () => {
    const { server, view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    for (let step = 1; step <= 7; step++) {
      answer(step === 4 ? "not_applicable" : "yes");
      await flush();
    }
    const banner = document.querySelector<HTMLElement>(".outcome")!;
    expect(banner.dataset.outcome).toBe("update_needed");
    expect(banner.textContent).toBe("Update needed");
    expect(server.mutations().map((m) => m.path.split("/").pop()))
      .toEqual(["sessions", ...Array(7).fill("answers"), "evaluate"]);
  });

  it("ends immediately with no-update when gate 1 disqualifies", async () => {
    const { server, view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    answer("no");
    await flush();
    const banner = document.querySelector<HTMLElement>(".outcome")!;
    expect(banner.dataset.outcome).toBe("no_update");
    expect(document.querySelector(".wizard-step")).toBeNull();
    expect(document.querySelector(".answered-count")!.textContent)
      .toContain("1 of 7");
    const session = server.sessions[0]!;
    expect(session.outcome).toBe("no_update");
    expect(session.answers).toHaveLength(1);
  });

  it("resumes at the first unanswered step after a reload", async () => {
    const { server, api, view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    answer("yes");
    await flush();
    answer("yes");
    await flush();
    expect(stepIndex()).toBe("3");

    // Same server state, brand new view: a page refresh.
    const reloaded = new DecideView(api, "demo-review", {
      reviewer: () => "chair",
    });
    document.body.innerHTML = "";
    document.body.append(reloaded.root);
    await reloaded.refresh();
    expect(stepIndex()).toBe("3");
    expect(server.sessions[0]!.answers).toHaveLength(2);
  });

  it("renders server rejections when another client raced ahead", async () => {
    const { api, view } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    // Another browser answers step 1 while this one still shows it.
    await api.answerStep("demo-review", {
      index: 1, answer: "yes", by: "other",
    });
    answer("yes");
    await flush();
    expect(document.querySelector<HTMLElement>(".row-error")!.textContent)
      .toContain("step 2 is next");
  });

  it("shows the sealed outcome instead of a wizard on revisit", async () => {
    const { view, api } = setup();
    await view.refresh();
    document.querySelector<HTMLButtonElement>("button.open-session")!.click();
    await flush();
    answer("no");
    await flush();
    const revisit = new DecideView(api, "demo-review", {
      reviewer: () => "chair",
    });
    document.body.innerHTML = "";
    document.body.append(revisit.root);
    await revisit.refresh();
    expect(document.querySelector<HTMLElement>(".outcome")!.dataset.outcome)
      .toBe("no_update");
    expect(document.querySelector("button.open-session")).not.toBeNull();
  });
});
