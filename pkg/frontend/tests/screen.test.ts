import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { ScreenView } from "../src/views/screen.js";
import { MockServer, makeCandidate } from "./helpers.js";

function setup(quorum = 1) {
  const server = new MockServer("demo-review", quorum);
  const api = new ApiClient("", server.fetch);
  const view = new ScreenView(api, "demo-review", { reviewer: () => "ana" });
  document.body.innerHTML = "";
  document.body.append(view.root);
  return { server, api, view };
}

async function flush(rounds = 10): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function rowIds(): string[] {
  return [...document.querySelectorAll<HTMLElement>("[data-record-id]")]
    .map((row) => row.dataset.recordId!);
}

function row(id: string): HTMLElement {
  const found = document.querySelector<HTMLElement>(
    `[data-record-id="${id}"]`);
  expect(found).not.toBeNull();
  return found!;
}

describe("screening queue", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders candidates in server order", async () => {
    const { server, view } = setup();
    for (const id of ["c07", "c01", "c04", "c09"]) {
      server.candidates.set(id, makeCandidate(id));
    }
    await view.refresh();
    expect(rowIds()).toEqual(["c07", "c01", "c04", "c09"]);
  });

  it("marks conflict candidates visibly", async () => {
    const { server, view } = setup(2);
    server.candidates.set("c01", makeCandidate("c01", {
      state: "needs_consensus",
    }));
    server.candidates.set("c02", makeCandidate("c02"));
    await view.refresh();
    expect(row("c01").classList.contains("conflict")).toBe(true);
    expect(row("c01").textContent).toContain("conflict");
    expect(row("c02").classList.contains("conflict")).toBe(false);
  });

  it("posts exactly one decision per include click", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    row("c01").querySelector<HTMLButtonElement>("button.include")!.click();
    await flush();
    expect(server.mutations()).toEqual([{
      method: "POST",
      path: "/lineages/demo-review/candidates/c01/decisions",
      body: { reviewer: "ana", verdict: "include" },
    }]);
    expect(server.candidates.get("c01")!.state).toBe("included");
    expect(rowIds()).toEqual([]);
  });

  it("blocks exclude without rationale before any request", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    row("c01").querySelector<HTMLButtonElement>("button.exclude")!.click();
    await flush();
    expect(server.mutations()).toEqual([]);
    expect(row("c01").querySelector(".row-error")!.textContent)
      .toContain("rationale");
    expect(server.candidates.get("c01")!.state).toBe("prescreened");
  });

  it("sends the rationale when excluding", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    row("c01").querySelector<HTMLTextAreaElement>(".rationale")!.value =
      "off topic";
    row("c01").querySelector<HTMLButtonElement>("button.exclude")!.click();
    await flush();
    expect(server.mutations()).toEqual([{
      method: "POST",
      path: "/lineages/demo-review/candidates/c01/decisions",
      body: { reviewer: "ana", verdict: "exclude", rationale: "off topic" },
    }]);
    expect(server.candidates.get("c01")!.state).toBe("excluded");
  });

  it("is also rejected server side when a bare exclude is forced", async () => {
    const { server, api } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await expect(api.decide("demo-review", "c01", {
      reviewer: "ana",
      verdict: "exclude",
    })).rejects.toMatchObject({ code: "validation" });
  });

  it("shows the conflict state after a disagreeing second verdict", async () => {
    const { server, api, view } = setup(2);
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    row("c01").querySelector<HTMLButtonElement>("button.include")!.click();
    await flush();
    // A second reviewer in another browser disagrees.
    await api.decide("demo-review", "c01", {
      reviewer: "ben", verdict: "exclude", rationale: "wrong population",
    });
    await view.refresh();
    expect(row("c01").dataset.state).toBe("needs_consensus");
    expect(row("c01").classList.contains("conflict")).toBe(true);
  });

  it("toggles the trend flag with one call each way", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    row("c01").querySelector<HTMLButtonElement>("button.trend-toggle")!
      .click();
    await flush();
    expect(server.mutations()).toEqual([{
      method: "POST",
      path: "/lineages/demo-review/candidates/c01/trend",
      body: { actor: "ana", flagged: true },
    }]);
    expect(server.candidates.get("c01")!.trend).toBe(true);
    const toggle = row("c01")
      .querySelector<HTMLButtonElement>("button.trend-toggle")!;
    expect(toggle.getAttribute("aria-pressed")).toBe("true");
    toggle.click();
    await flush();
    expect(server.candidates.get("c01")!.trend).toBe(false);
  });

  it("surfaces API failures inline and retries the same action", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    server.failOnce("/decisions");
    row("c01").querySelector<HTMLButtonElement>("button.include")!.click();
    await flush();
    const error = row("c01").querySelector<HTMLElement>(".row-error")!;
    expect(error.textContent).toContain("Request failed");
    const retry = error.querySelector<HTMLButtonElement>("button.retry");
    expect(retry).not.toBeNull();
    expect(server.candidates.get("c01")!.state).toBe("prescreened");
    retry!.click();
    await flush();
    expect(server.candidates.get("c01")!.state).toBe("included");
    expect(server.mutations()).toHaveLength(2);
  });

  it("uses real buttons so actions stay keyboard operable", async () => {
    const { server, view } = setup();
    server.candidates.set("c01", makeCandidate("c01"));
    await view.refresh();
    for (const selector of ["button.include", "button.exclude",
                            "button.trend-toggle"]) {
      const button = row("c01").querySelector(selector);
      expect(button).toBeInstanceOf(HTMLButtonElement);
      expect((button as HTMLButtonElement).type).toBe("button");
    }
  });
});

describe("api client errors", () => {
  it("wraps error envelopes with their server code", async () => {
    const { api } = setup();
    await expect(api.decide("demo-review", "missing", {
      reviewer: "ana", verdict: "include",
    })).rejects.toBeInstanceOf(ApiError);
    await expect(api.decide("demo-review", "missing", {
      reviewer: "ana", verdict: "include",
    })).rejects.toMatchObject({ code: "not_found", httpStatus: 404 });
  });
});
