/** Application shell: lineage picker plus three tabs (Screen, Decide,
 * Monitor). All state lives on the server; switching tabs just re-fetches.
 */

import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { DecideView } from "./views/decide.js";
import { MonitorView } from "./views/monitor.js";
import { ScreenView } from "./views/screen.js";

type TabName = "screen" | "decide" | "monitor";

export class App {
  readonly root: HTMLElement;
  private reviewerInput: HTMLInputElement;
  private lineageSelect: HTMLSelectElement;
  private tabBar: HTMLElement;
  private content: HTMLElement;
  private monitor: MonitorView | null = null;
  private active: TabName = "screen";

  constructor(private readonly api: ApiClient) {
    this.reviewerInput = el("input", {
      type: "text",
      class: "reviewer-name",
      placeholder: "your reviewer id",
      "aria-label": "reviewer id",
      value: "reviewer",
    });
    this.lineageSelect = el("select", { "aria-label": "review lineage" });
    this.lineageSelect.addEventListener("change", () => void this.showTab(this.active));
    this.tabBar = el("nav", { class: "tabs", role: "tablist" });
    for (const tab of ["screen", "decide", "monitor"] as TabName[]) {
      const button = el("button", {
        type: "button",
        role: "tab",
        class: `tab tab-${tab}`,
        "data-tab": tab,
        text: tab.charAt(0).toUpperCase() + tab.slice(1),
      });
      button.addEventListener("click", () => void this.showTab(tab));
      this.tabBar.append(button);
    }
    this.content = el("main", { class: "tab-content" });
    this.root = el(
      "div",
      { class: "app" },
      el(
        "header",
        {},
        el("h1", { text: "Review surveillance" }),
        this.lineageSelect,
        this.reviewerInput,
      ),
      this.tabBar,
      this.content,
    );
  }

  async start(): Promise<void> {
    const lineages = await this.api.listLineages();
    clear(this.lineageSelect);
    for (const lineage of lineages) {
      this.lineageSelect.append(el("option", {
        value: lineage.id,
        text: `${lineage.id} (${lineage.status.replace(/_/g, " ")})`,
      }));
    }
    if (lineages.length > 0) {
      await this.showTab("screen");
    } else {
      this.content.textContent = "No lineages registered yet.";
    }
  }

  async showTab(tab: TabName): Promise<void> {
    this.active = tab;
    this.monitor?.stop();
    this.monitor = null;
    for (const button of this.tabBar.querySelectorAll("[role=tab]")) {
      button.setAttribute(
        "aria-selected",
        button.getAttribute("data-tab") === tab ? "true" : "false",
      );
    }
    const lineageId = this.lineageSelect.value;
    clear(this.content);
    if (lineageId === "") return;
    const reviewer = () => this.reviewerInput.value.trim() || "reviewer";
    if (tab === "screen") {
      const view = new ScreenView(this.api, lineageId, { reviewer });
      this.content.append(view.root);
      await view.refresh();
    } else if (tab === "decide") {
      const view = new DecideView(this.api, lineageId, { reviewer });
      this.content.append(view.root);
      await view.refresh();
    } else {
      this.monitor = new MonitorView(this.api, lineageId);
      this.content.append(this.monitor.root);
      void this.monitor.start();
    }
  }
}

export function mount(target: HTMLElement, baseUrl = ""): App {
  const app = new App(new ApiClient(baseUrl));
  target.append(app.root);
  void app.start();
  return app;
}
