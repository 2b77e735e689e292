/** Screening console controller: one screen flow, one case list.
 *
 * The controller owns application state and wires the API client to
 * the view builders. Every API call is sequential per user action and
 * every failure lands in one error surface with retry where sensible.
 */

import { ApiClient, ApiError, MAX_IMAGE_BYTES, ServiceUnreachable } from "./api.js";
import { decisionLabel, newCaseId } from "./format.js";
import type { Decision, ScreeningResult } from "./types.js";
import { DECISIONS } from "./types.js";
import {
  DISCLAIMER,
  clearError,
  renderBanner,
  renderBars,
  renderCases,
  renderError,
  renderResultMeta,
} from "./views.js";

export class App {
  private lastResult: ScreeningResult | null = null;
  private lastFile: File | null = null;
  private currentCaseId = "";
  private caseFiled = false;

  private errorBox!: HTMLElement;
  private preview!: HTMLImageElement;
  private resultSection!: HTMLElement;
  private banner!: HTMLElement;
  private barsBox!: HTMLElement;
  private metaLine!: HTMLElement;
  private decisionButtons: HTMLButtonElement[] = [];
  private caseList!: HTMLElement;
  private fileInput!: HTMLInputElement;
  private modelLine!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  async init(): Promise<void> {
    this.buildLayout();
    await this.loadModelLine();
    await this.refreshCases();
  }

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  private make<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className: string,
    parent: HTMLElement,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    node.className = className;
    if (text !== undefined) node.textContent = text;
    parent.appendChild(node);
    return node;
  }

  private buildLayout(): void {
    this.root.textContent = "";

    const header = this.make("header", "msl-header", this.root);
    this.make("h1", "msl-title", header, "Mpox screening console");
    this.modelLine = this.make("p", "msl-model", header, "");
    this.make("p", "msl-disclaimer", header, DISCLAIMER);

    this.errorBox = this.make("div", "msl-error", this.root);
    this.errorBox.hidden = true;

    const capture = this.make("section", "msl-capture", this.root);
    const pick = this.make("label", "msl-pick", capture, "Capture or choose an image");
    this.fileInput = this.make("input", "msl-file", pick);
    this.fileInput.type = "file";
    this.fileInput.accept = "image/*";
    // Field phones open the camera; everything else falls back to a picker.
    this.fileInput.setAttribute("capture", "environment");
    this.fileInput.addEventListener("change", () => {
      const file = this.fileInput.files?.[0];
      if (file) void this.handleFile(file);
    });

    const drop = this.make("div", "msl-drop", capture, "or drop it here");
    drop.addEventListener("dragover", (event) => event.preventDefault());
    drop.addEventListener("drop", (event) => {
      event.preventDefault();
      const file = event.dataTransfer?.files?.[0];
      if (file) void this.handleFile(file);
    });

    this.preview = this.make("img", "msl-preview", capture);
    this.preview.alt = "selected image";
    this.preview.hidden = true;

    this.resultSection = this.make("section", "msl-result", this.root);
    this.resultSection.hidden = true;
    this.banner = this.make("div", "msl-banner", this.resultSection);
    this.barsBox = this.make("div", "msl-bars", this.resultSection);
    this.metaLine = this.make("p", "msl-meta", this.resultSection);

    const decisions = this.make("div", "msl-decisions", this.resultSection);
    for (const decision of DECISIONS) {
      this.addDecisionButton(decisions, decisionLabel(decision), decision);
    }
    this.addDecisionButton(decisions, "Log as pending", null);

    const casesSection = this.make("section", "msl-cases-section", this.root);
    const casesHeader = this.make("div", "msl-cases-header", casesSection);
    this.make("h2", "msl-cases-title", casesHeader, "Session cases");
    const refresh = this.make("button", "msl-refresh", casesHeader, "Refresh");
    refresh.type = "button";
    refresh.addEventListener("click", () => void this.refreshCases());
    this.caseList = this.make("div", "msl-case-list", casesSection);
  }

  private addDecisionButton(
    parent: HTMLElement,
    label: string,
    decision: Decision | null,
  ): void {
    const button = this.make("button", "msl-decide", parent, label);
    button.type = "button";
    button.disabled = true;
    button.addEventListener("click", () => void this.fileCase(decision));
    this.decisionButtons.push(button);
  }

  private async loadModelLine(): Promise<void> {
    try {
      const info = await this.api.model();
      this.modelLine.textContent =
        `model ${info.model_name} (${info.param_count.toLocaleString()} parameters)`;
    } catch {
      this.modelLine.textContent = "model unavailable";
    }
  }

  async handleFile(file: File): Promise<void> {
    clearError(this.errorBox);
    if (file.size > MAX_IMAGE_BYTES) {
      renderError(this.errorBox, "toolarge", `${file.name} is ${file.size} bytes`);
      return;
    }
    this.lastFile = file;
    this.showPreview(file);
    try {
      const result = await this.api.screen(file, file.name);
      this.showResult(result);
    } catch (error) {
      this.handleFailure(error, () => {
        if (this.lastFile) void this.handleFile(this.lastFile);
      });
    }
  }

  private showPreview(file: File): void {
    const reader = new FileReader();
    reader.addEventListener("load", () => {
      this.preview.src = reader.result as string;
      this.preview.hidden = false;
    });
    reader.readAsDataURL(file);
  }

  private showResult(result: ScreeningResult): void {
    this.lastResult = result;
    this.currentCaseId = newCaseId();
    this.caseFiled = false;
    this.resultSection.hidden = false;
    renderBanner(this.banner, result.triage);
    renderBars(this.barsBox, result.probabilities);
    renderResultMeta(this.metaLine, result);
    for (const button of this.decisionButtons) button.disabled = false;
  }

  /** File the current result as a case; null decision leaves it pending. */
  async fileCase(decision: Decision | null): Promise<void> {
    if (!this.lastResult || this.caseFiled) return;
    clearError(this.errorBox);
    try {
      await this.api.createCase(
        this.currentCaseId,
        this.lastResult,
        decision ?? undefined,
      );
      this.caseFiled = true;
      for (const button of this.decisionButtons) button.disabled = true;
      await this.refreshCases();
    } catch (error) {
      this.handleFailure(error, () => void this.fileCase(decision));
    }
  }

  async decideExisting(caseId: string, decision: Decision): Promise<void> {
    clearError(this.errorBox);
    try {
      await this.api.decideCase(caseId, decision);
      await this.refreshCases();
    } catch (error) {
      this.handleFailure(error, () => void this.decideExisting(caseId, decision));
    }
  }

  async refreshCases(): Promise<void> {
    try {
      const cases = await this.api.listCases();
      renderCases(this.caseList, cases, (caseId, decision) =>
        void this.decideExisting(caseId, decision));
    } catch (error) {
      this.handleFailure(error, () => void this.refreshCases());
    }
  }

  private handleFailure(error: unknown, retry: () => void): void {
    if (error instanceof ServiceUnreachable) {
      renderError(this.errorBox, "offline", "", retry);
    } else if (error instanceof ApiError && error.status === 413) {
      renderError(this.errorBox, "toolarge", error.message);
    } else if (error instanceof ApiError) {
      renderError(this.errorBox, "error", error.message);
    } else {
      renderError(this.errorBox, "error", String(error));
    }
  }
}
