/** DOM rendering: small, stateless builders the controller composes.
 *
 * The triage banner invariant lives here: its text content is exactly
 * the API triage string, color is the only presentation added.
 */

import type { Bar } from "./format.js";
import { decisionLabel, probabilityBars, triageColor } from "./format.js";
import type { CaseEntry, Decision, ScreeningResult } from "./types.js";
import { DECISIONS, PENDING } from "./types.js";

export const DISCLAIMER =
  "Screening aid, not a diagnosis; confirm positives with PCR.";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(target: HTMLElement, triage: string): void {
  target.textContent = triage;
  target.className = `msl-banner msl-banner-${triageColor(triage)}`;
  target.hidden = false;
}

export function renderBars(target: HTMLElement, probs: Record<string, number>): Bar[] {
  const doc = target.ownerDocument;
  target.textContent = "";
  const bars = probabilityBars(probs);
  for (const entry of bars) {
    const row = el(doc, "div", "msl-bar");
    row.appendChild(el(doc, "span", "msl-bar-label", entry.label));
    const track = el(doc, "div", "msl-bar-track");
    const fill = el(doc, "div", "msl-bar-fill");
    fill.style.width = `${entry.percent}%`;
    track.appendChild(fill);
    row.appendChild(track);
    row.appendChild(el(doc, "span", "msl-bar-value", `${entry.percent}%`));
    target.appendChild(row);
  }
  return bars;
}

export function renderResultMeta(target: HTMLElement, result: ScreeningResult): void {
  target.textContent =
    `predicted ${result.predicted} by ${result.model_name} ` +
    `in ${result.inference_ms.toFixed(1)} ms`;
}

export function renderCases(
  target: HTMLElement,
  cases: CaseEntry[],
  onDecide: (caseId: string, decision: Decision) => void,
): void {
  const doc = target.ownerDocument;
  target.textContent = "";
  if (cases.length === 0) {
    target.appendChild(el(doc, "p", "msl-empty", "No cases logged this session."));
    return;
  }
  for (const entry of cases) {
    const row = el(doc, "div", "msl-case");
    row.dataset.caseId = entry.case_id;

    const dot = el(doc, "span", `msl-dot msl-dot-${triageColor(entry.result.triage)}`);
    dot.title = entry.result.triage;
    row.appendChild(dot);

    row.appendChild(el(doc, "span", "msl-case-id", entry.case_id));
    row.appendChild(el(doc, "span", "msl-case-triage", entry.result.triage));
    row.appendChild(
      el(doc, "span", "msl-case-decision", decisionLabel(entry.operator_decision)),
    );
    if (entry.notes) {
      row.appendChild(el(doc, "span", "msl-case-notes", entry.notes));
    }

    if (entry.operator_decision === PENDING) {
      const actions = el(doc, "span", "msl-case-actions");
      for (const decision of DECISIONS) {
        const button = el(doc, "button", "msl-mini", decisionLabel(decision));
        button.type = "button";
        button.addEventListener("click", () => onDecide(entry.case_id, decision));
        actions.appendChild(button);
      }
      row.appendChild(actions);
    }
    target.appendChild(row);
  }
}

export type ErrorKind = "offline" | "toolarge" | "error";

export function renderError(
  target: HTMLElement,
  kind: ErrorKind,
  detail: string,
  onRetry?: () => void,
): void {
  const doc = target.ownerDocument;
  target.textContent = "";
  target.hidden = false;
  target.className = `msl-error msl-error-${kind}`;
  const message =
    kind === "offline"
      ? "Service unreachable. Is `msl serve` running on this device?"
      : kind === "toolarge"
        ? "Image exceeds the 10 MB limit; retake at a lower resolution."
        : detail;
  target.appendChild(el(doc, "span", "msl-error-text", message));
  if (kind !== "offline" && detail && detail !== message) {
    target.appendChild(el(doc, "span", "msl-error-detail", detail));
  }
  if (kind === "offline" && onRetry) {
    const retry = el(doc, "button", "msl-retry", "Retry");
    retry.type = "button";
    retry.addEventListener("click", onRetry);
    target.appendChild(retry);
  }
}

export function clearError(target: HTMLElement): void {
  target.textContent = "";
  target.hidden = true;
}
