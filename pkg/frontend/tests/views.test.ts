import { describe, expect, it, vi } from "vitest";

import type { CaseEntry } from "../src/types.js";
import {
  DISCLAIMER,
  clearError,
  renderBanner,
  renderBars,
  renderCases,
  renderError,
  renderResultMeta,
} from "../src/views.js";
import { SAMPLE_RESULT } from "./fake_backend.js";

const box = () => document.createElement("div");

describe("renderBanner", () => {
  it("shows the triage string verbatim with its signal color", () => {
    const pairs: Array<[string, string]> = [
      ["screen_positive_isolate_and_confirm_pcr", "red"],
      ["indeterminate_review", "amber"],
      ["screen_negative_monitor", "green"],
    ];
    for (const [triage, color] of pairs) {
      const target = box();
      renderBanner(target, triage);
      expect(target.textContent).toBe(triage);
      expect(target.className).toBe(`msl-banner msl-banner-${color}`);
      expect(target.hidden).toBe(false);
    }
  });

  it("keeps unknown strings readable on a gray banner", () => {
    const target = box();
    renderBanner(target, "some_future_level");
    expect(target.textContent).toBe("some_future_level");
    expect(target.className).toContain("msl-banner-gray");
  });
});

describe("renderBars", () => {
  it("builds one labeled row per bar with percent widths", () => {
    const target = box();
    renderBars(target, { mpox: 0.7, other_skin: 0.2, normal: 0.1 });
    const rows = target.querySelectorAll(".msl-bar");
    expect(rows).toHaveLength(3);
    const labels = [...target.querySelectorAll(".msl-bar-label")].map((n) => n.textContent);
    expect(labels).toEqual(["mpox", "other_skin", "normal"]);
    const first = rows[0] as HTMLElement;
    const fill = first.querySelector(".msl-bar-fill") as HTMLElement;
    // CSSOM drops the trailing zero when it re-serializes the width
    expect(fill.style.width).toMatch(/^70(\.0)?%$/);
    expect(first.querySelector(".msl-bar-value")?.textContent).toBe("70.0%");
  });

  it("replaces previous content on rerender", () => {
    const target = box();
    renderBars(target, { a: 0.5, b: 0.5 });
    renderBars(target, { a: 1.0 });
    expect(target.querySelectorAll(".msl-bar")).toHaveLength(1);
  });
});

describe("renderResultMeta", () => {
  it("summarizes prediction, model, and latency", () => {
    const target = box();
    renderResultMeta(target, SAMPLE_RESULT);
    expect(target.textContent).toBe("predicted normal by msl-nano-144 in 8.1 ms");
  });
});

describe("renderCases", () => {
  const entry = (id: string, decision: string, notes = ""): CaseEntry => ({
    case_id: id,
    result: SAMPLE_RESULT,
    operator_decision: decision,
    notes,
  });

  it("shows an empty-session message when there are no cases", () => {
    const target = box();
    renderCases(target, [], () => {});
    expect(target.textContent).toBe("No cases logged this session.");
  });

  it("renders id, verbatim triage, decision label, and a triage dot", () => {
    const target = box();
    renderCases(target, [entry("c-9", "referred_pcr", "left arm")], () => {});
    const row = target.querySelector(".msl-case") as HTMLElement;
    expect(row.dataset.caseId).toBe("c-9");
    expect(row.querySelector(".msl-case-id")?.textContent).toBe("c-9");
    expect(row.querySelector(".msl-case-triage")?.textContent).toBe("indeterminate_review");
    expect(row.querySelector(".msl-case-decision")?.textContent).toBe("Refer for PCR");
    expect(row.querySelector(".msl-case-notes")?.textContent).toBe("left arm");
    const dot = row.querySelector(".msl-dot") as HTMLElement;
    expect(dot.className).toContain("msl-dot-amber");
    expect(dot.title).toBe("indeterminate_review");
  });

  it("offers decision buttons only while a case is pending", () => {
    const target = box();
    const onDecide = vi.fn();
    renderCases(target, [entry("c-1", "pending"), entry("c-2", "isolated")], onDecide);
    const rows = target.querySelectorAll(".msl-case");
    const pendingButtons = rows[0].querySelectorAll("button.msl-mini");
    expect([...pendingButtons].map((b) => b.textContent)).toEqual(
      ["Isolate", "Refer for PCR", "Release"]);
    expect(rows[1].querySelectorAll("button")).toHaveLength(0);

    (pendingButtons[2] as HTMLButtonElement).click();
    expect(onDecide).toHaveBeenCalledWith("c-1", "released");
  });
});

describe("renderError and clearError", () => {
  it("points offline users at the local service with a retry hook", () => {
    const target = box();
    const onRetry = vi.fn();
    renderError(target, "offline", "", onRetry);
    expect(target.hidden).toBe(false);
    expect(target.textContent).toContain("Service unreachable");
    expect(target.textContent).toContain("msl serve");
    const retry = target.querySelector("button.msl-retry") as HTMLButtonElement;
    retry.click();
    expect(onRetry).toHaveBeenCalledTimes(1);
  });

  it("gives concrete guidance for oversized images", () => {
    const target = box();
    renderError(target, "toolarge", "big.png is 11000000 bytes");
    expect(target.textContent).toContain("10 MB limit");
    expect(target.textContent).toContain("big.png is 11000000 bytes");
    expect(target.querySelector("button")).toBeNull();
  });

  it("shows service detail text for generic errors", () => {
    const target = box();
    renderError(target, "error", "unsupported or corrupt image");
    expect(target.className).toContain("msl-error-error");
    expect(target.textContent).toBe("unsupported or corrupt image");
  });

  it("clears back to hidden", () => {
    const target = box();
    renderError(target, "error", "x");
    clearError(target);
    expect(target.hidden).toBe(true);
    expect(target.textContent).toBe("");
  });
});

describe("disclaimer", () => {
  it("states the screening-only scope", () => {
    expect(DISCLAIMER).toBe("Screening aid, not a diagnosis; confirm positives with PCR.");
  });
});
