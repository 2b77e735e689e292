import { describe, expect, it } from "vitest";

import {
  DECISION_LABELS,
  decisionLabel,
  newCaseId,
  percentLabel,
  probabilityBars,
  triageColor,
} from "../src/format.js";

describe("percentLabel", () => {
  it("renders one decimal place", () => {
    expect(percentLabel(0.5)).toBe("50.0");
    expect(percentLabel(0.326671)).toBe("32.7");
    expect(percentLabel(0)).toBe("0.0");
    expect(percentLabel(1)).toBe("100.0");
  });
});

describe("probabilityBars", () => {
  it("sorts classes by probability, largest first", () => {
    const bars = probabilityBars({ mpox: 0.2, other_skin: 0.5, normal: 0.3 });
    expect(bars.map((b) => b.label)).toEqual(["other_skin", "normal", "mpox"]);
    expect(bars.map((b) => b.percent)).toEqual(["50.0", "30.0", "20.0"]);
  });

  it("folds sub-threshold classes into an 'other' row", () => {
    const bars = probabilityBars({
      mpox: 0.7,
      other_skin: 0.296,
      normal: 0.003,
      eczema: 0.001,
    });
    expect(bars.map((b) => b.label)).toEqual(["mpox", "other_skin", "other"]);
    expect(bars[2].fraction).toBeCloseTo(0.004, 10);
    expect(bars[2].percent).toBe("0.4");
  });

  it("keeps a lone sub-threshold tail unfolded", () => {
    const bars = probabilityBars({ mpox: 0.996, normal: 0.004 });
    expect(bars.map((b) => b.label)).toEqual(["mpox", "normal"]);
  });

  it("shows everything when no class clears the threshold", () => {
    const bars = probabilityBars({ a: 0.002, b: 0.003 });
    expect(bars.map((b) => b.label)).toEqual(["b", "a"]);
  });
});

describe("triageColor", () => {
  it("maps the exact triage strings the service emits", () => {
    expect(triageColor("screen_positive_isolate_and_confirm_pcr")).toBe("red");
    expect(triageColor("indeterminate_review")).toBe("amber");
    expect(triageColor("screen_negative_monitor")).toBe("green");
  });

  it("falls back to gray for anything unrecognized", () => {
    expect(triageColor("screen_positive")).toBe("gray");
    expect(triageColor("")).toBe("gray");
  });
});

describe("decisionLabel", () => {
  it("covers every decision the service accepts", () => {
    expect(decisionLabel("isolated")).toBe("Isolate");
    expect(decisionLabel("referred_pcr")).toBe("Refer for PCR");
    expect(decisionLabel("released")).toBe("Release");
    expect(decisionLabel("pending")).toBe("Pending");
    expect(Object.keys(DECISION_LABELS).sort()).toEqual(
      ["isolated", "pending", "referred_pcr", "released"]);
  });

  it("echoes unknown values unchanged", () => {
    expect(decisionLabel("escalated")).toBe("escalated");
  });
});

describe("newCaseId", () => {
  it("derives a sortable id from the clock plus a random suffix", () => {
    const now = new Date(Date.UTC(2026, 7, 14, 9, 5, 30));
    const id = newCaseId(now, () => 0.5);
    expect(id).toMatch(/^case-20260814-090530-[0-9a-z]{4}$/);
  });

  it("differs across random draws at the same instant", () => {
    const now = new Date(Date.UTC(2026, 7, 14, 9, 5, 30));
    expect(newCaseId(now, () => 0.1)).not.toBe(newCaseId(now, () => 0.9));
  });
});
