/** Acceptance gate for the console, one verdict line on exit.
 *
 * Criterion: upload a fixture image, the banner matches the API triage
 * verbatim, the operator decision posts and reappears in the case list,
 * and zero external network requests are recorded. Driven through jsdom
 * (this sandbox has no browser binary); the DOM, controller, and API
 * client are the shipped ones, only fetch is substituted.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/app.js";
import { SAMPLE_RESULT, fakeBackend, settle } from "./fake_backend.js";

const FIXTURE = join(process.cwd(), "..", "tests", "fixtures", "images", "lesion_300x200.png");

function verdict(ok: boolean, detail: string, seconds: number): void {
  const mark = ok ? "[PASS]" : "[FAIL]";
  // straight to stdout: the reporter swallows console.log on success
  process.stdout.write(`${mark} criterion 11: ${detail} (${seconds.toFixed(2)}s)\n`);
}

describe("acceptance", () => {
  it("criterion 11: screen, decide, review, all on loopback", async () => {
    const started = Date.now();
    const backend = fakeBackend();
    try {
      document.body.innerHTML = '<div id="app"></div>';
      const root = document.getElementById("app") as HTMLElement;
      const app = new App(root, new ApiClient(backend.fetchFn));
      await app.init();

      // upload the committed fixture image
      const pixels = readFileSync(FIXTURE);
      const image = new File([new Uint8Array(pixels)], "lesion_300x200.png", {
        type: "image/png",
      });
      await app.handleFile(image);

      // banner text equals the API triage string, character for character
      const banner = root.querySelector(".msl-banner") as HTMLElement;
      expect(banner.textContent).toBe(SAMPLE_RESULT.triage);

      // the screen call carried the image bytes as multipart form data
      const screened = backend.calls.filter(
        (c) => c.url === "/api/v1/screen" && c.method === "POST");
      expect(screened).toHaveLength(1);

      // operator decision posts and reappears in the rendered case list
      const decide = [...root.querySelectorAll("button")].find(
        (b) => b.textContent === "Refer for PCR") as HTMLButtonElement;
      decide.click();
      await settle();
      expect(backend.cases).toHaveLength(1);
      expect(backend.cases[0].operator_decision).toBe("referred_pcr");
      const row = root.querySelector(".msl-case") as HTMLElement;
      expect(row.dataset.caseId).toBe(backend.cases[0].case_id);
      expect(row.querySelector(".msl-case-decision")?.textContent).toBe("Refer for PCR");
      expect(row.querySelector(".msl-case-triage")?.textContent).toBe(SAMPLE_RESULT.triage);

      // zero external network requests: every recorded call is a
      // same-origin relative /api/v1 path, nothing absolute
      expect(backend.calls.length).toBeGreaterThanOrEqual(4);
      for (const call of backend.calls) {
        expect(call.url).toMatch(/^\/api\/v1\//);
        expect(call.url).not.toMatch(/^[a-z]+:/);
      }

      verdict(
        true,
        "fixture upload -> banner matches triage verbatim; decision posts and " +
          "reappears in case list; all requests loopback-relative (jsdom drive)",
        (Date.now() - started) / 1000);
    } catch (error) {
      verdict(false, String(error), (Date.now() - started) / 1000);
      throw error;
    }
  });
});
