import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, MAX_IMAGE_BYTES, ServiceUnreachable } from "../src/api.js";
import { SAMPLE_RESULT, fakeBackend } from "./fake_backend.js";

interface Seen {
  url: string;
  init: RequestInit | undefined;
}

function recording(respond: (url: string, init?: RequestInit) => Response) {
  const seen: Seen[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    seen.push({ url: String(input), init });
    return respond(String(input), init);
  }) as typeof fetch;
  return { seen, client: new ApiClient(fetchFn) };
}

const ok = (body: unknown) =>
  new Response(JSON.stringify(body), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });

describe("ApiClient", () => {
  it("gets health and model from versioned relative paths", async () => {
    const { seen, client } = recording((url) =>
      url.endsWith("health")
        ? ok({ status: "ok", model_name: "m" })
        : ok({ model_name: "m", class_names: [], param_count: 1, node_count: 1 }));
    const health = await client.health();
    const model = await client.model();
    expect(health.status).toBe("ok");
    expect(model.model_name).toBe("m");
    expect(seen.map((s) => s.url)).toEqual(["/api/v1/health", "/api/v1/model"]);
  });

  it("screens by posting multipart form data under the 'image' key", async () => {
    const { seen, client } = recording(() => ok(SAMPLE_RESULT));
    const image = new File([new Uint8Array([1, 2, 3])], "lesion.png", {
      type: "image/png",
    });
    const result = await client.screen(image, "lesion.png");
    expect(result.triage).toBe(SAMPLE_RESULT.triage);
    expect(seen).toHaveLength(1);
    expect(seen[0].url).toBe("/api/v1/screen");
    expect(seen[0].init?.method).toBe("POST");
    const body = seen[0].init?.body;
    expect(body).toBeInstanceOf(FormData);
    const part = (body as FormData).get("image");
    expect(part).toBeInstanceOf(File);
    expect((part as File).name).toBe("lesion.png");
    // content type must come from the form boundary, not a manual header
    expect(seen[0].init?.headers).toBeUndefined();
  });

  it("unwraps the cases envelope", async () => {
    const { client } = recording(() =>
      ok({
        cases: [
          { case_id: "c1", result: SAMPLE_RESULT, operator_decision: "pending", notes: "" },
        ],
      }));
    const cases = await client.listCases();
    expect(cases).toHaveLength(1);
    expect(cases[0].case_id).toBe("c1");
  });

  it("creates a case with the full result attached", async () => {
    const { seen, client } = recording(() =>
      ok({ case_id: "c1", result: SAMPLE_RESULT, operator_decision: "isolated", notes: "" }));
    await client.createCase("c1", SAMPLE_RESULT, "isolated");
    const payload = JSON.parse(String(seen[0].init?.body));
    expect(payload).toEqual({
      case_id: "c1",
      result: SAMPLE_RESULT,
      operator_decision: "isolated",
    });
    expect(seen[0].init?.headers).toEqual({ "Content-Type": "application/json" });
  });

  it("omits operator_decision when filing as pending", async () => {
    const { seen, client } = recording(() =>
      ok({ case_id: "c1", result: SAMPLE_RESULT, operator_decision: "pending", notes: "" }));
    await client.createCase("c1", SAMPLE_RESULT);
    const payload = JSON.parse(String(seen[0].init?.body));
    expect(payload).toEqual({ case_id: "c1", result: SAMPLE_RESULT });
  });

  it("updates a decision without resending the result", async () => {
    const { seen, client } = recording(() =>
      ok({ case_id: "c1", result: SAMPLE_RESULT, operator_decision: "released", notes: "n" }));
    await client.decideCase("c1", "released", "n");
    const payload = JSON.parse(String(seen[0].init?.body));
    expect(payload).toEqual({ case_id: "c1", operator_decision: "released", notes: "n" });
  });

  it("surfaces the service detail string on errors", async () => {
    const { client } = recording(
      () => new Response(JSON.stringify({ detail: "unsupported or corrupt image" }), { status: 400 }));
    const failure = await client.screen(new Blob([""]), "x").catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(400);
    expect((failure as ApiError).message).toBe("unsupported or corrupt image");
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const { client } = recording(
      () => new Response("boom", { status: 500, statusText: "Internal Server Error" }));
    const failure = await client.health().catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).message).toBe("500 Internal Server Error");
  });

  it("wraps network failures as ServiceUnreachable", async () => {
    const client = new ApiClient((async () => {
      throw new TypeError("fetch failed");
    }) as typeof fetch);
    await expect(client.health()).rejects.toBeInstanceOf(ServiceUnreachable);
  });

  it("talks to the fake backend with service-faithful case semantics", async () => {
    const backend = fakeBackend();
    const client = new ApiClient(backend.fetchFn);

    const entry = await client.createCase("c-1", SAMPLE_RESULT);
    expect(entry.operator_decision).toBe("pending");

    const duplicate = await client.createCase("c-1", SAMPLE_RESULT).catch((e) => e);
    expect((duplicate as ApiError).status).toBe(409);

    await client.decideCase("c-1", "released");
    const second = await client.decideCase("c-1", "isolated").catch((e) => e);
    expect((second as ApiError).status).toBe(400);
    expect((second as ApiError).message).toContain("already decided");

    const cases = await client.listCases();
    expect(cases).toHaveLength(1);
    expect(cases[0].operator_decision).toBe("released");
  });

  it("enforces the documented client-side size limit constant", () => {
    expect(MAX_IMAGE_BYTES).toBe(10 * 1024 * 1024);
  });
});
