import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("fetches health and models from the documented endpoints", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValueOnce(jsonResponse({ status: "ok", store: "s", records: 3 }))
      .mockResolvedValueOnce(jsonResponse([{ model_id: "gbt-main", kind: "gbt" }]));
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient("");

    const health = await api.health();
    expect(health.records).toBe(3);
    const models = await api.listModels();
    expect(models[0].model_id).toBe("gbt-main");
    expect(fetchMock).toHaveBeenNthCalledWith(1, "/healthz", undefined);
    expect(fetchMock).toHaveBeenNthCalledWith(2, "/models", undefined);
  });

  it("posts what-if requests as JSON and returns the report body", async () => {
    const report = { from_regime: "u600_p4", n_pairs: 42 };
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse(report));
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient("");

    const body = await api.runWhatIf({
      model_id: "gbt-main",
      from_users: 600,
      from_pods: 4,
      action: "pods+1",
    });
    expect(body.n_pairs).toBe(42);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/whatif");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body)).toEqual({
      model_id: "gbt-main",
      from_users: 600,
      from_pods: 4,
      action: "pods+1",
    });
  });

  it("surfaces machine-readable error codes", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(
        jsonResponse({ code: "insufficient-pairs", achieved: 3, required: 30 }, 422),
      ),
    );
    const api = new ApiClient("");
    const err = await api
      .runWhatIf({ model_id: "m", from_users: 1, from_pods: 1, action: "pods+1" })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).code).toBe("insufficient-pairs");
  });

  it("keeps the status line when the error body is not JSON", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(new Response("boom", { status: 500, statusText: "oops" })),
    );
    const api = new ApiClient("");
    const err = await api.health().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("500 oops");
    expect((err as ApiError).code).toBeNull();
  });

  it("fetches stored reports by id", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ report_id: "abc" }));
    vi.stubGlobal("fetch", fetchMock);
    const api = new ApiClient("");
    await api.getReport("abc");
    expect(fetchMock).toHaveBeenCalledWith("/reports/abc", undefined);
  });
});
