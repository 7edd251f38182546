import { describe, expect, it } from "vitest";

import { availableActions, toRequest, validate } from "../src/state.js";

describe("availableActions", () => {
  it("offers pods-1 only above one pod", () => {
    expect(availableActions(1)).not.toContain("pods-1");
    expect(availableActions(2)).toContain("pods-1");
    expect(availableActions(6)).toContain("pods-1");
  });

  it("always offers pods+1 and the user shifts", () => {
    for (const pods of [1, 2, 5]) {
      const actions = availableActions(pods);
      expect(actions).toContain("pods+1");
      expect(actions).toContain("users:200");
      expect(actions).toContain("users:400");
      expect(actions).toContain("users:600");
    }
  });
});

describe("validate", () => {
  const base = { modelId: "gbt-main", fromUsers: 600, fromPods: 4, action: "pods+1" };

  it("accepts a well-formed request", () => {
    expect(validate(base)).toBeNull();
  });

  it("blocks pods-1 at pods=1 before any request is sent", () => {
    expect(validate({ ...base, fromPods: 1, action: "pods-1" })).toBe(
      "cannot scale below one pod",
    );
    expect(() => toRequest({ ...base, fromPods: 1, action: "pods-1" })).toThrow(
      /below one pod/,
    );
  });

  it("rejects missing model and malformed numbers", () => {
    expect(validate({ ...base, modelId: "" })).toMatch(/model/);
    expect(validate({ ...base, fromUsers: -5 })).toMatch(/users/);
    expect(validate({ ...base, fromPods: 0 })).toMatch(/pods/);
    expect(validate({ ...base, fromPods: 2.5 })).toMatch(/pods/);
    expect(validate({ ...base, action: "pods+2" })).toMatch(/unknown action/);
  });
});

describe("toRequest", () => {
  it("maps the form onto the service request schema", () => {
    expect(
      toRequest({ modelId: "gbt-main", fromUsers: 600, fromPods: 4, action: "users:200" }),
    ).toEqual({
      model_id: "gbt-main",
      from_users: 600,
      from_pods: 4,
      action: "users:200",
    });
  });
});
