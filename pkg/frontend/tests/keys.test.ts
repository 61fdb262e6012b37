import { describe, expect, it } from "vitest";

import { commandFor, helpLines } from "../src/keys.js";

describe("commandFor", () => {
  it.each([
    ["a", { kind: "decide", decision: "accept_use" }],
    ["m", { kind: "decide", decision: "accept_mention" }],
    ["x", { kind: "decide", decision: "reject" }],
    ["j", { kind: "begin_adjust" }],
    ["s", { kind: "skip" }],
    ["g", { kind: "refresh" }],
    ["u", { kind: "retry" }],
  ])("maps %s in review mode", (key, command) => {
    expect(commandFor(key, "review")).toEqual(command);
  });

  it.each([
    ["Enter", false, { kind: "commit_adjust" }],
    ["Escape", false, { kind: "cancel_adjust" }],
    ["ArrowRight", false, { kind: "move", which: "end", delta: 1 }],
    ["ArrowLeft", false, { kind: "move", which: "end", delta: -1 }],
    ["ArrowRight", true, { kind: "move", which: "start", delta: 1 }],
    ["ArrowLeft", true, { kind: "move", which: "start", delta: -1 }],
  ])("maps %s (shift=%s) in adjust mode", (key, shift, command) => {
    expect(commandFor(key, "adjust", shift)).toEqual(command);
  });

  it("keeps decision keys inert while adjusting", () => {
    expect(commandFor("a", "adjust")).toBeNull();
    expect(commandFor("x", "adjust")).toBeNull();
  });

  it("keeps adjust keys inert while reviewing", () => {
    expect(commandFor("Enter", "review")).toBeNull();
    expect(commandFor("ArrowRight", "review")).toBeNull();
  });

  it("ignores unbound keys", () => {
    expect(commandFor("q", "review")).toBeNull();
    expect(commandFor("a", "review", true)).toBeNull();
  });
});

describe("helpLines", () => {
  it("covers every decision in review mode", () => {
    const text = helpLines("review").join("\n");
    for (const word of ["accept", "reject", "adjust", "skip"]) {
      expect(text).toContain(word);
    }
  });

  it("marks shifted bindings", () => {
    expect(helpLines("adjust").some((line) => line.startsWith("Shift+"))).toBe(true);
  });
});
