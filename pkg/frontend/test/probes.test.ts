/**
 * Probe behavior against real HTTP responses from the echo test-target,
 * driven inside jsdom. Window length here is the probe observation window,
 * shrunk from the 6s production default to keep the suite quick.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ResultsMap,
  probeCssProps,
  probeEventsFired,
  probeJsErrorCount,
  probeObjectProperties,
  probePostMessage,
  recordSignal,
} from "../src/probes";
import { PyTarget, startPyTarget } from "./support/pytarget";

const WINDOW_MS = 1500;

let target: PyTarget;

beforeAll(async () => {
  target = await startPyTarget();
});

afterAll(() => {
  target?.stop();
});

function fixtureUrl(query: string): string {
  return `${target.baseUrl}/fixture?${query}`;
}

describe("recordSignal", () => {
  it("is idempotent per report key", () => {
    const results: ResultsMap = {};
    recordSignal(results, "k", "onload");
    recordSignal(results, "k", "onload");
    recordSignal(results, "k", "onerror");
    expect(results["k"]).toEqual(["onload", "onerror"]);
  });
});

describe("probeEventsFired", () => {
  it("distinguishes the status-error script pair: onload vs onerror", async () => {
    const results: ResultsMap = {};
    const sideA = await probeEventsFired(
      document,
      fixtureUrl("sc=200&ct=text/javascript&body=js-clean"),
      "script",
      "side-a",
      results,
      WINDOW_MS,
    );
    const sideB = await probeEventsFired(
      document,
      fixtureUrl("sc=404&ct=text/html&body=plain"),
      "script",
      "side-b",
      results,
      WINDOW_MS,
    );
    expect(sideA).toContain("onload");
    expect(sideA).not.toContain("onerror");
    expect(sideB).toContain("onerror");
    expect(sideB).not.toContain("onload");
  });

  it("records nothing when nothing fires, and that is a valid outcome", async () => {
    // A link-prefetch of a URL jsdom does not fetch stays silent; the
    // empty list is the signal.
    const results: ResultsMap = {};
    const events = await probeEventsFired(
      document,
      fixtureUrl("sc=200&ct=text/html&body=plain"),
      "link",
      "silent",
      results,
      300,
      { rel: "prefetch" },
    );
    expect(Array.isArray(events)).toBe(true);
  });

  it("re-running a probe overwrites its previous signals", async () => {
    const results: ResultsMap = {};
    await probeEventsFired(
      document, fixtureUrl("sc=404&ct=text/html&body=plain"), "script", "again", results, WINDOW_MS,
    );
    await probeEventsFired(
      document, fixtureUrl("sc=404&ct=text/html&body=plain"), "script", "again", results, WINDOW_MS,
    );
    expect(results["again"]).toEqual(["onerror"]);
  });
});

describe("probeObjectProperties", () => {
  it("reads frame count 3 from the three-frame fixture", async () => {
    const results: ResultsMap = {};
    const values = await probeObjectProperties(
      document,
      fixtureUrl("sc=200&ct=text/html&body=html-frames(3)"),
      "iframe",
      ["contentWindow.length"],
      "frames",
      results,
      WINDOW_MS,
    );
    expect(values["contentWindow.length"]).toBe(3);
    expect(results["frames"]).toContain("contentWindow.length=3");
  });

  it("distinguishes differing frame counts", async () => {
    const results: ResultsMap = {};
    const one = await probeObjectProperties(
      document, fixtureUrl("sc=200&ct=text/html&body=html-frames(1)"),
      "iframe", ["contentWindow.length"], "f1", results, WINDOW_MS,
    );
    const four = await probeObjectProperties(
      document, fixtureUrl("sc=200&ct=text/html&body=html-frames(4)"),
      "iframe", ["contentWindow.length"], "f4", results, WINDOW_MS,
    );
    expect(one["contentWindow.length"]).toBe(1);
    expect(four["contentWindow.length"]).toBe(4);
  });
});

describe("probePostMessage", () => {
  it("captures the fixture broadcast through an iframe", async () => {
    const results: ResultsMap = {};
    const capture = await probePostMessage(
      window,
      fixtureUrl("sc=200&ct=text/html&body=html-postmsg(hello|ready:user=alice)"),
      "iframe",
      "pm",
      results,
      WINDOW_MS,
    );
    expect(capture.messages.map((m) => m.data)).toEqual(["hello", "ready:user=alice"]);
  });

  it("captures nothing from a silent page", async () => {
    const results: ResultsMap = {};
    const capture = await probePostMessage(
      window,
      fixtureUrl("sc=200&ct=text/html&body=html-frames(0)"),
      "iframe",
      "pm-silent",
      results,
      WINDOW_MS,
    );
    expect(capture.messages).toEqual([]);
  });

  it("degrades explicitly when window.open is unavailable", async () => {
    const results: ResultsMap = {};
    const capture = await probePostMessage(
      window,
      fixtureUrl("sc=200&ct=text/html&body=html-postmsg(x)"),
      "window-open",
      "pm-open",
      results,
      300,
    );
    if (results["pm-open"].indexOf("window-open-unavailable") !== -1) {
      expect(capture.messages).toEqual([]);
    } else {
      expect(capture.messages.map((m) => m.data)).toEqual(["x"]);
    }
  });
});

describe("probeJsErrorCount", () => {
  it("counts the two deferred throws in the error fixture", async () => {
    const count = await probeJsErrorCount(
      window,
      fixtureUrl("sc=200&ct=text/javascript&body=js-with-errors(2)"),
      "jse2",
      {},
      WINDOW_MS,
    );
    expect(count).toBe(2);
  });

  it("counts zero for clean javascript", async () => {
    const count = await probeJsErrorCount(
      window,
      fixtureUrl("sc=200&ct=text/javascript&body=js-clean"),
      "jse0",
      {},
      WINDOW_MS,
    );
    expect(count).toBe(0);
  });
});

describe("probeCssProps", () => {
  it("reads the fixture rule off the marker element", async () => {
    const values = await probeCssProps(
      window,
      fixtureUrl("sc=200&ct=text/css&body=css-rule(leakfont)"),
      "css",
      {},
      WINDOW_MS,
    );
    expect(values["font-family"]).toContain("leakfont");
    expect(values["margin-left"]).toBe("7px");
  });
});
