/**
 * Collection-page instrumentation: run the probes a page asks for, then
 * post one observation record (JSON lines, one object per line) to the
 * report endpoint. The record layout matches the scanner's observation
 * schema exactly, so its output can be ingested unchanged.
 */

import {
  CapturedMessage,
  ResultsMap,
  includeElement,
  probeCssProps,
  probePostMessage,
  recordSignal,
} from "./probes";

export const DEFAULT_WINDOW_MS = 6000;

export interface CollectionParams {
  page_id: string;
  url: string;
  inclusion_method: string;
  instrumentation: string[];
  state_id: string;
  browser_id: string;
  window_ms?: number;
  report_url?: string;
}

export interface ObservationRecord {
  url: string;
  state_id: string;
  browser_id: string;
  inclusion_method: string;
  events: string[];
  properties: Record<string, unknown>;
  postmessages: CapturedMessage[];
  js_error_count: number;
  readable_objects: string[];
  css_computed: Record<string, Record<string, string>>;
  csp_report_received: boolean;
  appcache_event: string;
  window_ms: number;
}

const PROPERTY_SETS: Record<string, string[]> = {
  iframe: ["contentWindow.length"],
  frame: ["width", "height"],
  img: ["naturalWidth", "naturalHeight", "width", "height"],
  audio: ["duration", "networkState", "readyState"],
  video: ["duration", "networkState", "readyState", "videoWidth", "videoHeight"],
  object: ["contentDocument"],
  "link-stylesheet": ["sheet"],
};

function tagFor(inclusionMethod: string): string {
  if (inclusionMethod.startsWith("link-")) {
    return "link";
  }
  return inclusionMethod;
}

function relFor(inclusionMethod: string): string | undefined {
  if (inclusionMethod === "link-prefetch") {
    return "prefetch";
  }
  if (inclusionMethod === "link-stylesheet") {
    return "stylesheet";
  }
  return undefined;
}

function wait(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function readProperties(el: Element, names: string[], record: ObservationRecord): void {
  for (const name of names) {
    let value: unknown = el;
    try {
      for (const part of name.split(".")) {
        value = (value as Record<string, unknown>)[part];
      }
    } catch {
      value = undefined;
    }
    if (value === undefined || value === null) {
      continue;
    }
    if (typeof value === "number" || typeof value === "string" || typeof value === "boolean") {
      record.properties[name] = value;
    } else {
      record.properties[name] = true; // presence of non-scalar objects
    }
  }
}

/**
 * Run the instrumentation for one (url, inclusion method) page.
 *
 * Exactly one inclusion of the URL is mounted; every requested leak method
 * reads off that single load so signals are never double-counted.
 */
export async function collectObservation(
  win: Window,
  params: CollectionParams,
): Promise<ObservationRecord> {
  const windowMs = params.window_ms ?? DEFAULT_WINDOW_MS;
  const results: ResultsMap = {};
  const record: ObservationRecord = {
    url: params.url,
    state_id: params.state_id,
    browser_id: params.browser_id,
    inclusion_method: params.inclusion_method,
    events: [],
    properties: {},
    postmessages: [],
    js_error_count: 0,
    readable_objects: [],
    css_computed: {},
    csp_report_received: false,
    appcache_event: "none",
    window_ms: windowMs,
  };

  const instrumentation = new Set(params.instrumentation);
  const doc = win.document;
  const tag = tagFor(params.inclusion_method);
  const rel = relFor(params.inclusion_method);

  if (params.inclusion_method === "window-open") {
    const capture = await probePostMessage(win, params.url, "window-open", "pm", results, windowMs);
    record.postmessages = capture.messages;
    if (capture.windowLength !== null) {
      record.properties["frames.length"] = capture.windowLength;
    }
  } else if (tag === "script") {
    // One script element: error counter and globals diff share the load.
    let errorCount = 0;
    const errorHandler = () => {
      errorCount += 1;
      return true;
    };
    win.addEventListener("error", errorHandler);
    const before = new Set(Object.keys(win));
    const el = doc.createElement("script");
    el.setAttribute("src", params.url);
    el.onload = () => recordSignal(results, "incl", "onload");
    el.onerror = () => recordSignal(results, "incl", "onerror");
    doc.body.appendChild(el);
    await wait(windowMs);
    win.removeEventListener("error", errorHandler);
    record.js_error_count = errorCount;
    record.readable_objects = Object.keys(win).filter((name) => !before.has(name));
  } else if (params.inclusion_method === "link-stylesheet" && instrumentation.has("css-prop-read")) {
    const values = await probeCssProps(win, params.url, "css", results, windowMs);
    record.css_computed = { "#echo-marker": values };
  } else {
    // Element inclusion: mount once; listen for messages alongside when
    // the page may broadcast, then read the leakable properties.
    let messageListener: ((event: MessageEvent) => void) | null = null;
    let frameWindow: (() => Window | null) | null = null;
    if (instrumentation.has("postmessage") && tag === "iframe") {
      messageListener = (event: MessageEvent) => {
        const expected = frameWindow ? frameWindow() : null;
        if (expected !== null && event.source !== null && event.source !== expected) {
          return;
        }
        record.postmessages.push({ origin: event.origin, data: String(event.data) });
      };
      win.addEventListener("message", messageListener);
    }

    const el = includeElement(doc, tag, params.url, rel ? { rel } : {});
    el.onload = () => recordSignal(results, "incl", "onload");
    el.onerror = () => recordSignal(results, "incl", "onerror");
    (el as HTMLMediaElement).onsuspend = () => recordSignal(results, "incl", "onsuspend");
    if (tag === "iframe") {
      frameWindow = () => (el as HTMLIFrameElement).contentWindow;
    }
    const parent = tag === "link" ? doc.head : doc.body;
    parent.appendChild(el);
    await wait(windowMs);

    if (messageListener) {
      win.removeEventListener("message", messageListener);
    }
    readProperties(el, PROPERTY_SETS[params.inclusion_method] ?? [], record);
  }

  // Union of every probe's fired events, in first-seen order.
  const events: string[] = [];
  for (const signals of Object.values(results)) {
    for (const signal of signals) {
      if (
        (signal === "onload" || signal === "onerror" || signal === "onsuspend") &&
        events.indexOf(signal) === -1
      ) {
        events.push(signal);
      }
    }
  }
  record.events = events;
  return record;
}

export async function postObservation(
  win: Window,
  reportUrl: string,
  record: ObservationRecord,
): Promise<boolean> {
  const line = JSON.stringify(record) + "\n";
  for (let attempt = 0; attempt < 2; attempt += 1) {
    try {
      const response = await win.fetch(reportUrl, {
        method: "POST",
        headers: { "Content-Type": "application/x-ndjson" },
        body: line,
      });
      if (response.ok || response.status === 204) {
        return true;
      }
    } catch {
      // retry once, then surface in-page
    }
  }
  const pre = win.document.createElement("pre");
  pre.id = "observation-fallback";
  pre.textContent = line;
  win.document.body.appendChild(pre);
  return false;
}

/** Entry point for generated collection pages. */
export async function harnessMain(win: Window): Promise<ObservationRecord | null> {
  const paramsNode = win.document.getElementById("collection-params");
  if (!paramsNode || !paramsNode.textContent) {
    return null;
  }
  const embedded = JSON.parse(paramsNode.textContent) as Partial<CollectionParams>;
  const query = new URLSearchParams(win.location.search);
  const params: CollectionParams = {
    page_id: embedded.page_id ?? "page",
    url: embedded.url ?? "",
    inclusion_method: embedded.inclusion_method ?? "iframe",
    instrumentation: embedded.instrumentation ?? [],
    state_id: query.get("state") ?? embedded.state_id ?? "unknown",
    browser_id: query.get("browser") ?? embedded.browser_id ?? "unknown",
    window_ms: query.has("window_ms")
      ? Number(query.get("window_ms"))
      : embedded.window_ms ?? DEFAULT_WINDOW_MS,
    report_url: query.get("report") ?? embedded.report_url ?? "/report",
  };
  const record = await collectObservation(win, params);
  await postObservation(win, params.report_url ?? "/report", record);
  return record;
}
