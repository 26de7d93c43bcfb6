/**
 * In-page probes: include a cross-origin URL with a given method and record
 * what the page is allowed to observe (events, readable properties,
 * postMessages, JS error counts, computed styles).
 *
 * Every probe writes its signals into a shared results map keyed by a
 * report key. Re-running a probe overwrites its entries instead of
 * appending duplicates.
 */

export type ResultsMap = Record<string, string[]>;

export interface CapturedMessage {
  origin: string;
  data: string;
}

const URL_ATTRIBUTES: Record<string, string> = {
  applet: "code",
  audio: "src",
  embed: "src",
  frame: "src",
  iframe: "src",
  img: "src",
  input: "src",
  link: "href",
  object: "data",
  script: "src",
  source: "src",
  track: "src",
  video: "src",
};

export function recordSignal(results: ResultsMap, key: string, name: string): void {
  if (!results[key]) {
    results[key] = [];
  }
  if (results[key].indexOf(name) === -1) {
    results[key].push(name);
  }
}

export function resetSignals(results: ResultsMap, key: string): void {
  results[key] = [];
}

function wait(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export interface InclusionOptions {
  rel?: string;
  extraAttributes?: Record<string, string>;
}

export function includeElement(
  doc: Document,
  tag: string,
  url: string,
  options: InclusionOptions = {},
): HTMLElement {
  const attribute = URL_ATTRIBUTES[tag];
  if (!attribute) {
    throw new Error(`tag ${tag} cannot include a URL`);
  }
  const el = doc.createElement(tag);
  if (options.rel) {
    el.setAttribute("rel", options.rel);
  }
  for (const [name, value] of Object.entries(options.extraAttributes ?? {})) {
    el.setAttribute(name, value);
  }
  el.setAttribute(attribute, url);
  return el;
}

/**
 * EventsFired: attach load/error/suspend handlers, mount the element, and
 * report which callbacks ran inside the window. Absence of events is itself
 * a signal, so the resolved list may be empty.
 */
export async function probeEventsFired(
  doc: Document,
  url: string,
  tag: string,
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
  options: InclusionOptions = {},
): Promise<string[]> {
  resetSignals(results, reportKey);
  const el = includeElement(doc, tag, url, options);
  el.onload = () => recordSignal(results, reportKey, "onload");
  el.onerror = () => recordSignal(results, reportKey, "onerror");
  (el as HTMLMediaElement).onsuspend = () => recordSignal(results, reportKey, "onsuspend");
  const parent = tag === "link" ? doc.head : doc.body;
  parent.appendChild(el);
  await wait(windowMs);
  return results[reportKey].slice();
}

/**
 * ObjectProperties: mount the element, then read the listed properties
 * after the window expires (load callbacks may never fire cross-origin).
 * Dotted paths like contentWindow.length are followed.
 */
export async function probeObjectProperties(
  doc: Document,
  url: string,
  tag: string,
  propertyNames: string[],
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
  options: InclusionOptions = {},
): Promise<Record<string, unknown>> {
  resetSignals(results, reportKey);
  const el = includeElement(doc, tag, url, options);
  el.onload = () => recordSignal(results, reportKey, "onload");
  el.onerror = () => recordSignal(results, reportKey, "onerror");
  const parent = tag === "link" ? doc.head : doc.body;
  parent.appendChild(el);
  await wait(windowMs);

  const values: Record<string, unknown> = {};
  for (const name of propertyNames) {
    let value: unknown = el;
    try {
      for (const part of name.split(".")) {
        value = (value as Record<string, unknown>)[part];
      }
    } catch {
      value = undefined;
    }
    if (value !== undefined && value !== null) {
      values[name] = value;
      recordSignal(results, reportKey, `${name}=${String(value)}`);
    }
  }
  return values;
}

export interface PostMessageCapture {
  messages: CapturedMessage[];
  /** frames.length of the opened window (window-open mode only). */
  windowLength: number | null;
}

/**
 * postMessage capture: include the URL in an iframe (or open a window when
 * the target uses framing protection) and collect messages whose source is
 * that browsing context.
 */
export async function probePostMessage(
  win: Window,
  url: string,
  mode: "iframe" | "window-open",
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
): Promise<PostMessageCapture> {
  resetSignals(results, reportKey);
  const captured: CapturedMessage[] = [];
  // The content window can be replaced when the frame navigates, so the
  // source check resolves the current handle at delivery time.
  let currentSource: () => Window | null = () => null;

  const listener = (event: MessageEvent) => {
    // Filter to our browsing context where the environment attributes the
    // sender; some DOM implementations deliver cross-origin child messages
    // with a null source, which a single-probe page can safely accept.
    const expected = currentSource();
    if (expected !== null && event.source !== null && event.source !== expected) {
      return;
    }
    const message = { origin: event.origin, data: String(event.data) };
    captured.push(message);
    recordSignal(results, reportKey, `postmsg:${message.origin}:${message.data}`);
  };
  win.addEventListener("message", listener);

  let opened: Window | null = null;
  if (mode === "iframe") {
    const frame = win.document.createElement("iframe");
    frame.setAttribute("src", url);
    win.document.body.appendChild(frame);
    currentSource = () => frame.contentWindow;
  } else {
    opened = win.open(url, `probe_${reportKey}`, "width=300,height=300");
    if (!opened) {
      win.removeEventListener("message", listener);
      recordSignal(results, reportKey, "window-open-unavailable");
      return { messages: [], windowLength: null };
    }
    currentSource = () => opened;
  }

  await wait(windowMs);
  win.removeEventListener("message", listener);

  let windowLength: number | null = null;
  if (opened) {
    try {
      windowLength = opened.length;
      recordSignal(results, reportKey, `frames.length=${windowLength}`);
    } catch {
      windowLength = null;
    }
    try {
      opened.close();
    } catch {
      // leave stray windows to the driver
    }
  }
  return { messages: captured, windowLength };
}

/** JSError: count window.onerror firings while a script URL loads. */
export async function probeJsErrorCount(
  win: Window,
  url: string,
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
): Promise<number> {
  resetSignals(results, reportKey);
  let count = 0;
  const handler = () => {
    count += 1;
    recordSignal(results, reportKey, `js-errors=${count}`);
    return true; // swallow: probe errors are data, not failures
  };
  const previous = win.onerror;
  win.onerror = handler;
  // Some environments only route uncaught async errors through the
  // "error" event, not the onerror assignment.
  const eventListener = () => handler();
  win.addEventListener("error", eventListener);
  try {
    const el = win.document.createElement("script");
    el.setAttribute("src", url);
    el.onload = () => recordSignal(results, reportKey, "onload");
    el.onerror = () => recordSignal(results, reportKey, "onerror");
    win.document.body.appendChild(el);
    await wait(windowMs);
  } finally {
    win.onerror = previous;
    win.removeEventListener("error", eventListener);
  }
  return count;
}

/** JSObjectRead: globals that appeared while the script URL loaded. */
export async function probeReadableObjects(
  win: Window,
  url: string,
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
): Promise<string[]> {
  resetSignals(results, reportKey);
  const before = new Set(Object.keys(win));
  const el = win.document.createElement("script");
  el.setAttribute("src", url);
  el.onload = () => recordSignal(results, reportKey, "onload");
  el.onerror = () => recordSignal(results, reportKey, "onerror");
  win.document.body.appendChild(el);
  await wait(windowMs);

  const gained: string[] = [];
  for (const name of Object.keys(win)) {
    if (!before.has(name)) {
      gained.push(name);
      recordSignal(results, reportKey, `global:${name}`);
    }
  }
  return gained;
}

/**
 * CSSPropRead: load the URL as a stylesheet next to a marker element and
 * read the properties the fixture rules are known to set.
 */
export async function probeCssProps(
  win: Window,
  url: string,
  reportKey: string,
  results: ResultsMap,
  windowMs: number,
  selector = "#echo-marker",
  properties: string[] = ["font-family", "margin-left"],
): Promise<Record<string, string>> {
  resetSignals(results, reportKey);
  const doc = win.document;
  let marker = doc.querySelector(selector) as HTMLElement | null;
  if (!marker) {
    marker = doc.createElement("div");
    marker.id = selector.replace(/^#/, "");
    doc.body.appendChild(marker);
  }
  const link = doc.createElement("link");
  link.setAttribute("rel", "stylesheet");
  link.setAttribute("href", url);
  link.onload = () => recordSignal(results, reportKey, "onload");
  link.onerror = () => recordSignal(results, reportKey, "onerror");
  doc.head.appendChild(link);
  await wait(windowMs);

  const style = win.getComputedStyle(marker);
  const values: Record<string, string> = {};
  for (const property of properties) {
    const value = style.getPropertyValue(property);
    if (value) {
      values[property] = value;
      recordSignal(results, reportKey, `${property}=${value}`);
    }
  }
  return values;
}

/**
 * CSPViolation: mount the inclusion; the verdict (violation report or not)
 * arrives at the report endpoint server-side, so locally there is only the
 * fact that the probe ran.
 */
export function probeCspViolation(
  doc: Document,
  url: string,
  tag: string,
  reportKey: string,
  results: ResultsMap,
  options: InclusionOptions = {},
): void {
  resetSignals(results, reportKey);
  const el = includeElement(doc, tag, url, options);
  el.onload = () => recordSignal(results, reportKey, "onload");
  el.onerror = () => recordSignal(results, reportKey, "onerror");
  const parent = tag === "link" ? doc.head : doc.body;
  parent.appendChild(el);
  recordSignal(results, reportKey, "csp-probe-sent");
}

/**
 * AppCache events; gated to Chromium-era applicationCache and reported as
 * unsupported everywhere else (the feature is gone from modern browsers).
 */
export function probeAppCache(win: Window, reportKey: string, results: ResultsMap): void {
  resetSignals(results, reportKey);
  const cache = (win as Window & { applicationCache?: EventTarget }).applicationCache;
  if (!cache) {
    recordSignal(results, reportKey, "appcache-unsupported");
    return;
  }
  cache.addEventListener("cached", () => recordSignal(results, reportKey, "appcache-cached"));
  cache.addEventListener("noupdate", () => recordSignal(results, reportKey, "appcache-cached"));
  cache.addEventListener("error", () => recordSignal(results, reportKey, "appcache-error"));
}
