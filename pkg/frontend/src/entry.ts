/**
 * IIFE entry for generated collection pages: wait for the page to load,
 * then run the harness against the embedded parameters.
 */

import { harnessMain } from "./harness";

declare global {
  interface Window {
    cosiscanHarness?: typeof harnessMain;
  }
}

window.cosiscanHarness = harnessMain;

if (document.readyState === "complete" || document.readyState === "interactive") {
  void harnessMain(window);
} else {
  window.addEventListener("load", () => {
    void harnessMain(window);
  });
}
