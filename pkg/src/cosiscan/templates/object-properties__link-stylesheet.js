(function () {
  var el = document.createElement("link");
  el.setAttribute("rel", "stylesheet");
  el.setAttribute("href", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.head.appendChild(el);
  setTimeout(function () {
    var sheet = null;
    try { sheet = el.sheet; } catch (e) {}
    recordSignal("{{report_key}}", sheet ? "sheet" : "no-sheet");
  }, Math.max(0, {{window_ms}} - 500));
}());
