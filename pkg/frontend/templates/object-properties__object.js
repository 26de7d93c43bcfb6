(function () {
  var el = document.createElement("object");
  el.setAttribute("data", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  setTimeout(function () {
    var doc = null;
    try { doc = el.contentDocument; } catch (e) {}
    recordSignal("{{report_key}}", doc ? "content-document" : "no-content-document");
  }, Math.max(0, {{window_ms}} - 500));
}());
