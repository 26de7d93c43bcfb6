(function () {
  var el = document.createElement("iframe");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  setTimeout(function () {
    var frames = -1;
    try { frames = el.contentWindow.length; } catch (e) {}
    recordSignal("{{report_key}}", "frame-count=" + frames);
    var doc = null;
    try { doc = el.contentDocument; } catch (e) {}
    recordSignal("{{report_key}}", doc ? "content-document" : "no-content-document");
  }, Math.max(0, {{window_ms}} - 500));
}());
