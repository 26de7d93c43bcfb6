(function () {
  var el = document.createElement("audio");
  el.setAttribute("src", "{{sd_url}}");
  el.setAttribute("preload", "metadata");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  setTimeout(function () {
    recordSignal("{{report_key}}", "duration=" + el.duration);
    recordSignal("{{report_key}}", "networkState=" + el.networkState);
    recordSignal("{{report_key}}", "readyState=" + el.readyState);
    recordSignal("{{report_key}}", "error=" + (el.error ? el.error.message || "error" : "none"));
  }, Math.max(0, {{window_ms}} - 500));
}());
