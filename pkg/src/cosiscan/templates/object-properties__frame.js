(function () {
  var el = document.createElement("frame");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  setTimeout(function () {
    recordSignal("{{report_key}}", "width=" + (el.width || el.offsetWidth));
    recordSignal("{{report_key}}", "height=" + (el.height || el.offsetHeight));
  }, Math.max(0, {{window_ms}} - 500));
}());
