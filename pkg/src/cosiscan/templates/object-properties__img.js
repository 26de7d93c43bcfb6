(function () {
  var el = document.createElement("img");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  setTimeout(function () {
    recordSignal("{{report_key}}", "naturalWidth=" + el.naturalWidth);
    recordSignal("{{report_key}}", "naturalHeight=" + el.naturalHeight);
    recordSignal("{{report_key}}", "width=" + el.width);
    recordSignal("{{report_key}}", "height=" + el.height);
  }, Math.max(0, {{window_ms}} - 500));
}());
