(function () {
  var el = document.createElement("link");
  el.setAttribute("rel", "stylesheet");
  el.setAttribute("href", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.head.appendChild(el);
  recordSignal("{{report_key}}", "csp-probe-sent");
}());
