(function () {
  var el = document.createElement("frame");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  recordSignal("{{report_key}}", "csp-probe-sent");
}());
