(function () {
  var el = document.createElement("applet");
  el.setAttribute("code", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
  recordSignal("{{report_key}}", "csp-probe-sent");
}());
