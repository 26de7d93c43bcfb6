(function () {
  var count = 0;
  var prev = window.onerror;
  window.onerror = function () {
    count += 1;
    recordSignal("{{report_key}}", "js-errors=" + count);
    if (prev) { return prev.apply(this, arguments); }
    return false;
  };
  var el = document.createElement("script");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
}());
