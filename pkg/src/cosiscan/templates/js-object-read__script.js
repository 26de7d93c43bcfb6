(function () {
  var before = {};
  for (var k in window) { before[k] = true; }
  var el = document.createElement("script");
  el.setAttribute("src", "{{sd_url}}");
  el.onerror = function () { recordSignal("{{report_key}}", "onerror"); };
  el.onload = function () {
    recordSignal("{{report_key}}", "onload");
    for (var k in window) {
      if (!before[k]) { recordSignal("{{report_key}}", "global:" + k); }
    }
  };
  document.body.appendChild(el);
}());
