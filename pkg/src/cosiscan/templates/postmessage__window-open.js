(function () {
  var w = window.open("{{sd_url}}", "probe_{{report_key}}", "width=300,height=300");
  window.addEventListener("message", function (event) {
    if (event.source === w) {
      recordSignal("{{report_key}}", "postmsg:" + event.origin + ":" + String(event.data));
    }
  });
  setTimeout(function () { try { w.close(); } catch (e) {} }, Math.max(0, {{window_ms}} - 200));
}());
