(function () {
  var w = window.open("{{sd_url}}", "probe_{{report_key}}", "width=300,height=300");
  setTimeout(function () {
    var frames = -1;
    try { frames = w.length; } catch (e) {}
    recordSignal("{{report_key}}", "frame-count=" + frames);
    try { w.close(); } catch (e) {}
  }, Math.max(0, {{window_ms}} - 500));
}());
