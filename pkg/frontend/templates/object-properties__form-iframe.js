(function () {
  var frame = document.createElement("iframe");
  frame.name = "sink_{{report_key}}";
  armEvents(frame, "{{report_key}}");
  document.body.appendChild(frame);
  var form = document.createElement("form");
  form.action = "{{sd_url}}";
  form.method = "POST";
  form.target = frame.name;
  document.body.appendChild(form);
  form.submit();
  setTimeout(function () {
    var frames = -1;
    try { frames = frame.contentWindow.length; } catch (e) {}
    recordSignal("{{report_key}}", "frame-count=" + frames);
  }, Math.max(0, {{window_ms}} - 500));
}());
