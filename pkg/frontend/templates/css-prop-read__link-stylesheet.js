(function () {
  var marker = document.getElementById("echo-marker");
  if (!marker) {
    marker = document.createElement("div");
    marker.id = "echo-marker";
    document.body.appendChild(marker);
  }
  var el = document.createElement("link");
  el.setAttribute("rel", "stylesheet");
  el.setAttribute("href", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.head.appendChild(el);
  setTimeout(function () {
    var style = window.getComputedStyle(marker);
    recordSignal("{{report_key}}", "font-family=" + style.fontFamily);
    recordSignal("{{report_key}}", "margin-left=" + style.marginLeft);
  }, Math.max(0, {{window_ms}} - 500));
}());
