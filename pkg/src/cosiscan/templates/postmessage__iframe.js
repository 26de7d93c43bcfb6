(function () {
  var el = document.createElement("iframe");
  el.setAttribute("src", "{{sd_url}}");
  window.addEventListener("message", function (event) {
    if (event.source === el.contentWindow) {
      recordSignal("{{report_key}}", "postmsg:" + event.origin + ":" + String(event.data));
    }
  });
  document.body.appendChild(el);
}());
