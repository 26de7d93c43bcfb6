(function () {
  var el = document.createElement("audio");
  el.setAttribute("src", "{{sd_url}}");
  el.setAttribute("preload", "auto");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
}());
