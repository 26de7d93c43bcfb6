(function () {
  var el = document.createElement("link");
  el.setAttribute("rel", "prefetch");
  el.setAttribute("href", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.head.appendChild(el);
}());
