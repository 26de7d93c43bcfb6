(function () {
  var el = document.createElement("object");
  el.setAttribute("data", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
}());
