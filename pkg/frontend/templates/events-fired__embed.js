(function () {
  var el = document.createElement("embed");
  el.setAttribute("src", "{{sd_url}}");
  armEvents(el, "{{report_key}}");
  document.body.appendChild(el);
}());
