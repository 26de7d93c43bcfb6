(function () {
  var subresource = "{{subresource_url}}";
  var sep = subresource.indexOf("?") > -1 ? "&" : "?";
  function probeSubresource(done) {
    var img = new Image();
    img.onload = function () { done("onload"); };
    img.onerror = function () { done("onerror"); };
    img.src = subresource + sep + "cache_bust_err=1";
  }
  probeSubresource(function () {
    var preload = document.createElement("link");
    preload.setAttribute("rel", "preload");
    preload.setAttribute("as", "fetch");
    preload.setAttribute("href", "{{sd_url}}");
    document.head.appendChild(preload);
    setTimeout(function () {
      var img = new Image();
      img.onload = function () { recordSignal("{{report_key}}", "onload"); };
      img.onerror = function () { recordSignal("{{report_key}}", "onerror"); };
      img.src = subresource;
    }, 1000);
  });
}());
