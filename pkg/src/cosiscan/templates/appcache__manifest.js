(function () {
  function record(name) {
    return function () { recordSignal("{{report_key}}", name); };
  }
  if (window.applicationCache) {
    window.applicationCache.addEventListener("cached", record("appcache-cached"));
    window.applicationCache.addEventListener("noupdate", record("appcache-cached"));
    window.applicationCache.addEventListener("error", record("appcache-error"));
  } else {
    recordSignal("{{report_key}}", "appcache-unsupported");
  }
}());
