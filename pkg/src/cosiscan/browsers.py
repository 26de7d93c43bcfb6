"""Browser identifiers and the User-Agent strings used during collection."""

ALL_BROWSERS = ("chrome", "firefox", "edge")

USER_AGENTS = {
    "chrome": (
        "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 "
        "(KHTML, like Gecko) Chrome/71.0.3578.98 Safari/537.36"
    ),
    "firefox": (
        "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:65.0) "
        "Gecko/20100101 Firefox/65.0"
    ),
    "edge": (
        "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 "
        "(KHTML, like Gecko) Chrome/64.0.3282.140 Safari/537.36 "
        "Edge/42.17134.1.0"
    ),
}
