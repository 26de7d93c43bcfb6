"""cosiscan: find cross-origin state-inference (COSI) attack opportunities.

The toolkit compares the HTTP responses a target site returns to the same
URL from different visitor states, matches the differences against a
knowledge base of browser cross-origin leak classes, picks a minimal set
of attack vectors that separates a chosen target state from every other
state on every requested browser, and emits a proof-of-concept attack page.
"""

__version__ = "0.1.0"
