"""Response model: signatures, masking, equivalence."""

import dataclasses

import pytest
from hypothesis import given, strategies as st

from cosiscan.response import (
    HttpResponse,
    NormalizationRules,
    ResponseModelError,
    ct_family_of,
    image_dimensions,
    normalize,
    responses_equivalent,
    sc_class_of,
    signature_of,
    static_body_traits,
)
from cosiscan.testtarget import render_body_template

from conftest import make_response


class TestScClass:
    @given(st.integers(min_value=100, max_value=999))
    def test_total_over_valid_statuses(self, status):
        assert sc_class_of(status) in ("2xx", "3xx", "4xx", "5xx", "nonstd")

    @given(st.integers(min_value=200, max_value=599))
    def test_partition_of_standard_codes(self, status):
        assert sc_class_of(status) == f"{status // 100}xx"

    @pytest.mark.parametrize("status", [100, 199, 999, 600, 700])
    def test_nonstandard_codes(self, status):
        assert sc_class_of(status) == "nonstd"


class TestCtFamily:
    @pytest.mark.parametrize(
        "value,family",
        [
            ("text/javascript", "javascript"),
            ("application/javascript; charset=utf-8", "javascript"),
            ("text/css", "css"),
            ("TEXT/HTML; charset=UTF-8", "html"),
            ("application/xhtml+xml", "html"),
            ("application/json", "json"),
            ("application/problem+json", "json"),
            ("application/pdf", "pdf"),
            ("image/png", "image"),
            ("audio/wav", "audio"),
            ("video/mp4", "video"),
            ("text/vtt", "webvtt"),
            ("text/plain", "other"),
            (None, "absent"),
        ],
    )
    def test_families(self, value, family):
        assert ct_family_of(value) == family


class TestSignature:
    def test_status_error_script_side_a(self):
        # 200 + text/javascript: the classic script-probe success side.
        sig = signature_of(make_response(200, "text/javascript", body=b"var x = 1;"))
        assert sig.sc_class == "2xx"
        assert sig.ct_family == "javascript"
        assert sig.xcto_nosniff is False

    def test_hotcrp_reviewer_response(self):
        # 200 text/html with nosniff, as api.php returns for the reviewer.
        sig = signature_of(make_response(200, "text/html", xcto=True))
        assert sig.ct_family == "html"
        assert sig.xcto_nosniff is True
        assert sig.xfo_enabled is False

    def test_cross_origin_redirect(self):
        sig = signature_of(make_response(301, None, b"", location="http://other.example/x"))
        assert sig.sc_class == "3xx"
        assert sig.redirect_target_origin == "cross-origin"

    def test_same_origin_redirect_relative_location(self):
        sig = signature_of(make_response(302, None, b"", location="/login"))
        assert sig.redirect_target_origin == "same-origin"

    def test_redirect_origin_none_iff_not_3xx(self):
        assert signature_of(make_response(200)).redirect_target_origin == "none"
        assert signature_of(make_response(302, location="/a")).redirect_target_origin != "none"

    def test_deterministic(self):
        a, b = make_response(), make_response()
        assert signature_of(a) == signature_of(b)

    def test_xcto_case_insensitive(self):
        resp = make_response(extra_headers=(("x-content-type-options", "NoSniff"),))
        assert signature_of(resp).xcto_nosniff is True

    def test_cd_attachment_with_filename(self):
        resp = make_response(extra_headers=(("Content-Disposition", 'Attachment; filename="a.pdf"'),))
        assert signature_of(resp).cd_attachment is True

    def test_status_bounds_enforced(self):
        with pytest.raises(ResponseModelError):
            make_response(status=99)
        make_response(status=999)  # non-standard codes up to 999 allowed


class TestBodyTraits:
    def test_png_dimensions(self):
        body = render_body_template("image(12,8)")
        assert image_dimensions(body) == (12, 8)
        assert dict(static_body_traits(body))["image"] == (12, 8)

    def test_pdf_magic(self):
        assert "pdf" in dict(static_body_traits(render_body_template("pdf")))

    def test_css_like(self):
        traits = dict(static_body_traits(render_body_template("css-rule(m1)")))
        assert traits.get("css-like") is True

    def test_html_and_included_urls(self):
        body = b'<html><body><img src="/static/logo.png"><a href="/home">x</a></body></html>'
        traits = dict(static_body_traits(body))
        assert traits["html"] is True
        assert traits["included-urls"] == ("/home", "/static/logo.png")

    def test_plain_body_has_no_traits(self):
        assert static_body_traits(b"ok\n") == {}


class TestNormalize:
    def test_date_only_difference_compares_equal(self, rules):
        a = make_response(extra_headers=(("Date", "Mon, 01 Jan 2024 10:00:00 GMT"),))
        b = make_response(extra_headers=(("Date", "Tue, 02 Jan 2024 11:30:00 GMT"),))
        assert responses_equivalent(a, b, rules)

    def test_csrf_token_difference_compares_equal(self, rules):
        body_a = b'<form><input name="csrf_token" value="a81f3c0d9e2b47665544332211009988"></form>'
        body_b = b'<form><input name="csrf_token" value="b2c4d6e8f0a2141618202224262830aa"></form>'
        a = make_response(body=body_a)
        b = make_response(body=body_b)
        assert normalize(a, rules).normalized_body == normalize(b, rules).normalized_body
        assert responses_equivalent(a, b, rules)

    def test_no_dynamic_content_is_identity(self, rules):
        resp = make_response(body=b"<html><body>static</body></html>")
        norm = normalize(resp, rules)
        assert norm.normalized_body == resp.body
        assert norm.masked_regions == ()

    def test_masked_regions_disjoint_and_sorted(self, rules):
        body = (
            b'<p>2024-01-02T03:04:05Z and token "session_token": "ffeeddccbbaa99887766554433221100"</p>'
        )
        norm = normalize(make_response(body=body), rules)
        regions = norm.masked_regions
        assert regions
        for (off1, len1, _), (off2, _, _) in zip(regions, regions[1:]):
            assert off1 + len1 <= off2

    def test_idempotent(self, rules):
        body = b'<input name="csrf_token" value="deadbeefdeadbeefdeadbeefdeadbeef"> 2024-05-06 07:08:09'
        resp = make_response(body=body, extra_headers=(("Date", "Mon, 01 Jan 2024 10:00:00 GMT"),))
        first = normalize(resp, rules)
        again = normalize(
            dataclasses.replace(resp, body=first.normalized_body, headers=first.normalized_headers),
            rules,
        )
        assert again.normalized_body == first.normalized_body
        assert again.normalized_headers == first.normalized_headers

    def test_binary_bodies_left_alone(self, rules):
        body = render_body_template("image(4,4)")
        norm = normalize(make_response(200, "image/png", body=body), rules)
        assert norm.normalized_body == body

    def test_volatile_headers_masked(self, rules):
        resp = make_response(extra_headers=(("Set-Cookie", "sid=abc123"), ("ETag", '"xyz"')))
        norm = normalize(resp, rules)
        header_map = dict(norm.normalized_headers)
        assert header_map["Set-Cookie"] == "*"
        assert header_map["ETag"] == "*"


class TestEquivalence:
    def test_reflexive(self, rules):
        resp = make_response()
        assert responses_equivalent(resp, resp, rules)

    def test_identical_image_responses(self, rules):
        body = render_body_template("image(12,8)")
        a = make_response(200, "image/png", body=body)
        b = make_response(200, "image/png", body=body)
        assert responses_equivalent(a, b, rules)

    def test_status_difference_not_equivalent(self, rules):
        assert not responses_equivalent(make_response(200), make_response(403), rules)

    def test_symmetric(self, rules):
        a = make_response(200, xcto=True)
        b = make_response(200)
        assert responses_equivalent(a, b, rules) == responses_equivalent(b, a, rules)

    def test_bad_rules_file_rejected(self):
        with pytest.raises(ResponseModelError):
            NormalizationRules.from_dict({"masked_headers": [], "body_patterns": [{"regex": "(", "reason": "nonce"}]})
        with pytest.raises(ResponseModelError):
            NormalizationRules.from_dict({"masked_headers": [], "body_patterns": [{"regex": "x", "reason": "nope"}]})
