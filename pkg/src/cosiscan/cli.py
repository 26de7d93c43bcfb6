"""Command-line front end.

The pipeline is three re-entrant stages, each consuming and producing plain
JSON files so any stage can be re-run alone:

    cosiscan collect  ... -> corpus.json
    cosiscan scan     ... -> sd_urls.json + vectors.json
    cosiscan genpage  ... -> attack_page.html + decision_table.json + ...

Exit codes: 0 success / full cover, 2 partial cover, 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .browsers import ALL_BROWSERS
from .collect import CollectError, collect_live
from .corpus import (
    Corpus,
    CorpusError,
    FetchFailure,
    ScanInputError,
    StateDefinition,
    find_sd_urls,
    har_entries,
    ingest_corpus,
    load_corpus,
    save_corpus,
    sd_report_to_dict,
)
from .dynamic import collection_page_html, load_observations, plan_dynamic_collection
from .kb import KBError, default_kb, kb_checksum, load_kb_file
from .pagegen import GenerationError, TemplateStore, generate_attack_page, write_bundle
from .response import NormalizationRules
from .selection import (
    SelectionError,
    identify_vectors,
    pair_vector_from_dict,
    pair_vector_to_dict,
    select_vectors,
    selection_to_dict,
    vectors_for_target,
)
from .testtarget import EchoServer, EchoSpecError, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


def _load_states_file(path: str) -> list[StateDefinition]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    states = []
    for raw in doc["states"]:
        auth = raw.get("auth_headers")
        states.append(
            StateDefinition(
                state_id=raw["state_id"],
                description=raw.get("description", ""),
                auth_material=tuple(sorted(auth.items())) if auth else None,
            )
        )
    return states


def _load_kb(path: str | None):
    return load_kb_file(path) if path else default_kb()


def _load_rules(path: str | None) -> NormalizationRules:
    return NormalizationRules.from_file(path) if path else NormalizationRules.default()


def _browsers_arg(value: str) -> tuple[str, ...]:
    browsers = tuple(b.strip() for b in value.split(",") if b.strip())
    unknown = set(browsers) - set(ALL_BROWSERS)
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown browsers {sorted(unknown)}")
    return browsers


def cmd_collect(args: argparse.Namespace) -> int:
    states = _load_states_file(args.states)
    with open(args.urls, "r", encoding="utf-8") as fh:
        urls = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    corpus = collect_live(
        urls, states, args.browsers, pacing=args.pacing, target_origin=args.target_origin
    )
    save_corpus(corpus, args.out)

    print(f"collected {len(corpus.entries)} cells from {len(urls)} urls -> {args.out}")
    for state in corpus.state_ids:
        cells = [v for (u, s, b), v in corpus.entries.items() if s == state]
        failures = sum(1 for v in cells if isinstance(v, FetchFailure))
        print(f"  state {state}: {len(cells)} responses, {failures} fetch failures")
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    kb = _load_kb(args.kb)
    rules = _load_rules(args.rules)
    observations = load_observations(args.observations) if args.observations else None

    reports = find_sd_urls(corpus, rules)
    result = identify_vectors(
        reports, corpus, kb, observations=observations, include_deprecated=args.include_deprecated
    )

    os.makedirs(args.out, exist_ok=True)
    sd_path = os.path.join(args.out, "sd_urls.json")
    with open(sd_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "target_origin": corpus.target_origin,
                "sd_urls": [sd_report_to_dict(r) for r in reports],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    vectors_path = os.path.join(args.out, "vectors.json")
    with open(vectors_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "target_origin": corpus.target_origin,
                "states": list(corpus.state_ids),
                "browsers": list(corpus.browsers),
                "vectors": [pair_vector_to_dict(v) for v in result.vectors],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    print(f"{len(reports)} state-dependent urls out of {len(corpus.urls)}")
    print(f"{len(result.vectors)} attack vectors "
          f"({result.match_calls} class-match calls for {result.pair_count} response pairs)")
    per_class: dict[str, int] = {}
    per_pair: dict[str, int] = {}
    for vector in result.vectors:
        per_class[vector.class_name] = per_class.get(vector.class_name, 0) + 1
        pair_label = "+".join(sorted(vector.states))
        per_pair[pair_label] = per_pair.get(pair_label, 0) + 1
    for name in sorted(per_class):
        print(f"  class {name}: {per_class[name]}")
    for pair in sorted(per_pair):
        print(f"  pair {pair}: {per_pair[pair]}")

    # Collection pages for dynamic classes that look statically satisfiable
    # but lack observations; an external browser harness fills them in.
    if observations is None:
        plan = plan_dynamic_collection(reports, kb)
        if plan.pages:
            plan_dir = os.path.join(args.out, "collection")
            os.makedirs(plan_dir, exist_ok=True)
            plan_doc = {
                "pages": [
                    {
                        "page_id": p.page_id,
                        "url": p.url,
                        "inclusion_method": p.inclusion_method,
                        "instrumentation": list(p.instrumentation),
                    }
                    for p in plan.pages
                ],
                "states_to_visit": plan.states_to_visit,
                "browsers_to_visit": plan.browsers_to_visit,
            }
            with open(os.path.join(plan_dir, "plan.json"), "w", encoding="utf-8") as fh:
                json.dump(plan_doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            for page in plan.pages:
                with open(os.path.join(plan_dir, f"{page.page_id}.html"), "w", encoding="utf-8") as fh:
                    fh.write(collection_page_html(page))
            print(f"dynamic collection plan: {len(plan.pages)} pages -> {plan_dir}")
    return EXIT_OK


def cmd_genpage(args: argparse.Namespace) -> int:
    with open(args.vectors, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kb = _load_kb(args.kb)
    states = list(doc["states"])
    browsers = tuple(args.browsers) if args.browsers else tuple(doc["browsers"])
    unscanned = set(browsers) - set(doc["browsers"])
    if unscanned:
        raise ScanInputError(
            f"target browsers {sorted(unscanned)} were not part of the scan "
            f"(scanned: {doc['browsers']})"
        )
    pair_vectors = [pair_vector_from_dict(v) for v in doc["vectors"]]

    oriented = vectors_for_target(pair_vectors, args.target_state, kb)
    selection = select_vectors(args.target_state, browsers, states, oriented, kb)

    if not selection.chosen:
        print("no vectors cover the target state; nothing to generate", file=sys.stderr)
        for state, browser in sorted(selection.uncovered):
            print(f"  uncovered: state {state} on {browser}", file=sys.stderr)
        return EXIT_PARTIAL

    store = TemplateStore(args.templates) if args.templates else TemplateStore()
    bundle = generate_attack_page(
        selection,
        kb,
        exfil_url=args.exfil_url,
        templates=store,
        window_ms=args.window_ms,
    )
    written = write_bundle(bundle, args.out)
    selection_path = os.path.join(args.out, "selection.json")
    with open(selection_path, "w", encoding="utf-8") as fh:
        json.dump(selection_to_dict(selection), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(selection_path)

    for path in written:
        print(f"wrote {path}")
    print(f"{len(selection.chosen)} vectors cover "
          f"{len(selection.initial_pairs) - len(selection.uncovered)}/{len(selection.initial_pairs)} pairs")
    if selection.uncovered:
        for state, browser in sorted(selection.uncovered):
            print(f"  uncovered: state {state} on {browser}")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_serve_target(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else None
    server = EchoServer(
        (args.host, args.port), scenario=scenario, rate_flip_threshold=args.rate_flip, verbose=True
    )
    print(f"serving test target on {server.base_url}"
          + (f" with scenario {scenario.name}" if scenario else ""), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_validate_kb(args: argparse.Namespace) -> int:
    kb = _load_kb(args.kb)
    static = sum(1 for c in kb if c.kind == "static")
    dynamic = sum(1 for c in kb if c.kind == "dynamic")
    deprecated = sum(1 for c in kb if c.deprecated)
    print(f"{len(kb)} classes ({static} static, {dynamic} dynamic, {deprecated} deprecated)")
    per_leak: dict[str, int] = {}
    for cls in kb:
        per_leak[cls.leak_method] = per_leak.get(cls.leak_method, 0) + 1
    for leak in sorted(per_leak):
        print(f"  {leak}: {per_leak[leak]}")
    print(f"checksum: {kb_checksum(kb)}")
    return EXIT_OK


def cmd_har_import(args: argparse.Namespace) -> int:
    with open(args.har, "r", encoding="utf-8") as fh:
        har = json.load(fh)
    records = har_entries(har, args.state, args.browser, args.target_origin)

    if args.into and os.path.exists(args.into):
        with open(args.into, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = {
            "target_origin": args.target_origin,
            "states": [],
            "browsers": [],
            "entries": [],
        }
    if args.state not in [s["state_id"] for s in doc["states"]]:
        doc["states"].append({"state_id": args.state, "description": "imported from HAR"})
    if args.browser not in doc["browsers"]:
        doc["browsers"].append(args.browser)
    doc["entries"].extend(records)
    corpus = ingest_corpus(doc)  # validates; rejects duplicate cells
    save_corpus(corpus, args.into or args.out)
    print(f"imported {len(records)} entries for state {args.state} / {args.browser}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosiscan",
        description="Find cross-origin state-inference attack opportunities in a web site.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_collect = sub.add_parser("collect", help="fetch every URL once per (state, browser)")
    p_collect.add_argument("--target-origin", required=True)
    p_collect.add_argument("--urls", required=True, help="file with one URL per line")
    p_collect.add_argument("--states", required=True, help="states JSON file")
    p_collect.add_argument("--browsers", type=_browsers_arg, default=ALL_BROWSERS)
    p_collect.add_argument("--pacing", type=float, default=5.0, help="max requests per second")
    p_collect.add_argument("--out", required=True, help="corpus JSON output path")
    p_collect.set_defaults(func=cmd_collect)

    p_scan = sub.add_parser("scan", help="find SD-URLs and matching attack vectors")
    p_scan.add_argument("--corpus", required=True)
    p_scan.add_argument("--kb", help="class-definition file (default: shipped KB)")
    p_scan.add_argument("--rules", help="normalization rules file (default: shipped rules)")
    p_scan.add_argument("--observations", help="dynamic observation JSON-lines file")
    p_scan.add_argument("--include-deprecated", action="store_true",
                        help="also match classes for removed browser features")
    p_scan.add_argument("--out", required=True, help="output directory")
    p_scan.set_defaults(func=cmd_scan)

    p_gen = sub.add_parser("genpage", help="select vectors and build the attack page")
    p_gen.add_argument("--vectors", required=True, help="vectors.json from scan")
    p_gen.add_argument("--target-state", required=True)
    p_gen.add_argument("--browsers", type=_browsers_arg, default=None)
    p_gen.add_argument("--kb")
    p_gen.add_argument("--exfil-url", default="http://127.0.0.1:8008/report")
    p_gen.add_argument("--window-ms", type=int, default=6000)
    p_gen.add_argument("--templates", help="override probe template directory")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_genpage)

    p_serve = sub.add_parser("serve-target", help="run the echo test target")
    p_serve.add_argument("--scenario", help="shipped scenario name or scenario file path")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8077)
    p_serve.add_argument("--rate-flip", type=float, default=None,
                         help="serve CAPTCHAs above this request rate")
    p_serve.set_defaults(func=cmd_serve_target)

    p_kb = sub.add_parser("validate-kb", help="load and summarize a class KB")
    p_kb.add_argument("--kb")
    p_kb.set_defaults(func=cmd_validate_kb)

    p_har = sub.add_parser("har-import", help="convert a HAR 1.2 archive to corpus cells")
    p_har.add_argument("--har", required=True)
    p_har.add_argument("--state", required=True)
    p_har.add_argument("--browser", required=True, choices=ALL_BROWSERS)
    p_har.add_argument("--target-origin", required=True)
    p_har.add_argument("--out", help="new corpus output path")
    p_har.add_argument("--into", help="merge into an existing corpus file")
    p_har.set_defaults(func=cmd_har_import)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CorpusError,
        ScanInputError,
        KBError,
        GenerationError,
        SelectionError,
        EchoSpecError,
        CollectError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
