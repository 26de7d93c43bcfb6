"""From class matches to a minimal attack-vector set for one target state.

``identify_vectors`` walks every state-dependent URL and every
distinguishable state pair, matching the pair's signatures against the
knowledge base. Matching is memoized on the normalized response pair: two
state pairs producing the same responses are matched once.

``select_vectors`` is a greedy cover over (state, browser) pairs: filter the
vectors to those involving the target state, merge vectors that share
(url, class, orientation), then repeatedly take the highest-scoring vector
until every pair is covered or nothing helps. It returns both the chosen
vectors and whatever pairs remain uncoverable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .corpus import Corpus, SdUrlReport, normalized_digest
from .dynamic import DynamicObservation, index_observations, lift_all
from .kb import AttackClass, ClassMatch, KnowledgeBase, match_pair
from .response import ResponseSignature

# Interference: tag pairs that degrade each other inside one attack page.
CONFLICTING_TAGS = (
    frozenset({"emits-csp-violation", "uses-csp-policy"}),
    frozenset({"uses-appcache-manifest", "uses-csp-policy"}),
)
INTERFERENCE_PENALTY = 0.5
INTERFERENCE_FLOOR = 0.1


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class PairVector:
    """A class match for one SD-URL and one unordered state pair.

    ``side_a`` is the state whose response satisfied the class's first
    predicate; ``side_b`` satisfied the second. ``params`` carries values a
    probe template needs from the matched responses (e.g. side A's declared
    content type, or the subresource URL a cache check keys on).
    """

    sd_url: str
    class_name: str
    side_a: str
    side_b: str
    browsers: frozenset[str]
    leak_method: str
    kind: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def states(self) -> frozenset[str]:
        return frozenset({self.side_a, self.side_b})


@dataclass
class IdentifyResult:
    vectors: list[PairVector]
    match_calls: int
    pair_count: int


@dataclass(frozen=True)
class AttackVector:
    """A probe usable in an attack page for a fixed target state.

    ``orientation`` records which predicate side the *target* state
    satisfies ("forward" = pred_a). ``distinguished_states`` are the states
    this vector separates from the target.
    """

    sd_url: str
    class_name: str
    orientation: str
    distinguished_states: frozenset[str]
    browsers: frozenset[str]
    leak_method: str
    interference_tags: frozenset[str] = frozenset()
    params: tuple[tuple[str, str], ...] = ()


CoveragePair = tuple[str, str]  # (state_id, browser_id)


@dataclass
class SelectionResult:
    target_state: str
    requested_browsers: tuple[str, ...]
    chosen: list[AttackVector]
    uncovered: set[CoveragePair]
    initial_pairs: set[CoveragePair] = field(default_factory=set)


def identify_vectors(
    sd_reports: list[SdUrlReport],
    corpus: Corpus,
    kb: KnowledgeBase,
    observations: list[DynamicObservation] | None = None,
    include_deprecated: bool = False,
) -> IdentifyResult:
    """Match every (SD-URL, state pair) against the KB, per browser.

    Dynamic observations, when provided, are lifted into the signatures so
    dynamic classes become decidable. Deprecated classes are skipped unless
    asked for.
    """
    kinds = frozenset({"static", "dynamic"}) if observations else frozenset({"static"})
    active = KnowledgeBase(
        classes=kb.active_classes(include_deprecated), jaro_threshold=kb.jaro_threshold
    )
    obs_index = index_observations(observations or ())

    state_order = {s: i for i, s in enumerate(corpus.state_ids)}
    match_cache: dict[tuple[str, str], list[ClassMatch]] = {}
    calls = 0
    pair_count = 0
    vectors: list[PairVector] = []

    for report in sorted(sd_reports, key=lambda r: r.url):
        signatures: dict[tuple[str, str], ResponseSignature] = {}
        digests: dict[tuple[str, str], str] = {}
        for (browser, state), norm in report.cells.items():
            sig = norm.signature
            cell_obs = obs_index.get((report.url, state, browser), [])
            if cell_obs:
                sig = lift_all(sig, cell_obs)
            signatures[(browser, state)] = sig
            digests[(browser, state)] = (
                normalized_digest(norm) + "+" + sig.canonical()
            )

        for pair, browsers in report.distinguishable_pairs.items():
            state_x, state_y = sorted(pair, key=lambda s: state_order.get(s, 99))
            per_browser: dict[tuple[str, ...], set[str]] = {}
            for browser in browsers:
                key_x = digests.get((browser, state_x))
                key_y = digests.get((browser, state_y))
                if key_x is None or key_y is None:
                    continue
                pair_count += 1
                cache_key = (key_x, key_y)
                if cache_key in match_cache:
                    matches = match_cache[cache_key]
                else:
                    matches = match_pair(
                        signatures[(browser, state_x)],
                        signatures[(browser, state_y)],
                        active,
                        kinds=kinds,
                    )
                    match_cache[cache_key] = matches
                    calls += 1
                match_key = tuple(f"{m.class_name}:{m.orientation}" for m in matches)
                per_browser.setdefault(match_key, set()).add(browser)

            emitted: dict[tuple[str, str, str], set[str]] = {}
            for match_key, browser_set in per_browser.items():
                for entry in match_key:
                    class_name, orientation = entry.rsplit(":", 1)
                    cls = kb.get(class_name)
                    side_a, side_b = (
                        (state_x, state_y) if orientation == "forward" else (state_y, state_x)
                    )
                    effective = cls.browsers & browser_set
                    if not effective:
                        continue
                    key = (class_name, side_a, side_b)
                    emitted.setdefault(key, set()).update(effective)
            for (class_name, side_a, side_b), browser_set in sorted(
                emitted.items(), key=lambda item: (_kb_index(kb, item[0][0]), item[0])
            ):
                cls = kb.get(class_name)
                browser = sorted(browser_set)[0]
                params = _vector_params(
                    cls,
                    signatures.get((browser, side_a)),
                    signatures.get((browser, side_b)),
                    report.cells.get((browser, side_a)),
                )
                vectors.append(
                    PairVector(
                        sd_url=report.url,
                        class_name=class_name,
                        side_a=side_a,
                        side_b=side_b,
                        browsers=frozenset(browser_set),
                        leak_method=cls.leak_method,
                        kind=cls.kind,
                        params=params,
                    )
                )
    return IdentifyResult(vectors=vectors, match_calls=calls, pair_count=pair_count)


def _vector_params(cls: AttackClass, sig_a, sig_b, norm_a) -> tuple[tuple[str, str], ...]:
    """Template parameters extracted from the matched responses."""
    params: dict[str, str] = {}
    for constraint in cls.pair_constraints:
        if constraint.op == "trait_gain" and sig_a is not None and sig_b is not None:
            gained = sorted(
                set(sig_a.trait(constraint.on) or ()) - set(sig_b.trait(constraint.on) or ())
            )
            if gained:
                params["subresource_url"] = gained[0]
    needs_ct = any(
        "{{content_type_a}}" in value
        for method in cls.inclusion_methods
        for _, value in method.extra_attributes
    )
    if needs_ct and norm_a is not None:
        for name, value in norm_a.normalized_headers:
            if name.lower() == "content-type":
                params["content_type_a"] = value.split(";", 1)[0].strip()
                break
    return tuple(sorted(params.items()))


def _kb_index(kb: KnowledgeBase, name: str) -> int:
    for i, cls in enumerate(kb.classes):
        if cls.name == name:
            return i
    return len(kb.classes)


def vectors_for_target(
    pair_vectors: list[PairVector], target: str, kb: KnowledgeBase
) -> list[AttackVector]:
    """Keep vectors whose pair involves the target; orient them to it."""
    out = []
    for vector in pair_vectors:
        if target not in vector.states:
            continue
        other = vector.side_b if vector.side_a == target else vector.side_a
        orientation = "forward" if vector.side_a == target else "reversed"
        cls = kb.get(vector.class_name)
        out.append(
            AttackVector(
                sd_url=vector.sd_url,
                class_name=vector.class_name,
                orientation=orientation,
                distinguished_states=frozenset({other}),
                browsers=vector.browsers,
                leak_method=vector.leak_method,
                interference_tags=cls.interference_tags,
                params=vector.params,
            )
        )
    return out


def merge_states(vectors: list[AttackVector], target: str) -> list[AttackVector]:
    """Coalesce vectors sharing (sd_url, class, orientation); the merged
    vector distinguishes the union of the originals' states."""
    merged: dict[tuple[str, str, str], AttackVector] = {}
    order: list[tuple[str, str, str]] = []
    for vector in vectors:
        if target in vector.distinguished_states:
            raise SelectionError(
                f"vector for {vector.sd_url} distinguishes the target state from itself"
            )
        key = (vector.sd_url, vector.class_name, vector.orientation)
        if key in merged:
            existing = merged[key]
            merged[key] = replace(
                existing,
                distinguished_states=existing.distinguished_states | vector.distinguished_states,
                browsers=existing.browsers | vector.browsers,
            )
        else:
            merged[key] = vector
            order.append(key)
    return [merged[key] for key in order]


def covered_pairs(vector: AttackVector, browsers: tuple[str, ...] | frozenset[str]) -> set[CoveragePair]:
    effective = vector.browsers & frozenset(browsers)
    return {(state, browser) for state in vector.distinguished_states for browser in effective}


def _conflicts(tags_a: frozenset[str], tags_b: frozenset[str]) -> int:
    count = 0
    for pair in CONFLICTING_TAGS:
        left, right = tuple(pair)
        if (left in tags_a and right in tags_b) or (right in tags_a and left in tags_b):
            count += 1
    return count


def score(
    vector: AttackVector,
    remaining: set[CoveragePair],
    chosen_so_far: list[AttackVector],
    browsers: tuple[str, ...] | frozenset[str],
) -> float:
    """Pairs newly covered, damped when the vector interferes with choices
    already made. Zero iff the vector covers nothing that remains."""
    base = len(covered_pairs(vector, browsers) & remaining)
    if base == 0:
        return 0.0
    factor = 1.0
    for chosen in chosen_so_far:
        factor *= INTERFERENCE_PENALTY ** _conflicts(vector.interference_tags, chosen.interference_tags)
    return base * max(factor, INTERFERENCE_FLOOR)


def select_vectors(
    target: str,
    browsers: tuple[str, ...],
    states: list[str],
    vectors: list[AttackVector],
    kb: KnowledgeBase | None = None,
) -> SelectionResult:
    """Greedy cover of (state, browser) pairs for the target state.

    Ties on score prefer wider browser support, then fewer interference
    tags, then the SD-URL with fewer alternative uses left in the pool
    (reusing one URL across probes risks cache interference), then name
    order.
    """
    if target not in states:
        raise SelectionError(f"target state {target!r} not among states {states}")
    if not browsers:
        raise SelectionError("no target browsers requested")

    merged = merge_states(list(vectors), target)
    pairs: set[CoveragePair] = {
        (state, browser) for state in states if state != target for browser in browsers
    }
    initial = set(pairs)
    pool = list(merged)
    chosen: list[AttackVector] = []

    while pairs and pool:
        url_uses: dict[str, int] = {}
        for vector in pool:
            url_uses[vector.sd_url] = url_uses.get(vector.sd_url, 0) + 1

        def rank(vector: AttackVector) -> tuple:
            return (
                -score(vector, pairs, chosen, browsers),
                -len(vector.browsers & frozenset(browsers)),
                len(vector.interference_tags),
                url_uses[vector.sd_url] - 1,
                vector.class_name,
                vector.sd_url,
                vector.orientation,
            )

        best = min(pool, key=rank)
        if score(best, pairs, chosen, browsers) <= 0.0:
            break
        chosen.append(best)
        pairs -= covered_pairs(best, browsers)
        pool.remove(best)

    return SelectionResult(
        target_state=target,
        requested_browsers=tuple(browsers),
        chosen=chosen,
        uncovered=pairs,
        initial_pairs=initial,
    )


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def pair_vector_to_dict(vector: PairVector) -> dict:
    return {
        "sd_url": vector.sd_url,
        "class_name": vector.class_name,
        "side_a": vector.side_a,
        "side_b": vector.side_b,
        "browsers": sorted(vector.browsers),
        "leak_method": vector.leak_method,
        "kind": vector.kind,
        "params": {name: value for name, value in vector.params},
    }


def pair_vector_from_dict(doc: dict) -> PairVector:
    return PairVector(
        sd_url=doc["sd_url"],
        class_name=doc["class_name"],
        side_a=doc["side_a"],
        side_b=doc["side_b"],
        browsers=frozenset(doc["browsers"]),
        leak_method=doc["leak_method"],
        kind=doc["kind"],
        params=tuple(sorted((str(k), str(v)) for k, v in doc.get("params", {}).items())),
    )


def selection_to_dict(result: SelectionResult) -> dict:
    return {
        "target_state": result.target_state,
        "requested_browsers": list(result.requested_browsers),
        "chosen": [
            {
                "sd_url": v.sd_url,
                "class_name": v.class_name,
                "orientation": v.orientation,
                "distinguished_states": sorted(v.distinguished_states),
                "browsers": sorted(v.browsers),
                "leak_method": v.leak_method,
            }
            for v in result.chosen
        ],
        "uncovered": sorted(list(result.uncovered)),
        "covered": sorted(list(result.initial_pairs - result.uncovered)),
    }
