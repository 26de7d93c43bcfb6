"""Declarative knowledge base of cross-origin leak classes.

Each class pairs two response predicates with the attack-page machinery
(inclusion methods, leak method, per-side observables, affected browsers)
that turns a matching response pair into a working probe. Predicates are
conjunctions of atoms over signature fields; a field not mentioned is
unconstrained. Cross-side relations ("content types differ", "frame counts
differ") are expressed as pair operators evaluated on the oriented pair.

Classes whose predicates reference traits that only a renderer can produce
are *dynamic*: they are evaluated only when both signatures carry those
traits (from ingested browser observations) and the caller asked for
dynamic matching.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .browsers import ALL_BROWSERS
from .dynamic import postmessage_differs
from .response import CT_FAMILIES, RENDER_TRAITS, SC_CLASSES, ALL_TRAITS, ResponseSignature

DEFAULT_JARO_THRESHOLD = 0.90

SIGNATURE_FIELDS = (
    "sc",
    "sc_class",
    "ct_family",
    "xcto_nosniff",
    "xfo_enabled",
    "cd_attachment",
    "redirect_target_origin",
)

# tag -> URL-carrying attribute, per the resource-inclusion table; the html
# manifest attribute is the odd one out used by the AppCache class.
INCLUSION_TAGS = {
    "applet": "code",
    "audio": "src",
    "embed": "src",
    "frame": "src",
    "iframe": "src",
    "img": "src",
    "input": "src",
    "link": "href",
    "object": "data",
    "script": "src",
    "source": "src",
    "track": "src",
    "video": ("poster", "src"),
}

LEAK_METHODS = (
    "events-fired",
    "object-properties",
    "postmessage",
    "css-prop-read",
    "js-error",
    "js-object-read",
    "csp-violation",
    "appcache",
)

ATOM_OPS = (
    "eq",
    "ne",
    "in",
    "not_in",
    "status_any",
    "status_none",
    "trait_present",
    "trait_absent",
    "trait_nonempty",
)
PAIR_OPS = (
    "differs",
    "trait_differs",
    "trait_gain",
    "video_dimensions_differ",
    "postmessage_differs",
)


class KBError(ValueError):
    """Schema violations and conflicts in a class-definition document."""


@dataclass(frozen=True)
class Atom:
    op: str
    field: str | None = None
    value: object = None
    trait: str | None = None
    codes: tuple[int, ...] = ()
    classes: tuple[str, ...] = ()

    def evaluate(self, sig: ResponseSignature) -> bool:
        if self.op == "status_any":
            return sig.sc in self.codes or sig.sc_class in self.classes
        if self.op == "status_none":
            return sig.sc not in self.codes and sig.sc_class not in self.classes
        if self.op == "trait_present":
            return sig.has_trait(self.trait)  # type: ignore[arg-type]
        if self.op == "trait_absent":
            return not sig.has_trait(self.trait)  # type: ignore[arg-type]
        if self.op == "trait_nonempty":
            value = sig.trait(self.trait)  # type: ignore[arg-type]
            return bool(value)
        actual = getattr(sig, self.field)  # type: ignore[arg-type]
        if self.op == "eq":
            return actual == self.value
        if self.op == "ne":
            return actual != self.value
        if self.op == "in":
            return actual in self.value  # type: ignore[operator]
        if self.op == "not_in":
            return actual not in self.value  # type: ignore[operator]
        raise KBError(f"unknown atom op {self.op!r}")


@dataclass(frozen=True)
class Predicate:
    """Conjunction of atoms, optionally negated as a whole."""

    atoms: tuple[Atom, ...]
    negate: bool = False

    def evaluate(self, sig: ResponseSignature) -> bool:
        result = all(atom.evaluate(sig) for atom in self.atoms)
        return not result if self.negate else result


@dataclass(frozen=True)
class PairConstraint:
    """Relation between the two sides of an oriented pair (A first)."""

    op: str
    on: str | None = None

    def evaluate(self, sig_a: ResponseSignature, sig_b: ResponseSignature, jaro_threshold: float) -> bool:
        if self.op == "differs":
            return getattr(sig_a, self.on) != getattr(sig_b, self.on)  # type: ignore[arg-type]
        if self.op == "trait_differs":
            return sig_a.trait(self.on) != sig_b.trait(self.on)  # type: ignore[arg-type]
        if self.op == "trait_gain":
            a = set(sig_a.trait(self.on) or ())  # type: ignore[arg-type]
            b = set(sig_b.trait(self.on) or ())  # type: ignore[arg-type]
            return bool(a - b)
        if self.op == "video_dimensions_differ":
            a = sig_a.trait("video")
            b = sig_b.trait("video")
            return (a or ())[:2] != (b or ())[:2]
        if self.op == "postmessage_differs":
            a = sig_a.trait("broadcast-postmsgs") or ()
            b = sig_b.trait("broadcast-postmsgs") or ()
            return postmessage_differs(
                [{"origin": o, "data": d} for o, d in a],
                [{"origin": o, "data": d} for o, d in b],
                jaro_threshold,
            )
        raise KBError(f"unknown pair op {self.op!r}")


@dataclass(frozen=True)
class InclusionMethod:
    kind: str  # html-tag | dom-method | form-post-iframe | appcache-manifest | composite
    tag: str | None = None
    url_attribute: str | None = None
    extra_attributes: tuple[tuple[str, str], ...] = ()
    method: str | None = None
    steps: tuple[str, ...] = ()

    @property
    def token(self) -> str:
        """Stable identifier used for template lookup."""
        if self.kind == "html-tag":
            rel = dict(self.extra_attributes).get("rel")
            return f"{self.tag}-{rel}" if rel else str(self.tag)
        if self.kind == "dom-method":
            return "window-open" if self.method == "window.open" else str(self.method)
        if self.kind == "form-post-iframe":
            return "form-iframe"
        if self.kind == "appcache-manifest":
            return "manifest"
        return "composite-cache-load"


@dataclass(frozen=True)
class AttackClass:
    name: str
    kind: str  # static | dynamic
    leak_method: str
    pred_a: Predicate
    pred_b: Predicate
    pair_constraints: tuple[PairConstraint, ...]
    inclusion_methods: tuple[InclusionMethod, ...]
    observable_a: str
    observable_b: str
    browsers: frozenset[str]
    interference_tags: frozenset[str] = frozenset()
    deprecated: bool = False

    def required_traits(self) -> frozenset[str]:
        names = set()
        for pred in (self.pred_a, self.pred_b):
            for atom in pred.atoms:
                if atom.trait is not None:
                    names.add(atom.trait)
        for constraint in self.pair_constraints:
            if constraint.on is not None and constraint.on not in SIGNATURE_FIELDS:
                names.add(constraint.on)
        return frozenset(names)

    def render_traits(self) -> frozenset[str]:
        return self.required_traits() & RENDER_TRAITS


@dataclass(frozen=True)
class ClassMatch:
    class_name: str
    orientation: str  # forward | reversed
    browsers: frozenset[str]
    leak_method: str
    kind: str
    deprecated: bool = False


# --------------------------------------------------------------------------
# Loading and validation
# --------------------------------------------------------------------------


def _parse_atom(raw: dict, where: str) -> Atom:
    op = raw.get("op")
    if op not in ATOM_OPS:
        raise KBError(f"{where}: unknown atom op {op!r}")
    if op in ("status_any", "status_none"):
        classes = tuple(raw.get("classes", ()))
        for cls in classes:
            if cls not in SC_CLASSES:
                raise KBError(f"{where}: unknown status class {cls!r}")
        return Atom(op=op, codes=tuple(int(c) for c in raw.get("codes", ())), classes=classes)
    if op in ("trait_present", "trait_absent", "trait_nonempty"):
        trait = raw.get("trait")
        if trait not in ALL_TRAITS:
            raise KBError(f"{where}: unknown trait {trait!r}")
        return Atom(op=op, trait=trait)
    fld = raw.get("field")
    if fld not in SIGNATURE_FIELDS:
        raise KBError(f"{where}: atom references unknown field {fld!r}")
    value = raw.get("value")
    if op in ("in", "not_in"):
        value = tuple(value)
        if fld == "ct_family":
            for fam in value:
                if fam not in CT_FAMILIES:
                    raise KBError(f"{where}: unknown ct family {fam!r}")
    return Atom(op=op, field=fld, value=value)


def _parse_predicate(raw: dict, where: str) -> Predicate:
    atoms = tuple(_parse_atom(a, where) for a in raw.get("atoms", ()))
    return Predicate(atoms=atoms, negate=bool(raw.get("negate", False)))


def _parse_pair_constraint(raw: dict, where: str) -> PairConstraint:
    op = raw.get("op")
    if op not in PAIR_OPS:
        raise KBError(f"{where}: unknown pair op {op!r}")
    on = raw.get("on")
    if op == "differs" and on not in SIGNATURE_FIELDS:
        raise KBError(f"{where}: pair op on unknown field {on!r}")
    if op in ("trait_differs", "trait_gain") and on not in ALL_TRAITS:
        raise KBError(f"{where}: pair op on unknown trait {on!r}")
    if op == "video_dimensions_differ":
        on = "video"
    if op == "postmessage_differs":
        on = "broadcast-postmsgs"
    return PairConstraint(op=op, on=on)


def _parse_inclusion(raw: dict, where: str) -> InclusionMethod:
    kind = raw.get("kind")
    if kind == "html-tag":
        tag = raw.get("tag")
        attribute = raw.get("url_attribute")
        allowed = INCLUSION_TAGS.get(tag)  # type: ignore[arg-type]
        if allowed is None:
            raise KBError(f"{where}: tag {tag!r} not in the inclusion table")
        if not (attribute == allowed or (isinstance(allowed, tuple) and attribute in allowed)):
            raise KBError(f"{where}: tag {tag!r} does not load URLs via {attribute!r}")
        extra = tuple(sorted((str(k), str(v)) for k, v in raw.get("extra_attributes", {}).items()))
        return InclusionMethod(kind=kind, tag=tag, url_attribute=attribute, extra_attributes=extra)
    if kind == "dom-method":
        return InclusionMethod(kind=kind, method=raw.get("method"))
    if kind == "form-post-iframe":
        return InclusionMethod(kind=kind)
    if kind == "appcache-manifest":
        return InclusionMethod(kind=kind)
    if kind == "composite":
        steps = tuple(str(s) for s in raw.get("steps", ()))
        if not steps:
            raise KBError(f"{where}: composite inclusion needs ordered steps")
        return InclusionMethod(kind=kind, steps=steps)
    raise KBError(f"{where}: unknown inclusion kind {kind!r}")


def _parse_class(raw: dict) -> AttackClass:
    name = raw.get("name")
    if not name:
        raise KBError("class without a name")
    where = f"class {name}"
    leak = raw.get("leak_method")
    if leak not in LEAK_METHODS:
        raise KBError(f"{where}: unknown leak method {leak!r}")
    browsers = frozenset(raw.get("browsers", ()))
    if not browsers or not browsers <= set(ALL_BROWSERS):
        raise KBError(f"{where}: browsers must be a non-empty subset of {ALL_BROWSERS}")
    inclusions = tuple(_parse_inclusion(i, where) for i in raw.get("inclusion_methods", ()))
    if not inclusions:
        raise KBError(f"{where}: inclusion_methods must be non-empty")
    observable_a = str(raw.get("observable_a", ""))
    observable_b = str(raw.get("observable_b", ""))
    if observable_a == observable_b:
        raise KBError(f"{where}: observables must differ")

    cls = AttackClass(
        name=name,
        kind=raw.get("kind", "static"),
        leak_method=leak,
        pred_a=_parse_predicate(raw.get("pred_a", {}), where),
        pred_b=_parse_predicate(raw.get("pred_b", {}), where),
        pair_constraints=tuple(
            _parse_pair_constraint(c, where) for c in raw.get("pair_constraints", ())
        ),
        inclusion_methods=inclusions,
        observable_a=observable_a,
        observable_b=observable_b,
        browsers=browsers,
        interference_tags=frozenset(raw.get("interference_tags", ())),
        deprecated=bool(raw.get("deprecated", False)),
    )
    if cls.kind not in ("static", "dynamic"):
        raise KBError(f"{where}: kind must be static or dynamic")
    derived = "dynamic" if cls.render_traits() else "static"
    if cls.kind != derived:
        raise KBError(f"{where}: declared kind {cls.kind} but predicates imply {derived}")
    return cls


@dataclass(frozen=True)
class KnowledgeBase:
    classes: tuple[AttackClass, ...]
    jaro_threshold: float = DEFAULT_JARO_THRESHOLD

    def __iter__(self):
        return iter(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def get(self, name: str) -> AttackClass:
        for cls in self.classes:
            if cls.name == name:
                return cls
        raise KeyError(name)

    def active_classes(self, include_deprecated: bool = False) -> tuple[AttackClass, ...]:
        if include_deprecated:
            return self.classes
        return tuple(c for c in self.classes if not c.deprecated)


def load_kb(doc: dict) -> KnowledgeBase:
    try:
        raw_classes = doc["classes"]
    except (KeyError, TypeError) as exc:
        raise KBError(f"not a class-definition document: {exc}") from exc
    classes = []
    names = set()
    for raw in raw_classes:
        cls = _parse_class(raw)
        if cls.name in names:
            raise KBError(f"duplicate class name {cls.name!r}")
        names.add(cls.name)
        classes.append(cls)
    threshold = float(doc.get("postmessage_jaro_threshold", DEFAULT_JARO_THRESHOLD))
    if not 0.0 <= threshold <= 1.0:
        raise KBError(f"postmessage_jaro_threshold {threshold} outside [0, 1]")
    return KnowledgeBase(classes=tuple(classes), jaro_threshold=threshold)


def load_kb_file(path: str) -> KnowledgeBase:
    with open(path, "r", encoding="utf-8") as fh:
        return load_kb(json.load(fh))


def default_kb() -> KnowledgeBase:
    data = resources.files("cosiscan").joinpath("kb/cosi-classes.json")
    return load_kb(json.loads(data.read_text(encoding="utf-8")))


def kb_checksum(kb: KnowledgeBase) -> str:
    """SHA-256 over a canonical serialization of the loaded classes."""
    canonical = json.dumps(
        [
            {
                "name": c.name,
                "kind": c.kind,
                "leak_method": c.leak_method,
                "pred_a": _predicate_repr(c.pred_a),
                "pred_b": _predicate_repr(c.pred_b),
                "pairs": [[p.op, p.on] for p in c.pair_constraints],
                "inclusions": [m.token for m in c.inclusion_methods],
                "observables": [c.observable_a, c.observable_b],
                "browsers": sorted(c.browsers),
                "interference": sorted(c.interference_tags),
                "deprecated": c.deprecated,
            }
            for c in kb.classes
        ],
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode()).hexdigest()


def _predicate_repr(pred: Predicate) -> list:
    atoms = [
        [a.op, a.field, a.value, a.trait, list(a.codes), list(a.classes)] for a in pred.atoms
    ]
    return [atoms, pred.negate]


# --------------------------------------------------------------------------
# Matching
# --------------------------------------------------------------------------


def _class_applicable(cls: AttackClass, sig_x: ResponseSignature, sig_y: ResponseSignature) -> bool:
    """Dynamic classes need their rendered traits on both signatures."""
    for trait in cls.render_traits():
        if not (sig_x.has_trait(trait) and sig_y.has_trait(trait)):
            return False
    return True


def _oriented_match(
    cls: AttackClass,
    sig_a: ResponseSignature,
    sig_b: ResponseSignature,
    jaro_threshold: float,
) -> bool:
    if not (cls.pred_a.evaluate(sig_a) and cls.pred_b.evaluate(sig_b)):
        return False
    return all(c.evaluate(sig_a, sig_b, jaro_threshold) for c in cls.pair_constraints)


def match_pair(
    sig_x: ResponseSignature,
    sig_y: ResponseSignature,
    kb: KnowledgeBase,
    kinds: frozenset[str] = frozenset({"static", "dynamic"}),
) -> list[ClassMatch]:
    """All class matches for an (x, y) response pair, in KB order.

    Forward means pred_a matched x; reversed means pred_a matched y. A class
    may produce both orientations as two separate matches.
    """
    matches: list[ClassMatch] = []
    for cls in kb.classes:
        if cls.kind not in kinds:
            continue
        if cls.kind == "dynamic" and not _class_applicable(cls, sig_x, sig_y):
            continue
        if _oriented_match(cls, sig_x, sig_y, kb.jaro_threshold):
            matches.append(
                ClassMatch(
                    class_name=cls.name,
                    orientation="forward",
                    browsers=cls.browsers,
                    leak_method=cls.leak_method,
                    kind=cls.kind,
                    deprecated=cls.deprecated,
                )
            )
        if _oriented_match(cls, sig_y, sig_x, kb.jaro_threshold):
            matches.append(
                ClassMatch(
                    class_name=cls.name,
                    orientation="reversed",
                    browsers=cls.browsers,
                    leak_method=cls.leak_method,
                    kind=cls.kind,
                    deprecated=cls.deprecated,
                )
            )
    return matches


def effective_browsers(match: ClassMatch, requested: frozenset[str] | set[str]) -> frozenset[str]:
    return match.browsers & frozenset(requested)
