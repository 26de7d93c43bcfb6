"""Independent reference implementations used as test oracles.

These deliberately restate definitions from scratch (brute force, direct
formula transcription) and must not import the implementations they check.
"""

from __future__ import annotations

import random


def jaro_reference(s: str, t: str) -> float:
    """Brute-force restatement of the Jaro formula.

    Pairs equal characters within the window by scanning candidate indices
    explicitly, then counts transpositions over the paired subsequences.
    """
    if s == t:
        return 1.0
    if len(s) == 0 or len(t) == 0:
        return 0.0
    window = max(len(s), len(t)) // 2 - 1
    taken: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for i in range(len(s)):
        candidates = [
            j
            for j in range(max(0, i - window), min(len(t), i + window + 1))
            if j not in taken and t[j] == s[i]
        ]
        if candidates:
            j = min(candidates)
            taken.add(j)
            pairs.append((i, j))
    m = len(pairs)
    if m == 0:
        return 0.0
    s_matches = [s[i] for i, _ in pairs]
    t_matches = [t[j] for j in sorted(j for _, j in pairs)]
    transpositions = sum(1 for a, b in zip(s_matches, t_matches) if a != b) // 2
    return (m / len(s) + m / len(t) + (m - transpositions) / m) / 3.0


def random_string(rng: random.Random, alphabet="abcdef 0123456789:=", max_len=24) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len)))


def random_cover_instance(rng: random.Random):
    """A random vector-selection instance: states, browsers, vectors.

    Returns (target, browsers, states, vectors) with vectors built from the
    production AttackVector type but with arbitrary covered sets.
    """
    from cosiscan.selection import AttackVector

    n_states = rng.randint(2, 6)
    states = [f"S{i}" for i in range(n_states)]
    target = states[0]
    browsers = tuple(rng.sample(("chrome", "firefox", "edge"), rng.randint(1, 3)))
    n_vectors = rng.randint(0, 20)

    tag_pool = ["emits-csp-violation", "uses-csp-policy", "uses-appcache-manifest", ""]
    vectors = []
    for i in range(n_vectors):
        others = [s for s in states if s != target]
        distinguished = frozenset(rng.sample(others, rng.randint(1, len(others))))
        vector_browsers = frozenset(rng.sample(("chrome", "firefox", "edge"), rng.randint(1, 3)))
        tags = frozenset(t for t in rng.sample(tag_pool, rng.randint(0, 2)) if t)
        vectors.append(
            AttackVector(
                sd_url=f"http://t.example/u{rng.randint(0, 5)}",
                # Unique class per vector: vectors are independent cover
                # elements here (state merging is exercised separately).
                class_name=f"Class-{i}",
                orientation=rng.choice(("forward", "reversed")),
                distinguished_states=distinguished,
                browsers=vector_browsers,
                leak_method="events-fired",
                interference_tags=tags,
            )
        )
    return target, browsers, states, vectors


def cover_exists(target, browsers, states, vectors) -> bool:
    """Cover-existence oracle: a full cover exists iff the union of all
    vectors' covered pairs reaches every (state, browser) pair. (Set cover
    is monotone: if any subset covers, the full set does.)"""
    need = {(s, b) for s in states if s != target for b in browsers}
    got = set()
    for vector in vectors:
        for state in vector.distinguished_states:
            for browser in vector.browsers:
                if browser in browsers:
                    got.add((state, browser))
    return need <= got
