"""Rule-based caption parsing: noun-phrase chunks and relation triples.

A deliberately small, deterministic chunker. It tags tokens with closed
word lists plus verb morphology, groups determiner-led spans into noun
phrases, keeps bare nouns as single-token phrases, and reads triples
off the subject-verb-object and chunk-preposition-chunk patterns. No
trained models, so parses are approximate; captions the rules cannot
handle yield an empty parse and a warning rather than an error.
"""

from __future__ import annotations

import logging

logger = logging.getLogger(__name__)

PARSER_ID = "rule-chunker-v1"

DETERMINERS = {
    "a", "an", "the", "this", "that", "these", "those", "one", "two",
    "three", "four", "some", "several", "many", "his", "her", "its",
    "their", "my", "our", "your", "another", "each", "every",
}
AUXILIARIES = {
    "is", "are", "was", "were", "be", "been", "being", "am", "has",
    "have", "had", "does", "do", "did", "will", "would", "can",
    "could", "should", "may", "might",
}
PREPOSITIONS = {
    "in", "on", "at", "by", "with", "to", "of", "near", "for", "from",
    "into", "onto", "over", "under", "around", "through", "across",
    "behind", "beside", "against", "along", "off", "inside", "outside",
    "between", "above", "below", "during", "towards", "toward",
}
CONJUNCTIONS = {"and", "or", "but", "while", "as", "when", "then", "so", "because"}

COMMON_VERBS = {
    "play", "hold", "run", "walk", "sit", "stand", "jump", "ride",
    "eat", "drink", "cook", "sing", "dance", "talk", "speak", "watch",
    "look", "make", "take", "throw", "catch", "kick", "hit", "drive",
    "fly", "swim", "climb", "read", "write", "cut", "wash", "clean",
    "open", "close", "push", "pull", "show", "wear", "carry", "march",
    "rest", "sleep", "chase", "go", "come", "move", "turn", "put",
    "use", "perform", "blow", "wave", "smile", "laugh", "fall", "win",
}

_VOWELS = set("aeiou")


def _lemma_candidates(token: str) -> list[str]:
    """Possible base forms for an inflected token, most specific first."""
    out = []
    if token.endswith("ies") and len(token) > 4:
        out.append(token[:-3] + "y")
    if token.endswith("es") and len(token) > 3:
        out.append(token[:-2])
    if token.endswith("s") and len(token) > 2:
        out.append(token[:-1])
    if token.endswith("ing") and len(token) > 4:
        stem = token[:-3]
        if len(stem) > 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
            out.append(stem[:-1])  # running -> run
        out.append(stem + "e")     # riding -> ride
        out.append(stem)           # playing -> play
    if token.endswith("ed") and len(token) > 3:
        stem = token[:-2]
        if len(stem) > 2 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
            out.append(stem[:-1])
        out.append(stem + "e" if not stem.endswith("e") else stem)
        out.append(stem)
    return out


def verb_lemma(token: str) -> str | None:
    """Base verb form when the token looks like a verb, else None."""
    if token in COMMON_VERBS:
        return token
    for cand in _lemma_candidates(token):
        if cand in COMMON_VERBS:
            return cand
    # unknown stem: -ing after the closed lists is still very likely a verb
    if token.endswith("ing") and len(token) > 4:
        return token[:-3]
    return None


def _clean_tokens(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        stripped = raw.strip(".,!?;:\"'()[]")
        if stripped:
            tokens.append(stripped)
    return tokens


def parse_caption(text: str) -> tuple[list[str], list[tuple[str, str, str]]]:
    """Noun phrases and ⟨subject, predicate, object⟩ triples for one caption."""
    tokens = _clean_tokens(text)

    def stop_class(tok: str) -> bool:
        return (tok in AUXILIARIES or tok in PREPOSITIONS
                or tok in CONJUNCTIONS or verb_lemma(tok) is not None)

    chunks: list[tuple[int, int]] = []  # token spans [start, end)
    verbs: list[tuple[int, str]] = []
    preps: list[int] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in DETERMINERS:
            j = i + 1
            while j < len(tokens) and tokens[j] not in DETERMINERS \
                    and not stop_class(tokens[j]):
                j += 1
            if j > i + 1:
                chunks.append((i, j))
                i = j
                continue
            i += 1
            continue
        if tok in AUXILIARIES or tok in CONJUNCTIONS:
            i += 1
            continue
        if tok in PREPOSITIONS:
            preps.append(i)
            i += 1
            continue
        lemma = verb_lemma(tok)
        if lemma is not None:
            verbs.append((i, lemma))
            i += 1
            continue
        chunks.append((i, i + 1))  # bare noun
        i += 1

    phrases = [" ".join(tokens[a:b]) for a, b in chunks]

    def head(span: tuple[int, int]) -> str:
        return tokens[span[1] - 1]

    triples: list[tuple[str, str, str]] = []
    if chunks:
        subject = chunks[0]
        for v_idx, lemma in verbs:
            if v_idx <= subject[0]:
                continue
            following = [c for c in chunks if c[0] > v_idx]
            if following:
                triples.append((head(subject), lemma, head(following[0])))
        for p_idx in preps:
            before = [c for c in chunks if c[1] <= p_idx]
            after = [c for c in chunks if c[0] > p_idx]
            if not before or not after:
                continue
            left, right = before[-1], after[0]
            # a verb between the chunks means the relation is verbal, not prepositional
            if any(left[1] <= v_idx < right[0] for v_idx, _ in verbs):
                continue
            triples.append((head(left), tokens[p_idx], head(right)))

    seen = set()
    unique_triples = []
    for t in triples:
        if t not in seen:
            seen.add(t)
            unique_triples.append(t)
    return phrases, unique_triples
