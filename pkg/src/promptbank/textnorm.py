"""Text normalization shared by the corpus loader and bank builders.

One frozen rule set: lowercase, collapse runs of whitespace to single
spaces, strip terminal punctuation. Parser output casing and trailing
periods differ from raw captions, so all phrase identity checks go
through :func:`normalize_text`.
"""

from __future__ import annotations

_TERMINAL_PUNCT = ".!?,;:"


def normalize_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation."""
    collapsed = " ".join(text.lower().split())
    return collapsed.rstrip(_TERMINAL_PUNCT + " ")


def tokens(text: str) -> list[str]:
    return normalize_text(text).split()


def is_token_substring(needle: str, haystack: str) -> bool:
    """True when `needle`'s tokens appear contiguously inside `haystack`'s.

    Token-boundary semantics: "boy" matches "young boy" but not
    "boycott". Both sides are normalized first.
    """
    small = tokens(needle)
    big = tokens(haystack)
    if not small or len(small) > len(big):
        return False
    n = len(small)
    return any(big[i:i + n] == small for i in range(len(big) - n + 1))
