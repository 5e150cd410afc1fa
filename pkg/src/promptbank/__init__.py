"""promptbank: textual memory banks, category-aware retrieval, prompt assembly."""

__version__ = "0.1.0"
