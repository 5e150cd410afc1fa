"""Exception types raised by the promptbank pipeline."""


class PromptBankError(Exception):
    """Base class for all promptbank errors."""


class ConfigError(PromptBankError):
    """Invalid configuration value, preset, or config file."""


# --- corpus and file loading ---

class MalformedRecord(PromptBankError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(PromptBankError):
    def __init__(self, item_id: str):
        super().__init__(f"duplicate caption id: {item_id!r}")
        self.item_id = item_id


class EmptyCorpus(PromptBankError):
    """Corpus contains no captions."""


class BadMagic(PromptBankError):
    """File does not start with the expected magic bytes or version."""


class RowCountMismatch(PromptBankError):
    """Key count does not match the matrix row count."""


class NonFiniteValue(PromptBankError):
    def __init__(self, row: int):
        super().__init__(f"non-finite value in row {row}")
        self.row = row


class IndexOutOfBounds(PromptBankError):
    """Container index references bytes outside the file."""


class DuplicateVideoId(PromptBankError):
    def __init__(self, video_id: str):
        super().__init__(f"duplicate video id: {video_id!r}")
        self.video_id = video_id


# --- lookups ---

class MissingEmbedding(PromptBankError):
    def __init__(self, key: str):
        super().__init__(f"no embedding for key: {key!r}")
        self.key = key


class UnknownCaption(PromptBankError):
    def __init__(self, caption_id: str):
        super().__init__(f"unknown caption id: {caption_id!r}")
        self.caption_id = caption_id


class UnknownVideo(PromptBankError):
    def __init__(self, video_id: str):
        super().__init__(f"unknown video id: {video_id!r}")
        self.video_id = video_id


# --- taxonomy and statistics ---

class UncategorizedPhrase(PromptBankError):
    def __init__(self, phrase: str):
        super().__init__(f"bank phrase has no category: {phrase!r}")
        self.phrase = phrase


class AllCategoriesEmpty(PromptBankError):
    """Every category has a zero count; no base category exists."""


class StatsModeMismatch(PromptBankError):
    def __init__(self, expected: str, got: str):
        super().__init__(f"stats were computed in {got!r} mode, need {expected!r}")
        self.expected = expected
        self.got = got


# --- retrieval ---

class DimensionMismatch(PromptBankError):
    def __init__(self, left: int, right: int):
        super().__init__(f"embedding dimensions differ: {left} vs {right}")
        self.left = left
        self.right = right


class EmptyBank(PromptBankError):
    """Retrieval over an empty memory bank."""


class EmptyInput(PromptBankError):
    """Operation requires a non-empty input list."""


# --- metrics ---

class LengthMismatch(PromptBankError):
    """Candidate and reference lists have different lengths (or are empty)."""


class MissingId(PromptBankError):
    def __init__(self, item_id: str):
        super().__init__(f"prediction/reference id mismatch: {item_id!r}")
        self.item_id = item_id


class TooFewSentences(PromptBankError):
    """Self-BLEU needs at least two sentences."""


class IoFailure(PromptBankError):
    """Output directory or file could not be written."""
