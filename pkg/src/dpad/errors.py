"""Exception types shared across the toolkit.

Parser failures subclass RolloutParseError so batch scoring can catch the
whole family and fall back to format-only scoring.
"""

from __future__ import annotations


class DpadError(Exception):
    """Base class for all toolkit errors."""


# --- rollout parsing ---


class RolloutParseError(DpadError):
    """Structured parse failure; `offset` is a byte offset where known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class MissingTag(RolloutParseError):
    def __init__(self, which: str, offset: int | None = None):
        super().__init__(f"missing <{which}> block", offset)
        self.which = which


class TagOrderViolation(RolloutParseError):
    def __init__(self, message: str = "tags out of order or duplicated", offset: int | None = None):
        super().__init__(message, offset)


class PayloadSyntaxError(RolloutParseError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(f"answer payload is not valid JSON: {message}", offset)


class MissingKey(RolloutParseError):
    def __init__(self, which: str, offset: int | None = None):
        super().__init__(f"answer payload missing key '{which}'", offset)
        self.which = which


class MalformedValue(RolloutParseError):
    def __init__(self, which: str, message: str = "", offset: int | None = None):
        detail = f": {message}" if message else ""
        super().__init__(f"answer payload key '{which}' malformed{detail}", offset)
        self.which = which


# --- geometry ---


class InvalidBox(DpadError):
    pass


class InvalidThreshold(DpadError):
    pass


class ShapeMismatch(DpadError):
    pass


class MalformedRLE(DpadError):
    pass


# --- semantics / embedding store ---


class DimMismatch(DpadError):
    pass


class ZeroNorm(DpadError):
    pass


class RoleMismatch(DpadError):
    pass


class MagicMismatch(DpadError):
    pass


class StoreFormatError(DpadError):
    """Truncated or internally inconsistent embedding store file."""


class DuplicateKey(StoreFormatError):
    pass


# --- reward composition ---


class MissingGroundTruth(DpadError):
    def __init__(self, sample_id: str):
        super().__init__(f"no ground truth for sample '{sample_id}'")
        self.sample_id = sample_id


class MissingEmbedding(DpadError):
    def __init__(self, sample_id: str, role: str):
        super().__init__(f"no '{role}' embedding for sample '{sample_id}'")
        self.sample_id = sample_id
        self.role = role


# --- grpo engine ---


class GroupTooSmall(DpadError):
    pass


class NonFiniteGradient(DpadError):
    pass


# --- eval harness ---


class EmptyInput(DpadError):
    pass


class NonPositiveDenominator(DpadError):
    def __init__(self, sample_id: str, value: float):
        super().__init__(f"sample '{sample_id}' has non-positive denominator {value}")
        self.sample_id = sample_id
        self.value = value


class SchemaMismatch(DpadError):
    pass


# --- io / bundles ---


class InputFormatError(DpadError):
    """A data file failed to parse; carries path and line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class CrossRefError(DpadError):
    def __init__(self, message: str, missing: list[str]):
        super().__init__(f"{message}: {', '.join(missing[:10])}" + (" ..." if len(missing) > 10 else ""))
        self.missing = missing
