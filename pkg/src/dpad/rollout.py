"""Parse structured policy outputs and score format compliance.

Grammar: exactly one <think>, <answer>, and <caption> block, in that order.
Text outside the blocks is ignored for parsing but counts toward the
whitespace-token fallback. Tag names are literal (no attributes or interior
whitespace); all offsets reported in errors are byte offsets into the
UTF-8 encoding of the input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import (
    MalformedValue,
    MissingKey,
    MissingTag,
    PayloadSyntaxError,
    TagOrderViolation,
)
from .geometry import BBox, InvalidBox, KeyPoint, Localization

TAG_NAMES = ("think", "answer", "caption")
_TAG_LITERALS = tuple(
    lit for name in TAG_NAMES for lit in (f"<{name}>", f"</{name}>")
)

REQUIRED_PAYLOAD_KEYS = ("bbox", "points_1", "points_2")
_KEY_ARITY = {"bbox": 4, "points_1": 2, "points_2": 2}


@dataclass(frozen=True)
class RawRollout:
    """One unparsed policy output; token_count is a model-tokenizer count if available."""

    sample_id: str
    text: str
    token_count: int | None = None

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        if len(self.text) == 0:
            raise ValueError("text must be non-empty")
        if self.token_count is not None and self.token_count < 0:
            raise ValueError("token_count must be nonnegative")

    def effective_token_count(self) -> int:
        # Whitespace word count is the documented fallback when no
        # tokenizer count is supplied with the dump.
        if self.token_count is not None:
            return self.token_count
        return len(self.text.split())


@dataclass(frozen=True)
class Rollout:
    sample_id: str
    think: str
    answer: Localization
    caption: str
    token_count: int

    def __post_init__(self):
        if self.token_count < 0:
            raise ValueError("token_count must be nonnegative")
        for field_name, value in (("think", self.think), ("caption", self.caption)):
            for lit in _TAG_LITERALS:
                if lit in value:
                    raise ValueError(f"{field_name} must not contain tag delimiter {lit!r}")


@dataclass(frozen=True)
class FormatChecks:
    """The three independent binary format checks."""

    tags_ok: bool
    json_ok: bool
    caption_ok: bool

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.tags_ok, self.json_ok, self.caption_ok)


def _scan_tags(data: bytes) -> dict[str, dict[str, list[int]]]:
    """Byte offsets of every open/close tag occurrence, per tag name."""
    found = {}
    for name in TAG_NAMES:
        open_lit = f"<{name}>".encode()
        close_lit = f"</{name}>".encode()
        found[name] = {
            "open": _find_all(data, open_lit),
            "close": _find_all(data, close_lit),
            "open_len": len(open_lit),
            "close_len": len(close_lit),
        }
    return found


def _find_all(data: bytes, needle: bytes) -> list[int]:
    out = []
    start = 0
    while True:
        idx = data.find(needle, start)
        if idx < 0:
            return out
        out.append(idx)
        start = idx + 1


def _first_block(data: bytes, tags: dict, name: str) -> tuple[int, int] | None:
    """Byte span [start, end) of the first well-nested block's inner text."""
    info = tags[name]
    for open_idx in info["open"]:
        payload_start = open_idx + info["open_len"]
        for close_idx in info["close"]:
            if close_idx >= payload_start:
                return payload_start, close_idx
    return None


def _check_tag_grammar(data: bytes, tags: dict) -> None:
    """Raise unless each tag occurs exactly once, well nested, in order."""
    spans = []
    for name in TAG_NAMES:
        info = tags[name]
        if not info["open"] or not info["close"]:
            raise MissingTag(name)
        if len(info["open"]) > 1 or len(info["close"]) > 1:
            extra = (info["open"] + info["close"])[1]
            raise TagOrderViolation(f"duplicated <{name}> tag", offset=extra)
        open_idx, close_idx = info["open"][0], info["close"][0]
        if close_idx < open_idx + info["open_len"]:
            raise TagOrderViolation(f"</{name}> precedes <{name}>", offset=close_idx)
        spans.append((name, open_idx, close_idx + info["close_len"]))
    for (prev_name, _, prev_end), (name, start, _) in zip(spans, spans[1:]):
        if start < prev_end:
            raise TagOrderViolation(
                f"<{name}> must follow </{prev_name}>", offset=start
            )


def _parse_payload(payload: str, base_offset: int) -> Localization:
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as e:
        pos = base_offset + len(payload[: e.pos].encode("utf-8"))
        raise PayloadSyntaxError(e.msg, offset=pos) from e
    if not isinstance(obj, dict):
        raise PayloadSyntaxError(
            f"expected a JSON object, got {type(obj).__name__}", offset=base_offset
        )
    for key in REQUIRED_PAYLOAD_KEYS:
        if key not in obj:
            raise MissingKey(key, offset=base_offset)
    values = {}
    for key, arity in _KEY_ARITY.items():
        val = obj[key]
        if (
            not isinstance(val, list)
            or len(val) != arity
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in val)
        ):
            raise MalformedValue(key, f"expected {arity} numbers", offset=base_offset)
        nums = [float(v) for v in val]
        if any(not math.isfinite(v) for v in nums):
            raise MalformedValue(key, "non-finite value", offset=base_offset)
        values[key] = nums
    try:
        return Localization(
            bbox=BBox(*values["bbox"]),
            p1=KeyPoint(*values["points_1"]),
            p2=KeyPoint(*values["points_2"]),
        )
    except InvalidBox as e:
        raise MalformedValue("bbox", str(e), offset=base_offset) from e


def parse_rollout(raw: RawRollout) -> Rollout:
    """Parse into a Rollout or raise a RolloutParseError subclass."""
    data = raw.text.encode("utf-8")
    tags = _scan_tags(data)
    _check_tag_grammar(data, tags)
    think_span = _first_block(data, tags, "think")
    answer_span = _first_block(data, tags, "answer")
    caption_span = _first_block(data, tags, "caption")
    assert think_span and answer_span and caption_span  # grammar check passed
    payload = data[answer_span[0] : answer_span[1]].decode("utf-8")
    answer = _parse_payload(payload, base_offset=answer_span[0])
    return Rollout(
        sample_id=raw.sample_id,
        think=data[think_span[0] : think_span[1]].decode("utf-8"),
        answer=answer,
        caption=data[caption_span[0] : caption_span[1]].decode("utf-8"),
        token_count=raw.effective_token_count(),
    )


def format_checks(raw: RawRollout) -> FormatChecks:
    """The three binary checks; never raises, failures land in the flags.

    Each flag is computed independently: json_ok and caption_ok locate
    their block even when the overall tag grammar fails.
    """
    data = raw.text.encode("utf-8")
    tags = _scan_tags(data)

    tags_ok = True
    try:
        _check_tag_grammar(data, tags)
    except (MissingTag, TagOrderViolation):
        tags_ok = False

    json_ok = False
    answer_span = _first_block(data, tags, "answer")
    if answer_span is not None:
        payload = data[answer_span[0] : answer_span[1]].decode("utf-8")
        try:
            _parse_payload(payload, base_offset=answer_span[0])
            json_ok = True
        except (PayloadSyntaxError, MissingKey, MalformedValue):
            json_ok = False

    caption_ok = False
    caption_span = _first_block(data, tags, "caption")
    if caption_span is not None:
        inner = data[caption_span[0] : caption_span[1]].decode("utf-8")
        caption_ok = inner.strip() != ""

    return FormatChecks(tags_ok=tags_ok, json_ok=json_ok, caption_ok=caption_ok)


def format_reward(checks: FormatChecks, mode: str = "sum") -> float:
    """Aggregate the binary checks.

    "sum" grades partial compliance in [0, 3] so group normalization sees
    graded advantages; "product" is the strict all-or-nothing alternative.
    """
    flags = checks.as_tuple()
    if mode == "sum":
        return float(sum(flags))
    if mode == "product":
        return 1.0 if all(flags) else 0.0
    raise ValueError(f"unknown format reward mode {mode!r}")


def render_rollout(rollout: Rollout) -> str:
    """Serialize back into the canonical tag layout; re-parsing is the identity."""
    loc = rollout.answer
    payload = json.dumps(
        {
            "bbox": [loc.bbox.x1, loc.bbox.y1, loc.bbox.x2, loc.bbox.y2],
            "points_1": [loc.p1.x, loc.p1.y],
            "points_2": [loc.p2.x, loc.p2.y],
        }
    )
    return (
        f"<think>{rollout.think}</think>"
        f"<answer>{payload}</answer>"
        f"<caption>{rollout.caption}</caption>"
    )
