"""Compose format, geometric, and discriminative rewards into the final scalar.

The default configuration reproduces the unweighted sum
R_final = R_format + R_geo + R_dpad; weights, the discriminative variant,
and the optional linear length penalty are configuration on top of it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DpadError, MissingGroundTruth, RolloutParseError
from .geometry import DEFAULT_TAU_BOX, DEFAULT_TAU_PT, GeoBreakdown, Localization, geo_reward
from .rollout import FormatChecks, RawRollout, format_checks, format_reward, parse_rollout
from .semantics import DiscriminativeScores, discriminative_scores, variant_reward

DPAD_VARIANTS = ("binary", "difference", "scaled", "off")


@dataclass(frozen=True)
class RewardConfig:
    lambda_format: float = 1.0
    lambda_geo: float = 1.0
    lambda_dpad: float = 1.0
    dpad_variant: str = "binary"
    format_mode: str = "sum"
    # Non-paper comparison baseline; None disables the term entirely.
    length_penalty_alpha: float | None = None
    tau_box: float = DEFAULT_TAU_BOX
    tau_pt: float = DEFAULT_TAU_PT
    # Zero out geo/dpad whenever any format check fails (configurable choice).
    zero_on_format_failure: bool = True

    def __post_init__(self):
        weights = (self.lambda_format, self.lambda_geo, self.lambda_dpad)
        if any(not np.isfinite(w) or w < 0 for w in weights):
            raise ValueError(f"weights must be finite and nonnegative, got {weights}")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one reward weight must be positive")
        if self.dpad_variant not in DPAD_VARIANTS:
            raise ValueError(f"dpad_variant must be one of {DPAD_VARIANTS}")
        if self.length_penalty_alpha is not None and self.length_penalty_alpha < 0:
            raise ValueError("length_penalty_alpha must be nonnegative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RewardConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - {f for f in known}
        if unknown:
            raise ValueError(f"unknown reward config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "lambda_format": self.lambda_format,
            "lambda_geo": self.lambda_geo,
            "lambda_dpad": self.lambda_dpad,
            "dpad_variant": self.dpad_variant,
            "format_mode": self.format_mode,
            "length_penalty_alpha": self.length_penalty_alpha,
            "tau_box": self.tau_box,
            "tau_pt": self.tau_pt,
            "zero_on_format_failure": self.zero_on_format_failure,
        }


def length_penalty_term(token_count: int, alpha: float) -> float:
    """Linear penalty alpha * token_count, subtracted from the final reward."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return alpha * token_count


@dataclass(frozen=True)
class RewardBreakdown:
    sample_id: str
    checks: FormatChecks
    format_score: float
    geo: GeoBreakdown | None
    geo_score: float
    dpad: DiscriminativeScores | None
    dpad_score: float
    length_penalty: float
    token_count: int
    r_final: float
    parse_error: str | None = None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "format": {
                "tags_ok": self.checks.tags_ok,
                "json_ok": self.checks.json_ok,
                "caption_ok": self.checks.caption_ok,
                "score": self.format_score,
            },
            "geo": None
            if self.geo is None
            else {
                "iou": self.geo.iou,
                "iou_reward": self.geo.iou_reward,
                "l1_box_reward": self.geo.l1_box_reward,
                "l1_points_reward": self.geo.l1_points_reward,
                "score": self.geo_score,
            },
            "dpad": None
            if self.dpad is None
            else {
                "s1": self.dpad.s1,
                "s2": self.dpad.s2,
                "delta": self.dpad.delta,
                "r_dpad": self.dpad.r_dpad,
                "score": self.dpad_score,
            },
            "length_penalty": self.length_penalty,
            "token_count": self.token_count,
            "parse_error": self.parse_error,
            "r_final": self.r_final,
        }


def score_rollout(
    raw: RawRollout,
    gt: Localization,
    embeddings,
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Score one rollout; parse failures keep format credit and zero the rest.

    `embeddings` is anything with require(sample_id, role) -> EmbeddingRecord,
    typically an EmbeddingStore. It is only consulted when the variant needs it.
    """
    checks = format_checks(raw)
    fmt = format_reward(checks, cfg.format_mode)

    parse_error = None
    rollout = None
    try:
        rollout = parse_rollout(raw)
    except RolloutParseError as e:
        parse_error = f"{type(e).__name__}: {e}"

    gate_open = rollout is not None and (
        all(checks.as_tuple()) or not cfg.zero_on_format_failure
    )

    geo = None
    geo_score = 0.0
    if gate_open:
        geo = geo_reward(rollout.answer, gt, cfg.tau_box, cfg.tau_pt)
        geo_score = geo.score

    dpad = None
    dpad_score = 0.0
    if gate_open and cfg.dpad_variant != "off":
        dpad = discriminative_scores(
            embeddings.require(raw.sample_id, "caption"),
            embeddings.require(raw.sample_id, "roi"),
            embeddings.require(raw.sample_id, "aoi"),
        )
        dpad_score = variant_reward(dpad, cfg.dpad_variant)

    token_count = raw.effective_token_count()
    penalty = 0.0
    if cfg.length_penalty_alpha is not None:
        penalty = length_penalty_term(token_count, cfg.length_penalty_alpha)

    r_final = (
        cfg.lambda_format * fmt
        + cfg.lambda_geo * geo_score
        + cfg.lambda_dpad * dpad_score
        - penalty
    )
    return RewardBreakdown(
        sample_id=raw.sample_id,
        checks=checks,
        format_score=fmt,
        geo=geo,
        geo_score=geo_score,
        dpad=dpad,
        dpad_score=dpad_score,
        length_penalty=penalty,
        token_count=token_count,
        r_final=r_final,
        parse_error=parse_error,
    )


@dataclass
class BatchResult:
    breakdowns: list[RewardBreakdown]
    errors: list[tuple[str, str]] = field(default_factory=list)

    def summary(self) -> dict:
        def stats(values) -> dict:
            arr = np.asarray(values, dtype=np.float64)
            if arr.size == 0:
                return {"mean": None, "std": None}
            return {"mean": float(arr.mean()), "std": float(arr.std())}

        return {
            "n_scored": len(self.breakdowns),
            "n_errors": len(self.errors),
            "format_score": stats([b.format_score for b in self.breakdowns]),
            "geo_score": stats([b.geo_score for b in self.breakdowns]),
            "dpad_score": stats([b.dpad_score for b in self.breakdowns]),
            "r_final": stats([b.r_final for b in self.breakdowns]),
        }


def configured_threads() -> int:
    value = os.environ.get("DPAD_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def score_batch(
    dump: list[RawRollout],
    gt_set: Mapping[str, Localization],
    embeddings,
    cfg: RewardConfig,
    threads: int | None = None,
) -> BatchResult:
    """Score a dump in order; per-record failures are collected, not fatal."""
    ids = [raw.sample_id for raw in dump]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample_ids in dump")

    def one(raw: RawRollout):
        gt = gt_set.get(raw.sample_id)
        if gt is None:
            raise MissingGroundTruth(raw.sample_id)
        return score_rollout(raw, gt, embeddings, cfg)

    def guarded(raw: RawRollout):
        try:
            return one(raw)
        except DpadError as e:
            return (raw.sample_id, f"{type(e).__name__}: {e}")

    threads = configured_threads() if threads is None else max(1, threads)
    if threads > 1 and len(dump) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(guarded, dump))
    else:
        outcomes = [guarded(raw) for raw in dump]

    result = BatchResult(breakdowns=[])
    for outcome in outcomes:
        if isinstance(outcome, RewardBreakdown):
            result.breakdowns.append(outcome)
        else:
            result.errors.append(outcome)
    return result
