"""Embedding records, cosine similarity, and the discriminative perception scores.

The engine consumes pre-computed feature vectors; it never encodes text or
pixels itself. Cosine is the plain dot product over norms, with no
temperature or rescaling. Tables are conventionally displayed with
similarities multiplied by 100; everything here stays in natural units and
the report layer owns the display scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, RoleMismatch, ZeroNorm

ROLES = ("caption", "roi", "aoi", "think")

VARIANTS = ("binary", "difference", "scaled")


@dataclass(frozen=True)
class EmbeddingRecord:
    sample_id: str
    role: str
    vector: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise RoleMismatch(f"unknown role {self.role!r}, expected one of {ROLES}")
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise DimMismatch(f"vector must be 1-D and non-empty, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ZeroNorm(f"non-finite entries in embedding {self.sample_id}/{self.role}")
        if float(np.linalg.norm(vec)) == 0.0:
            raise ZeroNorm(f"zero-norm embedding {self.sample_id}/{self.role}")
        object.__setattr__(self, "vector", vec)

    @property
    def key(self) -> str:
        return f"{self.sample_id}/{self.role}"


def cosine(v_t: np.ndarray, v_i: np.ndarray) -> float:
    """dot(v_t, v_i) / (|v_t| |v_i|), in [-1, 1]."""
    v_t = np.asarray(v_t, dtype=np.float64)
    v_i = np.asarray(v_i, dtype=np.float64)
    if v_t.shape != v_i.shape:
        raise DimMismatch(f"vector dims differ: {v_t.shape} vs {v_i.shape}")
    nt = float(np.linalg.norm(v_t))
    ni = float(np.linalg.norm(v_i))
    if nt == 0.0 or ni == 0.0:
        raise ZeroNorm("cosine undefined for zero-norm vector")
    sim = float(np.dot(v_t, v_i) / (nt * ni))
    # guard rounding excursions just outside [-1, 1]
    return max(-1.0, min(1.0, sim))


@dataclass(frozen=True)
class DiscriminativeScores:
    """Caption-vs-ROI and caption-vs-AOI similarities with the derived signal.

    delta = max(0, s1 - s2); r_dpad = 1.0 exactly when delta > 0, so ties
    score 0 (strict, no epsilon band; near-ties resolve by raw float sign).
    """

    s1: float
    s2: float

    @property
    def delta(self) -> float:
        return max(0.0, self.s1 - self.s2)

    @property
    def r_dpad(self) -> float:
        return 1.0 if self.delta > 0.0 else 0.0


def discriminative_scores(
    cap: EmbeddingRecord, roi: EmbeddingRecord, aoi: EmbeddingRecord
) -> DiscriminativeScores:
    """S1 = cos(caption, ROI crop feature), S2 = cos(caption, full-image feature)."""
    _require_roles(cap, roi, aoi, roles=("caption", "roi", "aoi"))
    return DiscriminativeScores(
        s1=cosine(cap.vector, roi.vector),
        s2=cosine(cap.vector, aoi.vector),
    )


def think_scores(
    think_emb: EmbeddingRecord, roi: EmbeddingRecord, aoi: EmbeddingRecord
) -> tuple[float, float]:
    """(TS1, TS2): reasoning-chain similarities to ROI and AOI."""
    _require_roles(think_emb, roi, aoi, roles=("think", "roi", "aoi"))
    return (
        cosine(think_emb.vector, roi.vector),
        cosine(think_emb.vector, aoi.vector),
    )


def variant_reward(scores: DiscriminativeScores, variant: str) -> float:
    """Reward under the chosen formulation.

    binary     -> r_dpad
    difference -> s1 - s2 (may be negative)
    scaled     -> s1 * max(0, s1 - s2)
    """
    if variant == "binary":
        return scores.r_dpad
    if variant == "difference":
        return scores.s1 - scores.s2
    if variant == "scaled":
        return scores.s1 * scores.delta
    raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


def _require_roles(*records: EmbeddingRecord, roles: tuple[str, ...]) -> None:
    for rec, want in zip(records, roles):
        if rec.role != want:
            raise RoleMismatch(f"expected role {want!r}, got {rec.role!r} ({rec.key})")
    ids = {rec.sample_id for rec in records}
    if len(ids) != 1:
        raise RoleMismatch(f"records belong to different samples: {sorted(ids)}")
