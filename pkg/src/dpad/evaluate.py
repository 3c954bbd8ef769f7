"""Dataset-level metrics over rollout dumps: gIoU, cIoU, SNR, TSNR, token stats.

gIoU is the mean of per-sample IoUs (instance-weighted); cIoU is the ratio
of summed intersections to summed unions (pixel-weighted). SNR-style
ratios are aggregated per sample and averaged; the ratio-of-means variant
is also emitted so the aggregation choice stays inspectable. Similarities
are stored in natural cosine units and multiplied by 100 only in the
rendered text table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NonPositiveDenominator, SchemaMismatch
from .geometry import BBox, MaskRLE, mask_intersection_union

STRATA_AXES = ("query_type", "difficulty")
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SampleEval:
    sample_id: str
    iou: float
    inter: float
    union: float
    iou_source: str  # "mask", "bbox" (fallback), or "none" (unparsed, counts as miss)
    token_count: int
    s1: float | None = None
    s2: float | None = None
    ts1: float | None = None
    ts2: float | None = None
    query_type: str | None = None
    difficulty: str | None = None

    @property
    def snr(self) -> float | None:
        if self.s1 is None or self.s2 is None or self.s2 <= 0:
            return None
        return self.s1 / self.s2

    @property
    def tsnr(self) -> float | None:
        if self.ts1 is None or self.ts2 is None or self.ts2 <= 0:
            return None
        return self.ts1 / self.ts2

    def stratum(self, axis: str) -> str:
        if axis not in STRATA_AXES:
            raise ValueError(f"unknown stratification axis {axis!r}")
        value = self.query_type if axis == "query_type" else self.difficulty
        return value if value else UNLABELED

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "iou": self.iou,
            "iou_source": self.iou_source,
            "s1": self.s1,
            "s2": self.s2,
            "snr": self.snr,
            "ts1": self.ts1,
            "ts2": self.ts2,
            "tsnr": self.tsnr,
            "token_count": self.token_count,
            "query_type": self.query_type,
            "difficulty": self.difficulty,
        }


def giou(ious) -> float:
    """Arithmetic mean of per-sample IoUs."""
    values = list(ious)
    if not values:
        raise EmptyInput("giou needs at least one sample")
    return float(np.mean(values))


def ciou(pairs) -> float:
    """Sum of intersections over sum of unions across mask pairs."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("ciou needs at least one mask pair")
    total_inter = 0
    total_union = 0
    for pred, gt in pairs:
        inter, union = mask_intersection_union(pred, gt)
        total_inter += inter
        total_union += union
    if total_union == 0:
        return 1.0
    return total_inter / total_union


def bbox_intersection_union(pred: BBox, gt: BBox) -> tuple[float, float]:
    """Continuous-area counterpart used when a sample has no masks."""
    ix = min(pred.x2, gt.x2) - max(pred.x1, gt.x1)
    iy = min(pred.y2, gt.y2) - max(pred.y1, gt.y1)
    inter = ix * iy if (ix > 0 and iy > 0) else 0.0
    return inter, pred.area + gt.area - inter


@dataclass(frozen=True)
class SnrStats:
    mean_s1: float
    mean_s2: float
    mean_snr: float          # primary: per-sample ratios averaged
    snr_ratio_of_means: float  # secondary mode, emitted for inspection
    n: int


def snr_stats(samples: list[SampleEval], kind: str = "caption") -> SnrStats:
    """Aggregate S1/S2 (kind="caption") or TS1/TS2 (kind="think")."""
    pick = (
        (lambda s: (s.s1, s.s2)) if kind == "caption" else (lambda s: (s.ts1, s.ts2))
    )
    scored = [(s.sample_id, *pick(s)) for s in samples if pick(s)[0] is not None]
    if not scored:
        raise EmptyInput(f"no samples carry {kind} similarity scores")
    for sample_id, _, s2 in scored:
        if s2 is None or s2 <= 0:
            raise NonPositiveDenominator(sample_id, 0.0 if s2 is None else s2)
    s1 = np.array([row[1] for row in scored])
    s2 = np.array([row[2] for row in scored])
    return SnrStats(
        mean_s1=float(s1.mean()),
        mean_s2=float(s2.mean()),
        mean_snr=float((s1 / s2).mean()),
        snr_ratio_of_means=float(s1.mean() / s2.mean()),
        n=len(scored),
    )


@dataclass(frozen=True)
class TokenStats:
    mean_a: float
    std_a: float
    n_a: int
    mean_b: float | None = None
    std_b: float | None = None
    n_b: int | None = None
    reduction_pct: float | None = None


def token_stats(counts_a, counts_b=None) -> TokenStats:
    """Token-count means/stds; with a second dump, the percentage reduction.

    reduction% = (mean_a - mean_b) / mean_a * 100.
    """
    a = np.asarray(list(counts_a), dtype=np.float64)
    if a.size == 0:
        raise EmptyInput("token_stats needs a nonempty dump")
    stats = {"mean_a": float(a.mean()), "std_a": float(a.std()), "n_a": int(a.size)}
    if counts_b is None:
        return TokenStats(**stats)
    b = np.asarray(list(counts_b), dtype=np.float64)
    if b.size == 0:
        raise EmptyInput("second dump is empty")
    return TokenStats(
        **stats,
        mean_b=float(b.mean()),
        std_b=float(b.std()),
        n_b=int(b.size),
        reduction_pct=float((a.mean() - b.mean()) / a.mean() * 100.0),
    )


@dataclass
class EvalReport:
    n: int
    giou: float
    ciou: float
    n_bbox_fallback: int
    n_unparsed: int
    mean_tokens: float
    std_tokens: float
    caption_snr: SnrStats | None = None
    think_snr: SnrStats | None = None
    strata: dict = field(default_factory=dict)  # axis -> stratum -> EvalReport

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "giou": self.giou,
            "ciou": self.ciou,
            "n_bbox_fallback": self.n_bbox_fallback,
            "n_unparsed": self.n_unparsed,
            "mean_tokens": self.mean_tokens,
            "std_tokens": self.std_tokens,
            "mean_s1": None if self.caption_snr is None else self.caption_snr.mean_s1,
            "mean_s2": None if self.caption_snr is None else self.caption_snr.mean_s2,
            "mean_snr": None if self.caption_snr is None else self.caption_snr.mean_snr,
            "snr_ratio_of_means": None
            if self.caption_snr is None
            else self.caption_snr.snr_ratio_of_means,
            "mean_ts1": None if self.think_snr is None else self.think_snr.mean_s1,
            "mean_ts2": None if self.think_snr is None else self.think_snr.mean_s2,
            "mean_tsnr": None if self.think_snr is None else self.think_snr.mean_snr,
            "tsnr_ratio_of_means": None
            if self.think_snr is None
            else self.think_snr.snr_ratio_of_means,
        }
        if self.strata:
            doc["strata"] = {
                axis: {name: sub.to_dict() for name, sub in buckets.items()}
                for axis, buckets in self.strata.items()
            }
        return doc


def build_report(samples: list[SampleEval], strata_axes: tuple[str, ...] = ()) -> EvalReport:
    if not samples:
        raise EmptyInput("cannot build a report from zero samples")
    inters = np.array([s.inter for s in samples], dtype=np.float64)
    unions = np.array([s.union for s in samples], dtype=np.float64)
    tokens = np.array([s.token_count for s in samples], dtype=np.float64)
    total_union = unions.sum()

    def maybe_snr(kind: str) -> SnrStats | None:
        try:
            return snr_stats(samples, kind=kind)
        except EmptyInput:
            return None

    report = EvalReport(
        n=len(samples),
        giou=giou([s.iou for s in samples]),
        ciou=1.0 if total_union == 0 else float(inters.sum() / total_union),
        n_bbox_fallback=sum(1 for s in samples if s.iou_source == "bbox"),
        n_unparsed=sum(1 for s in samples if s.iou_source == "none"),
        mean_tokens=float(tokens.mean()),
        std_tokens=float(tokens.std()),
        caption_snr=maybe_snr("caption"),
        think_snr=maybe_snr("think"),
    )
    for axis in strata_axes:
        report.strata[axis] = stratified_report(samples, axis)
    return report


def stratified_report(samples: list[SampleEval], axis: str) -> dict[str, EvalReport]:
    """Sub-reports keyed by stratum; empty strata never appear."""
    buckets: dict[str, list[SampleEval]] = {}
    for s in samples:
        buckets.setdefault(s.stratum(axis), []).append(s)
    return {name: build_report(members) for name, members in sorted(buckets.items())}


def _flatten(doc: dict, prefix: str = "") -> dict[str, float]:
    flat = {}
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=path + "."))
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            flat[path] = float(value)
    return flat


def compare(report_a: dict, report_b: dict) -> dict[str, float]:
    """Signed per-metric deltas (a minus b) over two report documents."""
    flat_a = _flatten(report_a)
    flat_b = _flatten(report_b)
    if set(flat_a) != set(flat_b):
        only_a = sorted(set(flat_a) - set(flat_b))
        only_b = sorted(set(flat_b) - set(flat_a))
        raise SchemaMismatch(f"metric sets differ (only in a: {only_a}, only in b: {only_b})")
    return {key: flat_a[key] - flat_b[key] for key in sorted(flat_a)}


_TABLE_ROWS = (
    ("n", "n", 1.0),
    ("gIoU", "giou", 1.0),
    ("cIoU", "ciou", 1.0),
    ("S1 (x100)", "mean_s1", 100.0),
    ("S2 (x100)", "mean_s2", 100.0),
    ("SNR", "mean_snr", 1.0),
    ("TS1 (x100)", "mean_ts1", 100.0),
    ("TS2 (x100)", "mean_ts2", 100.0),
    ("TSNR", "mean_tsnr", 1.0),
    ("Tokens mean", "mean_tokens", 1.0),
    ("Tokens std", "std_tokens", 1.0),
)


def render_table(doc: dict, doc_b: dict | None = None, title: str = "overall") -> str:
    """Aligned plain-text table; similarities shown on the x100 display scale."""

    def fmt(value, scale) -> str:
        if value is None:
            return "-"
        if isinstance(value, int) and scale == 1.0:
            return str(value)
        return f"{value * scale:.4f}"

    header = ["metric", "value"] if doc_b is None else ["metric", "a", "b", "delta(a-b)"]
    rows = [header]
    for label, key, scale in _TABLE_ROWS:
        va = doc.get(key)
        if doc_b is None:
            rows.append([label, fmt(va, scale)])
        else:
            vb = doc_b.get(key)
            delta = None if va is None or vb is None else va - vb
            rows.append([label, fmt(va, scale), fmt(vb, scale), fmt(delta, scale)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [f"== {title} =="]
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)))
    for axis, buckets in doc.get("strata", {}).items():
        for name, sub in buckets.items():
            sub_b = None
            if doc_b is not None:
                sub_b = doc_b.get("strata", {}).get(axis, {}).get(name)
            lines.append("")
            lines.append(render_table(sub, sub_b, title=f"{axis}: {name}"))
    return "\n".join(lines)
