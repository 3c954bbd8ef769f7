"""Bounding-box, key-point, and RLE mask arithmetic plus the geometric location reward.

Boxes use the [x1, y1, x2, y2] corner convention with a top-left origin.
Masks use uncompressed run-length encoding in column-major (Fortran) scan
order where the first run counts background pixels; this matches the
de-facto detection-dataset convention so external tooling can produce
compatible masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBox, InvalidThreshold, MalformedRLE, ShapeMismatch

DEFAULT_TAU_BOX = 10.0
DEFAULT_TAU_PT = 10.0


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBox(f"non-finite box coordinates {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBox(f"degenerate box {coords}: need x2 > x1 and y2 > y1")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class KeyPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidBox(f"non-finite key point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Localization:
    bbox: BBox
    p1: KeyPoint
    p2: KeyPoint


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_reward(pred: BBox, gt: BBox) -> float:
    """1.0 iff IoU strictly exceeds 0.5, else 0.0."""
    return 1.0 if bbox_iou(pred, gt) > 0.5 else 0.0


def l1_bbox_reward(pred: BBox, gt: BBox, tau_box: float = DEFAULT_TAU_BOX) -> float:
    """1.0 iff the mean absolute difference over the 4 coordinates is below tau_box."""
    if not (tau_box > 0):
        raise InvalidThreshold(f"tau_box must be positive, got {tau_box}")
    diff = (
        abs(pred.x1 - gt.x1)
        + abs(pred.y1 - gt.y1)
        + abs(pred.x2 - gt.x2)
        + abs(pred.y2 - gt.y2)
    ) / 4.0
    return 1.0 if diff < tau_box else 0.0


def l1_points_reward(
    pred: tuple[KeyPoint, KeyPoint],
    gt: tuple[KeyPoint, KeyPoint],
    tau_pt: float = DEFAULT_TAU_PT,
) -> float:
    """1.0 iff the mean absolute difference over both points' 4 scalars is below tau_pt."""
    if not (tau_pt > 0):
        raise InvalidThreshold(f"tau_pt must be positive, got {tau_pt}")
    (pa, pb), (ga, gb) = pred, gt
    diff = (abs(pa.x - ga.x) + abs(pa.y - ga.y) + abs(pb.x - gb.x) + abs(pb.y - gb.y)) / 4.0
    return 1.0 if diff < tau_pt else 0.0


@dataclass(frozen=True)
class GeoBreakdown:
    """The three binary sub-rewards and their sum."""

    iou: float
    iou_reward: float
    l1_box_reward: float
    l1_points_reward: float

    @property
    def score(self) -> float:
        return self.iou_reward + self.l1_box_reward + self.l1_points_reward


def geo_reward(
    pred: Localization,
    gt: Localization,
    tau_box: float = DEFAULT_TAU_BOX,
    tau_pt: float = DEFAULT_TAU_PT,
) -> GeoBreakdown:
    """Sum of the IoU, box-L1, and key-point-L1 binary sub-rewards (range [0, 3])."""
    return GeoBreakdown(
        iou=bbox_iou(pred.bbox, gt.bbox),
        iou_reward=iou_reward(pred.bbox, gt.bbox),
        l1_box_reward=l1_bbox_reward(pred.bbox, gt.bbox, tau_box),
        l1_points_reward=l1_points_reward((pred.p1, pred.p2), (gt.p1, gt.p2), tau_pt),
    )


class MaskRLE:
    """Binary mask in uncompressed run-length form.

    Runs alternate background/foreground starting with background, so
    counts[0] is the (possibly zero) number of leading background pixels
    in column-major pixel order.
    """

    __slots__ = ("height", "width", "counts")

    def __init__(self, height: int, width: int, counts: list[int]):
        if height <= 0 or width <= 0:
            raise MalformedRLE(f"mask dims must be positive, got {height}x{width}")
        counts = [int(c) for c in counts]
        if any(c < 0 for c in counts):
            raise MalformedRLE("negative run length")
        for prev, cur in zip(counts, counts[1:]):
            if prev == 0 and cur == 0:
                raise MalformedRLE("two consecutive zero-length runs")
        if sum(counts) != height * width:
            raise MalformedRLE(
                f"run lengths sum to {sum(counts)}, expected {height * width}"
            )
        self.height = height
        self.width = width
        self.counts = counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskRLE):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.counts == other.counts
        )

    def __repr__(self) -> str:
        return f"MaskRLE({self.height}x{self.width}, {len(self.counts)} runs)"

    def foreground_area(self) -> int:
        return sum(self.counts[1::2])

    def foreground_intervals(self) -> list[tuple[int, int]]:
        """Half-open [start, end) foreground spans in column-major pixel order."""
        spans = []
        pos = 0
        for i, c in enumerate(self.counts):
            if i % 2 == 1 and c > 0:
                spans.append((pos, pos + c))
            pos += c
        return spans

    def to_dict(self) -> dict:
        return {"h": self.height, "w": self.width, "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, d: dict) -> "MaskRLE":
        try:
            return cls(d["h"], d["w"], d["counts"])
        except KeyError as e:
            raise MalformedRLE(f"mask record missing key {e}") from e


def rle_encode(bitmap: np.ndarray) -> MaskRLE:
    """Encode a (h, w) binary bitmap; decode(encode(m)) == m."""
    bitmap = np.asarray(bitmap)
    if bitmap.ndim != 2 or bitmap.shape[0] == 0 or bitmap.shape[1] == 0:
        raise MalformedRLE(f"bitmap must be 2-D and non-empty, got shape {bitmap.shape}")
    h, w = bitmap.shape
    flat = bitmap.ravel(order="F").astype(bool)
    # run boundaries: indices where the value changes
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts = [0] + counts
    return MaskRLE(h, w, counts)


def rle_decode(mask: MaskRLE) -> np.ndarray:
    """Decode to a (h, w) boolean bitmap."""
    flat = np.zeros(mask.height * mask.width, dtype=bool)
    pos = 0
    for i, c in enumerate(mask.counts):
        if i % 2 == 1:
            flat[pos : pos + c] = True
        pos += c
    return flat.reshape((mask.height, mask.width), order="F")


def mask_iou(a: MaskRLE, b: MaskRLE) -> float:
    """IoU computed in the run-length domain (no bitmap decode).

    Both masks empty is defined as 1.0; empty vs non-empty is 0.0.
    """
    inter, union = mask_intersection_union(a, b)
    if union == 0:
        return 1.0
    return inter / union


def mask_intersection_union(a: MaskRLE, b: MaskRLE) -> tuple[int, int]:
    """Pixel counts of a∩b and a∪b, by sweeping foreground spans."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatch(
            f"mask shapes differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    sa = a.foreground_intervals()
    sb = b.foreground_intervals()
    inter = 0
    i = j = 0
    while i < len(sa) and j < len(sb):
        lo = max(sa[i][0], sb[j][0])
        hi = min(sa[i][1], sb[j][1])
        if hi > lo:
            inter += hi - lo
        if sa[i][1] <= sb[j][1]:
            i += 1
        else:
            j += 1
    area_a = a.foreground_area()
    area_b = b.foreground_area()
    return inter, area_a + area_b - inter
