"""Composite reward engineering and evaluation toolkit for
discriminative reasoning-segmentation rollouts."""

__version__ = "0.1.0"

from .errors import DpadError
from .geometry import (
    BBox,
    KeyPoint,
    Localization,
    MaskRLE,
    bbox_iou,
    geo_reward,
    iou_reward,
    l1_bbox_reward,
    l1_points_reward,
    mask_iou,
    rle_decode,
    rle_encode,
)
from .rollout import (
    FormatChecks,
    RawRollout,
    Rollout,
    format_checks,
    format_reward,
    parse_rollout,
    render_rollout,
)
from .semantics import (
    DiscriminativeScores,
    EmbeddingRecord,
    cosine,
    discriminative_scores,
    think_scores,
    variant_reward,
)
from .store import EmbeddingStore
from .rewards import (
    BatchResult,
    RewardBreakdown,
    RewardConfig,
    length_penalty_term,
    score_batch,
    score_rollout,
)
from .toy import (
    RolloutGroup,
    ToyEnvironment,
    ToyPolicy,
    ToyTrainConfig,
    group_advantages,
    make_discrimination_suite,
    policy_update,
    sample_group,
    train,
)
from .evaluate import (
    EvalReport,
    SampleEval,
    build_report,
    ciou,
    compare,
    giou,
    snr_stats,
    stratified_report,
    token_stats,
)

__all__ = [
    "__version__",
    "DpadError",
    "BBox",
    "KeyPoint",
    "Localization",
    "MaskRLE",
    "bbox_iou",
    "geo_reward",
    "iou_reward",
    "l1_bbox_reward",
    "l1_points_reward",
    "mask_iou",
    "rle_decode",
    "rle_encode",
    "FormatChecks",
    "RawRollout",
    "Rollout",
    "format_checks",
    "format_reward",
    "parse_rollout",
    "render_rollout",
    "DiscriminativeScores",
    "EmbeddingRecord",
    "cosine",
    "discriminative_scores",
    "think_scores",
    "variant_reward",
    "EmbeddingStore",
    "BatchResult",
    "RewardBreakdown",
    "RewardConfig",
    "length_penalty_term",
    "score_batch",
    "score_rollout",
    "RolloutGroup",
    "ToyEnvironment",
    "ToyPolicy",
    "ToyTrainConfig",
    "group_advantages",
    "make_discrimination_suite",
    "policy_update",
    "sample_group",
    "train",
    "EvalReport",
    "SampleEval",
    "build_report",
    "ciou",
    "compare",
    "giou",
    "snr_stats",
    "stratified_report",
    "token_stats",
]
