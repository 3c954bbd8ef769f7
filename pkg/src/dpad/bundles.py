"""Dataset loading and cross-referencing for the command-line workflows.

File formats:
  rollout dump      JSONL {"sample_id", "text", "token_count"?}
  ground truth      JSONL {"sample_id", "gt_bbox":[4], "gt_p1":[2], "gt_p2":[2],
                           "gt_mask": {"h","w","counts"}?, "pred_mask": {...}?,
                           "strata": {"query_type"?, "difficulty"?}?}
  strata overrides  JSONL {"sample_id", "query_type"?, "difficulty"?}
  bundle            JSON  {"rollouts", "ground_truth", "embeddings"?, "strata"?},
                    paths resolved relative to the bundle file

The strata file is separate from the ground truth so labels can be swapped
without touching masks.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import CrossRefError, InputFormatError, RolloutParseError
from .evaluate import SampleEval, bbox_intersection_union
from .fileio import atomic_write_text, dump_json, read_jsonl, sha256_file
from .geometry import BBox, KeyPoint, Localization, MalformedRLE, MaskRLE, mask_intersection_union
from .rollout import RawRollout, parse_rollout
from .store import EmbeddingStore

QUERY_TYPES = ("Attribute", "Relation", "Logic")
DIFFICULTIES = ("Easy", "Medium", "Hard")


@dataclass(frozen=True)
class GroundTruthRecord:
    sample_id: str
    loc: Localization
    gt_mask: MaskRLE | None = None
    pred_mask: MaskRLE | None = None
    query_type: str | None = None
    difficulty: str | None = None


def load_rollout_dump(path) -> list[RawRollout]:
    rollouts = []
    seen = set()
    for lineno, obj in read_jsonl(path):
        try:
            raw = RawRollout(
                sample_id=obj["sample_id"],
                text=obj["text"],
                token_count=obj.get("token_count"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputFormatError(f"bad rollout record: {e}", path=str(path), line=lineno) from e
        if raw.sample_id in seen:
            raise InputFormatError(
                f"duplicate sample_id {raw.sample_id!r}", path=str(path), line=lineno
            )
        seen.add(raw.sample_id)
        rollouts.append(raw)
    return rollouts


def _strata_fields(obj: dict, path: str, lineno: int) -> tuple[str | None, str | None]:
    qt = obj.get("query_type")
    dif = obj.get("difficulty")
    if qt is not None and qt not in QUERY_TYPES:
        raise InputFormatError(f"unknown query_type {qt!r}", path=path, line=lineno)
    if dif is not None and dif not in DIFFICULTIES:
        raise InputFormatError(f"unknown difficulty {dif!r}", path=path, line=lineno)
    return qt, dif


def load_ground_truth(path) -> dict[str, GroundTruthRecord]:
    records: dict[str, GroundTruthRecord] = {}
    for lineno, obj in read_jsonl(path):
        try:
            sample_id = obj["sample_id"]
            loc = Localization(
                bbox=BBox(*obj["gt_bbox"]),
                p1=KeyPoint(*obj["gt_p1"]),
                p2=KeyPoint(*obj["gt_p2"]),
            )
            gt_mask = MaskRLE.from_dict(obj["gt_mask"]) if obj.get("gt_mask") else None
            pred_mask = MaskRLE.from_dict(obj["pred_mask"]) if obj.get("pred_mask") else None
            qt, dif = _strata_fields(obj.get("strata") or {}, str(path), lineno)
        except InputFormatError:
            raise
        except (KeyError, TypeError, ValueError, MalformedRLE) as e:
            raise InputFormatError(f"bad ground-truth record: {e}", path=str(path), line=lineno) from e
        if sample_id in records:
            raise InputFormatError(f"duplicate sample_id {sample_id!r}", path=str(path), line=lineno)
        records[sample_id] = GroundTruthRecord(
            sample_id=sample_id,
            loc=loc,
            gt_mask=gt_mask,
            pred_mask=pred_mask,
            query_type=qt,
            difficulty=dif,
        )
    return records


def load_strata(path) -> dict[str, tuple[str | None, str | None]]:
    labels = {}
    for lineno, obj in read_jsonl(path):
        try:
            sample_id = obj["sample_id"]
        except KeyError as e:
            raise InputFormatError(f"strata record missing {e}", path=str(path), line=lineno) from e
        labels[sample_id] = _strata_fields(obj, str(path), lineno)
    return labels


@dataclass
class DatasetBundle:
    bundle_path: Path
    rollouts: list[RawRollout]
    ground_truth: dict[str, GroundTruthRecord]
    embeddings: EmbeddingStore | None = None
    input_paths: dict = field(default_factory=dict)
    missing_roles: dict = field(default_factory=dict)  # sample_id -> sorted missing roles

    def gt_localizations(self) -> dict[str, Localization]:
        return {sid: rec.loc for sid, rec in self.ground_truth.items()}


def load_bundle(bundle_path, required_roles: tuple[str, ...] = ()) -> DatasetBundle:
    """Load and cross-reference all dataset files named by a bundle document.

    Every rollout id must resolve in the ground truth (CrossRefError
    otherwise). Embedding-role coverage is reported in missing_roles; it is
    not fatal here because batch scoring records per-sample errors.
    """
    bundle_path = Path(bundle_path)
    import json

    try:
        doc = json.loads(bundle_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputFormatError(f"invalid bundle JSON: {e.msg}", path=str(bundle_path), line=e.lineno) from e
    for key in ("rollouts", "ground_truth"):
        if key not in doc:
            raise InputFormatError(f"bundle missing {key!r}", path=str(bundle_path))

    def resolve(name):
        return (bundle_path.parent / doc[name]).resolve() if doc.get(name) else None

    paths = {name: resolve(name) for name in ("rollouts", "ground_truth", "embeddings", "strata")}
    rollouts = load_rollout_dump(paths["rollouts"])
    ground_truth = load_ground_truth(paths["ground_truth"])

    missing_ids = sorted(
        {raw.sample_id for raw in rollouts} - set(ground_truth)
    )
    if missing_ids:
        raise CrossRefError("rollout ids missing from ground truth", missing_ids)

    if paths["strata"]:
        for sample_id, (qt, dif) in load_strata(paths["strata"]).items():
            rec = ground_truth.get(sample_id)
            if rec is not None:
                ground_truth[sample_id] = GroundTruthRecord(
                    sample_id=rec.sample_id,
                    loc=rec.loc,
                    gt_mask=rec.gt_mask,
                    pred_mask=rec.pred_mask,
                    query_type=qt if qt is not None else rec.query_type,
                    difficulty=dif if dif is not None else rec.difficulty,
                )

    store = EmbeddingStore.load(paths["embeddings"]) if paths["embeddings"] else None

    missing_roles = {}
    if required_roles:
        for raw in rollouts:
            have = store.roles_for(raw.sample_id) if store is not None else set()
            missing = sorted(set(required_roles) - have)
            if missing:
                missing_roles[raw.sample_id] = missing

    return DatasetBundle(
        bundle_path=bundle_path,
        rollouts=rollouts,
        ground_truth=ground_truth,
        embeddings=store,
        input_paths={k: str(v) for k, v in paths.items() if v is not None},
        missing_roles=missing_roles,
    )


def build_sample_evals(bundle: DatasetBundle) -> list[SampleEval]:
    """Join rollouts, ground truth, and embeddings into per-sample eval rows.

    IoU comes from the mask pair when both masks are present; otherwise it
    falls back to the predicted box against the ground-truth box (flagged
    "bbox"). Unparseable rollouts without masks count as complete misses.
    """
    from .semantics import cosine

    samples = []
    store = bundle.embeddings
    for raw in bundle.rollouts:
        rec = bundle.ground_truth[raw.sample_id]
        pred_loc = None
        try:
            pred_loc = parse_rollout(raw).answer
        except RolloutParseError:
            pred_loc = None

        if rec.pred_mask is not None and rec.gt_mask is not None:
            inter, union = mask_intersection_union(rec.pred_mask, rec.gt_mask)
            iou = 1.0 if union == 0 else inter / union
            source = "mask"
        elif pred_loc is not None:
            inter, union = bbox_intersection_union(pred_loc.bbox, rec.loc.bbox)
            iou = 0.0 if union == 0 else inter / union
            source = "bbox"
        else:
            gt_area = rec.gt_mask.foreground_area() if rec.gt_mask else rec.loc.bbox.area
            inter, union, iou = 0.0, float(gt_area), 0.0
            source = "none"

        def sim_pair(text_role: str) -> tuple[float | None, float | None]:
            if store is None:
                return None, None
            text = store.get(raw.sample_id, text_role)
            roi = store.get(raw.sample_id, "roi")
            aoi = store.get(raw.sample_id, "aoi")
            if text is None or roi is None or aoi is None:
                return None, None
            return cosine(text.vector, roi.vector), cosine(text.vector, aoi.vector)

        s1, s2 = sim_pair("caption")
        ts1, ts2 = sim_pair("think")
        samples.append(
            SampleEval(
                sample_id=raw.sample_id,
                iou=float(iou),
                inter=float(inter),
                union=float(union),
                iou_source=source,
                token_count=raw.effective_token_count(),
                s1=s1,
                s2=s2,
                ts1=ts1,
                ts2=ts2,
                query_type=rec.query_type,
                difficulty=rec.difficulty,
            )
        )
    return samples


def write_manifest(out_path, command: str, config: dict, input_paths: dict, output_paths: list) -> Path:
    """Digest inputs and record the run; written before any output is finalized."""
    manifest = {
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in sorted(input_paths.items())
        },
        "tool_version": __version__,
        "wall_clock_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": [str(p) for p in output_paths],
    }
    path = Path(str(out_path) + ".manifest.json")
    atomic_write_text(path, dump_json(manifest) + "\n")
    return path
