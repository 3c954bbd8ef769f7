"""Command-line surface: score / eval / train-toy / compare.

Exit codes: 0 success, 1 validation error, 2 I/O error. Every command
writes a run manifest (<out>.manifest.json) before its outputs are
finalized, and all outputs go through write-to-temp plus atomic rename, so
a failed run never leaves partial files. Re-running a command on identical
inputs (and --seed) reproduces the primary outputs byte for byte; only the
manifest differs, because it carries the wall clock.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bundles import build_sample_evals, load_bundle, load_rollout_dump, write_manifest
from .errors import DpadError, InputFormatError
from .evaluate import build_report, compare, render_table, token_stats
from .fileio import atomic_write_text, dump_json, write_jsonl
from .rewards import RewardConfig, score_batch
from .toy import ToyEnvironment, ToyTrainConfig, make_discrimination_suite, train

ROLE_REQUIREMENTS = {
    "binary": ("caption", "roi", "aoi"),
    "difference": ("caption", "roi", "aoi"),
    "scaled": ("caption", "roi", "aoi"),
    "off": (),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors, exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputFormatError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e


def cmd_score(args) -> int:
    config = RewardConfig.from_dict(_load_json(args.config)) if args.config else RewardConfig()
    if args.variant:
        config = RewardConfig.from_dict({**config.to_dict(), "dpad_variant": args.variant})
    bundle = load_bundle(args.bundle, required_roles=ROLE_REQUIREMENTS[config.dpad_variant])

    out = Path(args.out)
    summary_path = Path(str(out) + ".summary.json")
    inputs = dict(bundle.input_paths)
    inputs["bundle"] = str(bundle.bundle_path)
    write_manifest(out, "score", config.to_dict(), inputs, [out, summary_path])

    result = score_batch(bundle.rollouts, bundle.gt_localizations(), bundle.embeddings, config)
    write_jsonl(out, (b.to_dict() for b in result.breakdowns))
    summary = result.summary()
    summary["errors"] = [{"sample_id": sid, "error": msg} for sid, msg in result.errors]
    if bundle.missing_roles:
        summary["missing_embedding_roles"] = bundle.missing_roles
    atomic_write_text(summary_path, dump_json(summary) + "\n")
    print(f"scored {len(result.breakdowns)} rollouts ({len(result.errors)} errors) -> {out}")
    return 0


def cmd_eval(args) -> int:
    if not args.bundle and not args.pred:
        raise InputFormatError("eval needs --bundle or --pred")
    out = Path(args.out)
    axes = tuple(args.strata_axis) if args.strata_axis else ()

    if args.bundle:
        bundle = load_bundle(args.bundle)
        inputs = dict(bundle.input_paths)
        inputs["bundle"] = str(bundle.bundle_path)
        samples = build_sample_evals(bundle)
        doc = build_report(samples, strata_axes=axes).to_dict()
        doc_b = None
        if args.pred_b:
            inputs["pred_b"] = str(Path(args.pred_b))
            alt = load_bundle(args.bundle)
            alt.rollouts = load_rollout_dump(args.pred_b)
            missing = sorted({r.sample_id for r in alt.rollouts} - set(alt.ground_truth))
            if missing:
                from .errors import CrossRefError

                raise CrossRefError("second dump ids missing from ground truth", missing)
            samples_b = build_sample_evals(alt)
            doc_b = build_report(samples_b, strata_axes=axes).to_dict()
            doc = {
                "a": doc,
                "b": doc_b,
                "deltas": compare(doc, doc_b),
                "tokens": token_stats(
                    [s.token_count for s in samples], [s.token_count for s in samples_b]
                ).__dict__,
            }
        outputs = [out]
        csv_path = Path(args.emit_csv) if args.emit_csv else None
        if csv_path:
            outputs.append(csv_path)
        write_manifest(out, "eval", {"strata_axes": list(axes)}, inputs, outputs)
        atomic_write_text(out, dump_json(doc) + "\n")
        if csv_path:
            _write_sample_csv(csv_path, samples)
        if doc_b is None:
            print(render_table(doc))
        else:
            print(render_table(doc["a"], doc["b"]))
            print(f"\ntoken reduction: {doc['tokens']['reduction_pct']!r}%")
        return 0

    # token-statistics-only mode over raw dumps
    dump_a = load_rollout_dump(args.pred)
    counts_a = [r.effective_token_count() for r in dump_a]
    inputs = {"pred": str(Path(args.pred))}
    if args.pred_b:
        inputs["pred_b"] = str(Path(args.pred_b))
        counts_b = [r.effective_token_count() for r in load_rollout_dump(args.pred_b)]
        stats = token_stats(counts_a, counts_b)
    else:
        stats = token_stats(counts_a)
    write_manifest(out, "eval", {"mode": "tokens"}, inputs, [out])
    atomic_write_text(out, dump_json(stats.__dict__) + "\n")
    print(dump_json(stats.__dict__))
    return 0


def _write_sample_csv(path: Path, samples) -> None:
    cols = [
        "sample_id", "iou", "iou_source", "s1", "s2", "snr",
        "ts1", "ts2", "tsnr", "token_count", "query_type", "difficulty",
    ]

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(cols)]
    for s in samples:
        row = s.to_row()
        lines.append(",".join(cell(row[c]) for c in cols))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_train_toy(args) -> int:
    doc = _load_json(args.config)
    cfg = ToyTrainConfig.from_dict(doc)
    if args.seed is not None:
        cfg = ToyTrainConfig.from_dict({**doc, "seed": args.seed})
    inputs = {"config": str(Path(args.config))}
    if doc.get("scenes_file"):
        scenes_path = (Path(args.config).parent / doc["scenes_file"]).resolve()
        env = ToyEnvironment.from_dict(_load_json(scenes_path))
        inputs["scenes"] = str(scenes_path)
    else:
        gen = doc.get("scenes_spec") or {}
        env = make_discrimination_suite(
            n_scenes=gen.get("n_scenes", 20),
            n_distractors=gen.get("n_distractors", 4),
            dim=gen.get("dim", 16),
            noise_sigma=gen.get("noise_sigma", 0.0),
            seed=gen.get("seed", cfg.seed),
            ambiguous=gen.get("ambiguous", True),
        )
    out = Path(args.out)
    write_manifest(out, "train-toy", {**doc, "seed": cfg.seed}, inputs, [out])
    trace = train(env, cfg)
    atomic_write_text(out, trace.to_csv_text())
    last = trace.rows[-1]
    print(
        f"trained {cfg.steps} steps (variant={cfg.variant}, seed={cfg.seed}): "
        f"mean_reward={last.mean_reward:.4f} accuracy={last.accuracy:.4f} -> {out}"
    )
    return 0


def cmd_compare(args) -> int:
    doc_a = _load_json(args.report_a)
    doc_b = _load_json(args.report_b)
    deltas = compare(doc_a, doc_b)
    out = Path(args.out)
    write_manifest(
        out,
        "compare",
        {},
        {"report_a": str(Path(args.report_a)), "report_b": str(Path(args.report_b))},
        [out],
    )
    atomic_write_text(out, dump_json(deltas) + "\n")
    print(render_table(doc_a, doc_b))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a rollout dump into reward breakdowns")
    p.add_argument("--bundle", required=True)
    p.add_argument("--config", help="reward config JSON")
    p.add_argument("--variant", choices=["binary", "difference", "scaled", "off"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute dataset metrics / comparisons")
    p.add_argument("--bundle")
    p.add_argument("--pred", help="rollout dump (token-stats mode without --bundle)")
    p.add_argument("--pred-b", help="second rollout dump for comparison")
    p.add_argument("--strata-axis", action="append", choices=["query_type", "difficulty"])
    p.add_argument("--emit-csv", help="write flattened per-sample rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-toy", help="run the synthetic policy-optimization loop")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("compare", help="signed deltas between two report documents")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 1
    except DpadError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
