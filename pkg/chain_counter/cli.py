"""
Command-line interface: evaluate, dedup, partition, refine, synth and gradcheck.

Every run prints its fully resolved configuration (ini defaults, then the
--config file, then flags) as sorted JSON on stderr before doing any work.
"""

import argparse
import json
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .assignment import FocalParams
from .config import RunConfig, load_run_config
from .counters import make_counter
from .dataset_io import load_dataset, write_dataset
from .enums import Axis, CounterKind
from .exceptions import ChainCounterError, PreconditionError
from .geometry import ImageRecord
from .gradcheck import gradient_check, random_chain_instance
from .losses import ChainInstance, LossWeights
from .metrics import evaluate_dataset, format_report, report_to_dict
from .partition import PartitionConfig, two_pass
from .postprocess import DedupConfig, postprocess
from .refine import RefineConfig, RefineTrace, neighbor_ablation, refine
from .synth import CorruptionSpec, SceneSpec, corrupt, generate_scene, jittered_chain

logger = logging.getLogger(__name__)

LOG_DIR = "logs"
LOG_FILE = "chain_counter.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2
EXIT_GRADCHECK_FAILED = 3

# (section, key, flag) pairs a command cannot run without.
REQUIRED = {
    "dedup": [("dedup", "distance_threshold", "--distance-threshold")],
    "partition": [("partition", "gap_threshold", "--gap-threshold")],
}


def setup_logging(level: str = "INFO", log_file: bool = True) -> None:
    """Configure the root logger once per run: stderr plus an optional rotating file."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        os.makedirs(LOG_DIR, exist_ok=True)
        handlers.append(
            RotatingFileHandler(
                os.path.join(LOG_DIR, LOG_FILE),
                maxBytes=5 * 1024 * 1024,  # 5MB
                backupCount=3,
            )
        )
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input dataset (JSON lines)")
    common.add_argument("--output", help="output file")
    common.add_argument("--config", help="JSON file with per-command parameter overrides")
    common.add_argument(
        "--strict", action="store_true", help="reject unknown fields in datasets and config"
    )
    common.add_argument("--seed", type=int, help="seed for every random stream")
    common.add_argument("--n-jobs", type=int, dest="n_jobs", help="joblib workers (default 1)")
    common.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    common.add_argument("--no-log-file", action="store_true", help="log to stderr only")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="chain-counter", description="Chain-ordered handle counting toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="count and localization metrics")
    p.add_argument("--levels", type=int, nargs="+", help="GAME levels (default 1 2 3)")
    p.add_argument("--json-output", help="also write the report as JSON")

    p = sub.add_parser("dedup", parents=[common], help="confidence filter plus duplicate removal")
    p.add_argument("--distance-threshold", type=float, help="minimum gap along the chain (px)")
    p.add_argument("--sigma", type=float, help="confidence threshold (default 0.26)")

    p = sub.add_parser("partition", parents=[common], help="two-pass divide-and-conquer count")
    p.add_argument("--gap-threshold", type=float, help="cluster split distance (px)")
    p.add_argument("--padding", type=float, help="crop margin around a cluster (px)")
    p.add_argument("--merge-distance", type=float, help="boundary duplicate distance (px)")
    p.add_argument("--counter", choices=[k.value for k in CounterKind])
    p.add_argument("--counter-file", help="precomputed counter outputs for --counter file")
    p.add_argument("--plot", help="write an HTML figure of the first record and its crops")

    p = sub.add_parser("refine", parents=[common], help="gradient refinement of one chain")
    p.add_argument("--record-id", help="record to refine (default: the first one)")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument(
        "--decay-steps", type=float, help="divide the step by 1 + t/N (default 0: fixed step)"
    )
    p.add_argument("--rematch-every", type=int)
    p.add_argument("--lambda-cls", type=float)
    p.add_argument("--lambda-loc", type=float)
    p.add_argument("--lambda-neigh", type=float)
    p.add_argument("--ablation", action="store_true", help="also run with lambda_neigh = 0")
    p.add_argument("--plot", help="write an HTML figure of the loss curves")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--records", type=int, help="number of scenes")
    p.add_argument("--dropout-rate", type=float)
    p.add_argument("--duplicate-rate", type=float)
    p.add_argument("--false-positive-rate", type=float)
    p.add_argument("--center-jitter-sigma", type=float)
    p.add_argument("--plot", help="write an HTML figure of the first scene")

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs numerical gradients")
    p.add_argument("--instances", type=int)
    p.add_argument("--tolerance", type=float)
    return parser


def flags_to_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested override mapping from parsed flags; absent flags are None."""

    def pick(*names: str) -> Dict[str, Any]:
        return {n: getattr(args, n, None) for n in names}

    levels = getattr(args, "levels", None)
    return {
        "seed": args.seed,
        "n_jobs": args.n_jobs,
        "dedup": {
            "distance_threshold": getattr(args, "distance_threshold", None),
            "confidence_threshold": getattr(args, "sigma", None),
        },
        "partition": pick("gap_threshold", "padding", "merge_distance", "counter", "counter_file"),
        "refine": pick(
            "steps", "learning_rate", "decay_steps", "rematch_every",
            "lambda_cls", "lambda_loc", "lambda_neigh",
        ),
        "metrics": {"levels": tuple(levels) if levels else None},
        "synth": pick(
            "records", "dropout_rate", "duplicate_rate", "false_positive_rate",
            "center_jitter_sigma",
        ),
        "gradcheck": pick("instances", "tolerance"),
    }


# ---------------------------------------------------------------------------
# Run configuration -> domain objects
# ---------------------------------------------------------------------------


def focal_params(run: RunConfig) -> FocalParams:
    return FocalParams(alpha=run.refine.alpha, gamma=run.refine.gamma)


def loss_weights(run: RunConfig) -> LossWeights:
    return LossWeights(
        lambda_loc=run.refine.lambda_loc,
        lambda_neigh=run.refine.lambda_neigh,
        lambda_cls=run.refine.lambda_cls,
    )


def refine_config(run: RunConfig) -> RefineConfig:
    r = run.refine
    return RefineConfig(
        steps=r.steps,
        learning_rate=r.learning_rate,
        rematch_every=r.rematch_every,
        weights=loss_weights(run),
        focal=focal_params(run),
        seed=r.seed,
        decay_steps=r.decay_steps,
    )


def corruption_spec(run: RunConfig, seed: Optional[int] = None) -> CorruptionSpec:
    s = run.synth
    return CorruptionSpec(
        center_jitter_sigma=s.center_jitter_sigma,
        dropout_rate=s.dropout_rate,
        duplicate_rate=s.duplicate_rate,
        false_positive_rate=s.false_positive_rate,
        duplicate_offset=s.duplicate_offset,
        seed=s.seed if seed is None else seed,
    )


def scene_spec(run: RunConfig, index: int) -> SceneSpec:
    s = run.synth
    try:
        axis = Axis[s.axis.upper()]
    except KeyError:
        raise PreconditionError(f"synth axis must be 'x' or 'y', got {s.axis!r}") from None
    return SceneSpec(
        width=s.width,
        height=s.height,
        n_clusters=s.n_clusters,
        handles_per_cluster=(s.min_handles, s.max_handles),
        spacing=s.spacing,
        spacing_jitter=s.spacing_jitter,
        inter_cluster_gap=s.inter_cluster_gap,
        axis=axis,
        handle_w=s.handle_w,
        handle_h=s.handle_h,
        cross_jitter=s.cross_jitter,
        seed=s.seed + index,
        id=f"scene-{index}",
    )


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if not getattr(args, name, None):
            raise PreconditionError(f"{args.command} needs --{name.replace('_', '-')}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace, run: RunConfig) -> int:
    _require(args, "input")
    records = load_dataset(args.input, strict=run.strict)
    report = evaluate_dataset(records, levels=run.metrics.levels, n_jobs=run.n_jobs)
    text = format_report(report)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        logger.info(f"[SUCCESS] Wrote report to {args.output}")
    if args.json_output:
        Path(args.json_output).write_text(
            json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        logger.info(f"[SUCCESS] Wrote JSON report to {args.json_output}")
    return EXIT_OK


def _dedup_record(record: ImageRecord, cfg: DedupConfig) -> ImageRecord:
    return record.with_predictions(postprocess(record.predictions, cfg))


def cmd_dedup(args: argparse.Namespace, run: RunConfig) -> int:
    _require(args, "input", "output")
    cfg = DedupConfig(run.dedup.distance_threshold, run.dedup.confidence_threshold)
    records = load_dataset(args.input, strict=run.strict)
    cleaned = Parallel(n_jobs=run.n_jobs)(delayed(_dedup_record)(r, cfg) for r in records)
    before = sum(r.n_pred for r in records)
    after = sum(r.n_pred for r in cleaned)
    write_dataset(args.output, cleaned)
    print(f"dedup: {len(records)} records, {before} -> {after} detections")
    return EXIT_OK


def cmd_partition(args: argparse.Namespace, run: RunConfig) -> int:
    _require(args, "input", "output")
    p = run.partition
    cfg = PartitionConfig(p.gap_threshold, p.padding, p.merge_distance, n_jobs=run.n_jobs)
    try:
        kind = CounterKind(p.counter)
    except ValueError:
        raise PreconditionError(f"unknown counter {p.counter!r}") from None
    counter = make_counter(kind, corruption_spec(run), p.counter_file)

    records = load_dataset(args.input, strict=run.strict)
    results = [two_pass(record, counter, cfg) for record in records]
    rows, stitched = [], []
    for record, res in zip(records, results):
        stitched.append(record.with_predictions(res.detections))
        rows.append(
            {
                "id": record.id,
                "gt": record.n_gt,
                "slices": len(res.slices),
                "single_pass": len(res.first),
                "two_pass": len(res.detections),
            }
        )
    write_dataset(args.output, stitched)

    frame = pd.DataFrame(rows, columns=["id", "gt", "slices", "single_pass", "two_pass"])
    print(frame.to_string(index=False))
    if len(frame):
        single_mae = float((frame["single_pass"] - frame["gt"]).abs().mean())
        two_pass_mae = float((frame["two_pass"] - frame["gt"]).abs().mean())
        print(f"MAE single pass: {single_mae:.4f}")
        print(f"MAE two pass: {two_pass_mae:.4f}")
    if args.plot and stitched:
        from .visualization import scene_figure, write_figure

        write_figure(scene_figure(stitched[0], results[0].slices), args.plot)
    return EXIT_OK


def _refine_instance(args: argparse.Namespace, run: RunConfig) -> ChainInstance:
    if not args.input:
        r = run.refine
        record = jittered_chain(
            n_points=r.n_points, spacing=r.spacing, jitter=r.jitter, seed=r.seed
        )
        logger.info(f"No --input given; refining synthetic chain {record.id}")
        return ChainInstance.from_record(record, focal_params(run))
    records = load_dataset(args.input, strict=run.strict)
    if args.record_id is not None:
        records = [r for r in records if r.id == args.record_id]
    if not records:
        raise PreconditionError(f"no record {args.record_id or ''} found in {args.input}")
    return ChainInstance.from_record(records[0], focal_params(run))


def _summary_line(label: str, trace: RefineTrace) -> str:
    first, last = trace.losses[0], trace.losses[-1]
    return (
        f"{label}: total {first.total:.4f} -> {last.total:.4f}, "
        f"neigh {first.neigh:.4f} -> {last.neigh:.4f}, "
        f"center error {trace.center_errors[0]:.4f} -> {trace.center_errors[-1]:.4f}"
    )


def cmd_refine(args: argparse.Namespace, run: RunConfig) -> int:
    inst = _refine_instance(args, run)
    cfg = refine_config(run)
    baseline = None
    if args.ablation:
        trace, baseline = neighbor_ablation(inst, cfg)
    else:
        trace = refine(inst, cfg)

    print(_summary_line("refine", trace))
    if baseline is not None:
        print(_summary_line("refine without neighbor loss", baseline))

    if args.output:
        out = Path(args.output)
        trace.to_csv(out)
        logger.info(f"[SUCCESS] Wrote trace to {out}")
        if baseline is not None:
            baseline_out = out.with_name(f"{out.stem}_no_neigh{out.suffix or '.csv'}")
            baseline.to_csv(baseline_out)
            logger.info(f"[SUCCESS] Wrote baseline trace to {baseline_out}")
    if args.plot:
        from .visualization import trace_figure, write_figure

        write_figure(trace_figure(trace, baseline), args.plot)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, run: RunConfig) -> int:
    _require(args, "output")
    if run.synth.records < 1:
        raise PreconditionError(f"synth needs at least one record, got {run.synth.records}")
    records = []
    for index in range(run.synth.records):
        scene = generate_scene(scene_spec(run, index))
        records.append(corrupt(scene, corruption_spec(run, seed=run.synth.seed + index)))
    write_dataset(args.output, records)
    print(f"synth: {len(records)} records, {sum(r.n_gt for r in records)} handles")
    if args.plot:
        from .visualization import scene_figure, write_figure

        write_figure(scene_figure(records[0]), args.plot)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, run: RunConfig) -> int:
    g = run.gradcheck
    if not 2 <= g.min_points <= g.max_points:
        raise PreconditionError(
            f"gradcheck needs 2 <= min_points <= max_points, got {g.min_points}..{g.max_points}"
        )
    rng = np.random.default_rng(g.seed)
    weights, params = loss_weights(run), focal_params(run)
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(g.instances):
        n_points = int(rng.integers(g.min_points, g.max_points + 1))
        inst = random_chain_instance(rng, n_points, params=params)
        result = gradient_check(inst, weights, params, step=g.step)
        worst = max(worst, result.max_rel_error)
        checked += result.n_checked
        skipped += result.n_skipped_kinks

    print(f"gradcheck: {g.instances} instances, {checked} coordinates, {skipped} kinks skipped")
    print(f"max relative error: {worst:.3e} (tolerance {g.tolerance:.1e})")
    if worst >= g.tolerance:
        logger.error(f"[ERROR] gradcheck: max relative error {worst:.3e} exceeds {g.tolerance:.1e}")
        return EXIT_GRADCHECK_FAILED
    logger.info("[SUCCESS] Analytic gradients agree with finite differences")
    return EXIT_OK


COMMANDS = {
    "evaluate": cmd_evaluate,
    "dedup": cmd_dedup,
    "partition": cmd_partition,
    "refine": cmd_refine,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    setup_logging(args.log_level, log_file=not args.no_log_file)
    try:
        run = load_run_config(args.config, flags_to_overrides(args), strict=args.strict)
    except ChainCounterError as e:
        logger.error(f"[ERROR] {args.command}: {e}")
        return EXIT_DOMAIN_ERROR
    print(run.to_json(), file=sys.stderr)

    for section, key, flag in REQUIRED.get(args.command, []):
        if getattr(getattr(run, section), key) is None:
            print(f"chain-counter {args.command}: {flag} is required (or set "
                  f"{section}.{key} in --config)", file=sys.stderr)
            return EXIT_USAGE

    try:
        return COMMANDS[args.command](args, run)
    except (ChainCounterError, OSError) as e:
        logger.error(f"[ERROR] {args.command}: {e}")
        return EXIT_DOMAIN_ERROR


if __name__ == "__main__":
    sys.exit(main())
