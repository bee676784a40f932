"""Command-line entry point: ``evdetect <command> [--config C] [--seed S] [--out DIR]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 latency budget missed (``bench``).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .augmentation import build_train_set
from .classifier import FeatureClassifier, fit_records, score_records
from .config import PipelineConfig, load_config
from .data_engine import Dataset, EngineConfig, ModelRegistry, label_events, mine, retrain_cycle
from .errors import DataError, EVDetectError
from .evaluation import (SWEEP_THRESHOLDS, EvalReport, format_frame_table, format_sweep_table, frame_report,
                         per_actor_metrics, sweep_threshold)
from .io import write_json, write_jsonl
from .pipeline import bench, bench_model, load_model, read_scene, run_log
from .simulator import PatchRenderer, generate_scene, split_dataset

log = logging.getLogger("evdetect")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out(args, cfg: PipelineConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _renderer(cfg: PipelineConfig) -> PatchRenderer:
    return PatchRenderer(cfg.render, cfg.seed)


def _split(records, name):
    chosen = [r for r in records if r.split == name]
    return chosen if chosen else list(records)


def _model(args, cfg):
    return load_model(cfg, getattr(args, "model", None))


# -- commands ------------------------------------------------------------------------

def cmd_simulate(args, cfg):
    out = _out(args, cfg)
    _, table = generate_scene(cfg.scene, cfg.camera, cfg.min_width)
    table = split_dataset(table, seed=cfg.seed)
    if args.frame_stride > 1:
        table = table.select(np.flatnonzero(table.frame_index % args.frame_stride == 0))
    n = write_jsonl(out / "scene.jsonl", (r.to_dict() for r in table))
    write_json(out / "scene_config.json", dataclasses.asdict(cfg.scene))
    print(f"wrote {n} frame records for {len(table.actors)} actors to {out / 'scene.jsonl'}")


def _train_set(records, cfg):
    train = _split(records, "train")
    return build_train_set(train, cfg.augment.positive_ratio, cfg.augment.negative_downsample,
                           cfg.augment.seed, cfg.camera, cfg.min_width)


def cmd_augment(args, cfg):
    out = _out(args, cfg)
    train_set, dist = _train_set(read_scene(args.scene), cfg)
    n = write_jsonl(out / "train_set.jsonl", (r.to_dict() for r in train_set))
    if dist is not None:
        write_json(out / "state_distribution.json", dist.to_dict())
    pos = sum(r.label for r in train_set)
    print(f"train set: {pos} positives, {n - pos} negatives -> {out / 'train_set.jsonl'}")


def cmd_train(args, cfg):
    out = _out(args, cfg)
    records = read_scene(args.scene)
    train_set, _ = _train_set(records, cfg) if not args.no_augment else (_split(records, "train"), None)
    provenance = {"scenes": sorted({r.scene_id for r in records}), "scene_file": Path(args.scene).name,
                  "n_train_set": len(train_set)}
    model = fit_records(train_set, _renderer(cfg), cfg.train, provenance)
    model.save(out / "model.json")
    h = model.history
    print(f"trained on {h['n_train']} frames ({h['n_positive']} positive): {h['iterations']} iterations, "
          f"{h['lr_decays']} lr decays, final loss {h['final_loss']:.6g} -> {out / 'model.json'}")


def cmd_run(args, cfg):
    out = _out(args, cfg)
    res = run_log(args.scene, cfg, out, _model(args, cfg))
    row = res.report.actor_rows[0]
    print(f"{res.report.counts['decisions']} decisions ({res.report.counts['classified']} classified); "
          f"actor precision {row['precision']:.4f} recall {row['recall']:.4f} F1 {row['f1']:.4f}; "
          f"mean frame latency {res.latency['mean_ms'] or 0:.3f} ms -> {res.decisions_path}")


def _evaluate(records, model, cfg, name) -> EvalReport:
    scored = score_records(model, records, _renderer(cfg))
    report = frame_report(scored, name=name)
    report.actor_rows = [dataclasses.asdict(per_actor_metrics(scored, cfg=cfg.smoother))]
    return report


def cmd_evaluate(args, cfg):
    out = _out(args, cfg)
    test = _split(read_scene(args.scene), "test")
    model = _model(args, cfg)
    report = _evaluate(test, model, cfg, getattr(model, "version", "synthetic"))
    reports = [report]
    if args.baseline:
        base = _evaluate(test, FeatureClassifier.load(args.baseline), cfg, "baseline")
        report.attach_baseline(base)
        reports = [base, report]
    write_json(out / "evaluation.json", report.to_dict())
    print(format_frame_table(reports))


def cmd_sweep(args, cfg):
    out = _out(args, cfg)
    test = _split(read_scene(args.scene), "test")
    report = sweep_threshold(test, _model(args, cfg), args.T or SWEEP_THRESHOLDS, cfg.smoother,
                             _renderer(cfg), name="sweep")
    write_json(out / "sweep.json", report.to_dict())
    print(format_sweep_table(report))


def cmd_mine(args, cfg):
    out = _out(args, cfg)
    model = _model(args, cfg)
    logs = [read_scene(p) for p in args.logs]
    events = mine(logs, model, cfg.smoother, _renderer(cfg), per_frame=args.per_frame, log_paths=args.logs)
    labelled = label_events(events, logs)
    write_jsonl(out / "events.jsonl", (e.to_dict() for e in events))
    write_jsonl(out / "mined.jsonl", (r.to_dict() for r in labelled))
    false_pos = sum(not any(active for active, _ in e.labels) for e in events)
    print(f"mined {len(events)} tracks ({false_pos} false positives), {len(labelled)} labelled frames "
          f"-> {out / 'mined.jsonl'}")


def cmd_retrain(args, cfg):
    out = _out(args, cfg)
    dataset = Dataset(read_scene(args.dataset), split_seed=cfg.seed)
    previous = FeatureClassifier.load(args.model)
    test = _split(read_scene(args.test), "test") if args.test else None
    engine = EngineConfig(cfg.augment.positive_ratio, cfg.augment.negative_downsample, cfg.augment.seed,
                          cfg.min_width)
    registry = ModelRegistry(out / "models")
    parent = registry.register(previous) if not registry.manifest["models"] else registry.manifest["models"][-1][
        "version"]
    result = retrain_cycle(dataset, read_scene(args.mined), cfg.train, _renderer(cfg), previous, test, engine,
                           cfg.camera)
    version = registry.register(result.model, parent)
    result.report.name = version
    result.baseline.name = parent
    write_json(out / "retrain_report.json", result.report.to_dict())
    print(format_frame_table([result.baseline, result.report]))
    print(f"added {result.added_records} mined records; model {version} -> {out / 'models'}")


def cmd_bench(args, cfg):
    out = _out(args, cfg)
    model = _model(args, cfg) if (args.model or cfg.classifier.model_path or cfg.classifier.kind != "feature") \
        else bench_model(cfg.seed, cfg.render)
    rt = cfg.runtime
    res = bench(model, args.tracks or rt.bench_tracks, args.frames or rt.bench_frames,
                args.workers or rt.workers, cfg.seed, rt.latency_budget_ms, cfg.render, cfg.smoother,
                cfg.camera, cfg.min_width)
    write_json(out / "bench.json", res.to_dict())
    verdict = "PASS" if res.passed else "FAIL"
    print(f"{verdict}: mean frame latency {res.mean_ms:.3f} ms (p99 {res.p99_ms:.3f} ms) over {res.frames} frames "
          f"x {res.mean_tracks:.1f} tracks, {res.workers} worker(s); budget {res.budget_ms} ms")
    return EXIT_OK if res.passed else EXIT_BUDGET


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output directory (default: [output] dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="evdetect", description="Active emergency-vehicle detection: simulate, train, run, evaluate.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a scene file (JSON Lines)")
    s.add_argument("--frame-stride", type=int, default=1, help="keep every k-th frame")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("augment", parents=[common], help="write the rebalanced training set")
    s.add_argument("--scene", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", parents=[common], help="fit the feature classifier")
    s.add_argument("--scene", required=True)
    s.add_argument("--no-augment", action="store_true", help="train on the raw train split")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("run", parents=[common], help="replay a scene through the frame pipeline")
    s.add_argument("--scene", required=True)
    s.add_argument("--model")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("evaluate", parents=[common], help="frame-level PR report on the test split")
    s.add_argument("--scene", required=True)
    s.add_argument("--model")
    s.add_argument("--baseline", help="model file to report %% change against")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="per-actor metrics across smoother thresholds")
    s.add_argument("--scene", required=True)
    s.add_argument("--model")
    s.add_argument("--T", type=float, nargs="+", help="thresholds (default 0 0.3 0.5 0.7)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mine", parents=[common], help="harvest flagged tracks from logs and label them")
    s.add_argument("--logs", nargs="+", required=True)
    s.add_argument("--model")
    s.add_argument("--per-frame", action="store_true", help="flag on single-frame hits instead of smoothed state")
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("retrain", parents=[common], help="merge mined records and retrain")
    s.add_argument("--dataset", required=True, help="records the previous model was trained from")
    s.add_argument("--mined", required=True, help="labelled records from `mine`")
    s.add_argument("--model", required=True, help="previous model file")
    s.add_argument("--test", help="fixed test scene (default: dataset test split)")
    s.set_defaults(func=cmd_retrain)

    s = sub.add_parser("bench", parents=[common], help="per-frame latency benchmark")
    s.add_argument("--model")
    s.add_argument("--tracks", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        code = args.func(args, cfg)
    except DataError as e:
        print(f"evdetect: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except EVDetectError as e:
        print(f"evdetect: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"evdetect: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
