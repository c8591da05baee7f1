"""Command-line entry point: gen-data, train, eval, sweep, verify.

Configuration is plain ``key=value`` lines (``#`` comments); command-line
flags override file values. Every command writes its fully-resolved
config next to its outputs so any run can be reproduced bit-for-bit from
the stored file and seed.

Exit codes: 0 success, 1 property-check failure, 2 bad input, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .datasets import (DatasetConfig, build_dataset, load_dataset, save_dataset)
from .evaluation import (EvalConfig, evaluate, evaluate_trajectory_iou,
                         speed_accuracy_sweep, write_detections_jsonl)
from .model import (DivergenceError, TrainConfig, load_params, save_params, train)
from .verify import run_all

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


LOSS_FLAGS = {"bag": "bag", "sum": "sum", "bag-delta": "bag_delta",
              "traj": "traj", "traj-sa-linear": "traj_sa_linear",
              "traj-sa-parabola": "traj_sa_parabola"}


def read_config_file(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit command-line flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, raw in file_values.items():
            default = defaults[key]
            if isinstance(default, bool):
                resolved[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                resolved[key] = int(raw)
            elif isinstance(default, float):
                resolved[key] = float(raw)
            else:
                resolved[key] = raw
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def write_resolved_config(outdir: Path, resolved: dict, command: str) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}"]
    lines += [f"{k}={resolved[k]}" for k in sorted(resolved)]
    (outdir / "resolved_config.txt").write_text("\n".join(lines) + "\n")


def cmd_gen_data(args) -> int:
    defaults = {"out": None, "n_train": 200, "n_test": 80, "seed": 0,
                "boundary": "bounce", "sprite_source": "procedural",
                "sprites_per_video": 1, "mnist_images": "", "mnist_labels": ""}
    resolved = resolve_config(args, defaults)
    if not resolved["out"]:
        raise UsageError("gen-data needs --out")
    try:
        cfg = DatasetConfig(n_train=resolved["n_train"], n_test=resolved["n_test"],
                            seed=resolved["seed"], boundary=resolved["boundary"],
                            sprite_source=resolved["sprite_source"],
                            sprites_per_video=resolved["sprites_per_video"],
                            mnist_images=resolved["mnist_images"] or None,
                            mnist_labels=resolved["mnist_labels"] or None)
    except ValueError as e:
        raise UsageError(str(e))
    train_videos, test_videos = build_dataset(cfg)
    outdir = Path(resolved["out"])
    manifest = save_dataset(train_videos, test_videos, cfg, outdir)
    write_resolved_config(outdir, resolved, "gen-data")
    print(f"wrote {len(train_videos)}/{len(test_videos)} train/test videos; "
          f"manifest at {manifest}")
    return EXIT_OK


def _train_defaults() -> dict:
    return {"data": None, "out": None, "loss": "traj", "supervision": "annotated",
            "T": 8, "seed": 0, "learning_rate": 1e-3, "iterations": 2000,
            "batch_size": 32, "jitter_sigma": 0.0, "smooth_l1_beta": 1.0,
            "hidden_dim": 128, "embed_dim": 32, "feat_grid": 8}


def _load_split(data_dir, split: str):
    path = Path(data_dir or "")
    if not (path / "manifest.json").is_file():
        raise UsageError(f"no dataset manifest under {data_dir!r}")
    train_videos, test_videos, _ = load_dataset(path)
    return train_videos if split == "train" else test_videos


def _train_config(resolved: dict) -> TrainConfig:
    if resolved["loss"] not in LOSS_FLAGS:
        raise UsageError(f"unknown loss {resolved['loss']!r}; "
                         f"choose from {sorted(LOSS_FLAGS)}")
    try:
        return TrainConfig(learning_rate=resolved["learning_rate"],
                           iterations=resolved["iterations"],
                           batch_size=resolved["batch_size"], T=resolved["T"],
                           seed=resolved["seed"],
                           loss_kind=LOSS_FLAGS[resolved["loss"]],
                           smooth_l1_beta=resolved["smooth_l1_beta"],
                           jitter_sigma=resolved["jitter_sigma"],
                           supervision=resolved["supervision"],
                           hidden_dim=resolved["hidden_dim"],
                           embed_dim=resolved["embed_dim"],
                           feat_grid=resolved["feat_grid"])
    except ValueError as e:
        raise UsageError(str(e))


def cmd_train(args) -> int:
    resolved = resolve_config(args, _train_defaults())
    if not resolved["out"]:
        raise UsageError("train needs --out")
    videos = _load_split(resolved["data"], "train")
    cfg = _train_config(resolved)
    params, curve = train(videos, cfg)
    outdir = Path(resolved["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    save_params(params, outdir / "model.json")
    with open(outdir / "loss_curve.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "loss"])
        writer.writerows((i, f"{v:.10g}") for i, v in enumerate(curve))
    write_resolved_config(outdir, resolved, "train")
    print(f"trained {cfg.loss_kind} model for {cfg.iterations} iterations; "
          f"loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    defaults = {"data": None, "model": None, "out": None, "mode": "all-frames",
                "metric": "map", "T": 8, "seed": 0, "jitter_sigma": 0.0,
                "fusion_iou": 0.25}
    resolved = resolve_config(args, defaults)
    if not resolved["out"]:
        raise UsageError("eval needs --out")
    if resolved["mode"] not in ("keyframes", "all-frames"):
        raise UsageError(f"unknown mode {resolved['mode']!r}")
    if resolved["metric"] not in ("map", "traj-iou"):
        raise UsageError(f"unknown metric {resolved['metric']!r}")
    if not resolved["model"] or not Path(resolved["model"]).is_file():
        raise UsageError(f"no model file at {resolved['model']!r}")
    videos = _load_split(resolved["data"], "test")
    params = load_params(resolved["model"])
    ecfg = EvalConfig(T=resolved["T"], jitter_sigma=resolved["jitter_sigma"],
                      seed=resolved["seed"],
                      fusion_iou_threshold=resolved["fusion_iou"])
    outdir = Path(resolved["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    if resolved["metric"] == "traj-iou":
        result = evaluate_trajectory_iou(params, videos, ecfg)
        with open(outdir / "traj_iou.json", "w") as f:
            json.dump(result, f, sort_keys=True)
            f.write("\n")
        print(f"mean trajectory IoU {result['mean_trajectory_iou']:.4f} over "
              f"{result['n_windows']} windows")
    else:
        mode = "keyframes_only" if resolved["mode"] == "keyframes" else "all_frames"
        report, stats = evaluate(params, videos, mode, ecfg)
        with open(outdir / "report.json", "w") as f:
            json.dump(report.to_json_dict(), f, sort_keys=True)
            f.write("\n")
        (outdir / "report.csv").write_text(report.to_csv())
        write_detections_jsonl(stats.detections, outdir / "detections.jsonl")
        print(f"{resolved['mode']} mAP@[0.50:0.05:0.95] = {report.grand_map:.4f}")
    write_resolved_config(outdir, resolved, "eval")
    return EXIT_OK


def cmd_sweep(args) -> int:
    defaults = {"data": None, "out": None, "T_list": "2,4,8,16", "seed": 0,
                "learning_rate": 1e-3, "iterations": 2000, "batch_size": 32,
                "jitter_sigma": 0.0, "loss": "traj"}
    resolved = resolve_config(args, defaults)
    if not resolved["out"]:
        raise UsageError("sweep needs --out")
    try:
        T_values = [int(t) for t in str(resolved["T_list"]).split(",") if t]
    except ValueError:
        raise UsageError(f"bad --T-list {resolved['T_list']!r}")
    if not T_values or min(T_values) < 1:
        raise UsageError("sweep needs T values >= 1")
    train_videos = _load_split(resolved["data"], "train")
    test_videos = _load_split(resolved["data"], "test")
    base = TrainConfig(learning_rate=resolved["learning_rate"],
                       iterations=resolved["iterations"],
                       batch_size=resolved["batch_size"],
                       seed=resolved["seed"],
                       loss_kind=LOSS_FLAGS[resolved["loss"]],
                       jitter_sigma=resolved["jitter_sigma"])
    rows = speed_accuracy_sweep(train_videos, test_videos, T_values, base,
                                EvalConfig(jitter_sigma=resolved["jitter_sigma"],
                                           seed=resolved["seed"]))
    outdir = Path(resolved["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["T", "cost_proxy", "extractions_per_frame", "all_frames_map"])
        writer.writerows((r.T, f"{r.cost_proxy:.10g}",
                          f"{r.extractions_per_frame:.10g}",
                          f"{r.all_frames_map:.10g}") for r in rows)
    # wall time varies run to run; kept apart so sweep.csv is reproducible
    with open(outdir / "sweep_timing.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["T", "extraction_wall_time_s"])
        writer.writerows((r.T, f"{r.extraction_wall_time:.6f}") for r in rows)
    write_resolved_config(outdir, resolved, "sweep")
    for r in rows:
        print(f"T={r.T:3d} cost=1/{r.T} mAP={r.all_frames_map:.4f} "
              f"feat-time={r.extraction_wall_time:.3f}s")
    return EXIT_OK


def cmd_verify(args) -> int:
    defaults = {"trials": 1000, "seed": 0, "inject_gradient_bug": False}
    resolved = resolve_config(args, defaults)
    results = run_all(trials=resolved["trials"], seed=resolved["seed"],
                      inject_gradient_bug=resolved["inject_gradient_bug"])
    all_ok = True
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        all_ok &= r.passed
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajcast",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a moving-digits dataset")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--boundary", choices=["bounce", "wrap"])
    p.add_argument("--sprite-source", dest="sprite_source",
                   choices=["procedural", "mnist"])
    p.add_argument("--sprites-per-video", dest="sprites_per_video", type=int)
    p.add_argument("--mnist-images", dest="mnist_images")
    p.add_argument("--mnist-labels", dest="mnist_labels")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the trajectory head")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS))
    p.add_argument("--supervision",
                   choices=["annotated", "smooth", "random", "none"])
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--jitter-sigma", dest="jitter_sigma", type=float)
    p.add_argument("--smooth-l1-beta", dest="smooth_l1_beta", type=float)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--feat-grid", dest="feat_grid", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--mode", choices=["keyframes", "all-frames"])
    p.add_argument("--metric", choices=["map", "traj-iou"])
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jitter-sigma", dest="jitter_sigma", type=float)
    p.add_argument("--fusion-iou", dest="fusion_iou", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="speed-accuracy sweep over trajectory lengths")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--T-list", dest="T_list")
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--jitter-sigma", dest="jitter_sigma", type=float)
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the numerical property suite")
    p.add_argument("--config")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--inject-gradient-bug", dest="inject_gradient_bug",
                   action="store_const", const=True, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
