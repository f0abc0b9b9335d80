"""Command-line surface: scene/data generation, baselines, training,
evaluation sweeps, and CSV report merging.

Exit codes: 0 success, 1 validation error (bad flags, inconsistent profile,
missing dataset), 2 runtime failure. Every CSV artifact starts with a
``# config_hash=...`` comment followed by a header row.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from .baselines import lmmse_detect, ls_estimate, wmmse_precode, zf_detect, zf_precode
from .channel import snr_to_sigma2
from .datastore import (DatasetIntegrityError, generate_dataset, load_checkpoint,
                        mix64, read_dataset, TAG_SCENE)
from .model import ModelConfig, MultiTaskModel
from .phytasks import (TASKS, PilotObservation, nmse, pilot_selection, sum_rate)
from .profiles import get_profile, model_config_for, split_counts, train_defaults
from .scene import generate_scene, rasterize
from .training import (TrainConfig, build_batch, eval_task, fit,
                       regenerate_observations)

BASELINE_TASKS = ("ce", "det", "precoding")
_TRAIN_KEYS = ("epochs", "batch_size", "lr0", "beta1", "beta2", "eps",
               "clip_norm", "seed")


class CliError(Exception):
    """Flag/input validation failure (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path: str, header, rows, cfg: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: str):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def parse_grid(text: str):
    """Inclusive start:stop:step grids or comma lists."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"bad grid {text!r}, expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise CliError("grid step must be positive")
        values = []
        v = start
        while v <= stop + 1e-9:
            values.append(round(v, 9))
            v += step
        return values
    return [float(p) for p in text.split(",") if p]


def parse_alpha(text: str) -> dict:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != len(TASKS):
        raise CliError(f"--alpha needs {len(TASKS)} comma values in task order "
                       f"{','.join(TASKS)}")
    return dict(zip(TASKS, parts))


def load_kv_overrides(path: str) -> dict:
    if not os.path.exists(path):
        raise CliError(f"missing config file: {path}")
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            out[key.strip()] = raw.strip()
    return out


def apply_overrides(model_cfg: ModelConfig, train_kwargs: dict, overrides: dict):
    mc = {f: getattr(model_cfg, f) for f in model_cfg.__dataclass_fields__}
    for key, raw in overrides.items():
        if key in mc:
            mc[key] = tuple(int(x) for x in raw.split(",")) if key == "hyper_hidden" else int(raw)
        elif key in ("train_snr_grid", "train_ebn0_grid"):
            train_kwargs[key] = None if raw.lower() == "none" else \
                tuple(float(x) for x in raw.split(","))
        elif key in _TRAIN_KEYS:
            train_kwargs[key] = type(TrainConfig.__dataclass_fields__[key].default)(
                float(raw)) if key != "seed" else int(raw)
        else:
            raise CliError(f"unknown config key {key!r}")
    return ModelConfig(**mc), train_kwargs


def _require_dataset(path: str):
    if not path:
        raise CliError("--dataset is required")
    if not os.path.exists(os.path.join(path, "manifest.json")):
        raise CliError(f"missing dataset at {path}")
    return read_dataset(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_scene_gen(args) -> int:
    profile = get_profile(args.profile)
    os.makedirs(args.out, exist_ok=True)
    scenes, grids = [], []
    for idx in range(args.scenarios):
        scene = generate_scene(mix64(args.seed, idx, TAG_SCENE), profile.scene)
        scenes.append(scene.to_dict())
        grids.append(rasterize(scene, profile.scene.grid_w).grid)
    with open(os.path.join(args.out, "scenes.json"), "w") as fh:
        json.dump(scenes, fh, indent=1, sort_keys=True)
    grids = np.stack(grids)
    grids.astype("u1").tofile(os.path.join(args.out, "scene_grids.u8"))
    with open(os.path.join(args.out, "index.json"), "w") as fh:
        json.dump({"count": args.scenarios, "grid_w": profile.scene.grid_w,
                   "seed": args.seed, "profile": args.profile}, fh)
    print(f"wrote {args.scenarios} scenes to {args.out}")
    return 0


def cmd_data_gen(args) -> int:
    profile = get_profile(args.profile)
    samples = args.samples or profile.samples_per_scenario
    counts = split_counts(profile, args.scenarios)
    dataset = generate_dataset(profile, args.scenarios, samples, args.seed, args.out)
    print(f"dataset at {args.out}: {args.scenarios} scenarios x {samples} samples, "
          f"split {counts['train']}/{counts['val']}/{counts['test']}")
    return 0


def _baseline_rows(dataset, task, grid):
    split = dataset.splits["test"]
    profile = dataset.profile
    tasks = profile.tasks
    rows = []
    for snr in grid:
        obs = regenerate_observations(dataset, split, snr_db=snr, csi_snr_db=snr)
        idx = np.arange(split.n_samples)
        if task == "ce":
            batch = build_batch(split, "ce", idx, profile, obs=obs, snr_db=snr)
            sel = pilot_selection(profile.geom.n_t, tasks.l_p_ce)
            errs = []
            for b in range(split.n_samples):
                po = PilotObservation(y_pilot=batch.y_pilot[b], selection=sel,
                                      n_t=profile.geom.n_t, snr_db=snr)
                errs.append(nmse(ls_estimate(po), batch.h_true[b]))
            rows.append([task, "ls", snr, "nmse", float(np.mean(errs))])
        elif task == "det":
            batch = build_batch(split, "det", idx, profile, obs=obs, snr_db=snr)
            sigma2 = snr_to_sigma2(snr)
            zf_err, lm_err = [], []
            for b in range(split.n_samples):
                zf_err.append(nmse(zf_detect(batch.h[b], batch.y[b]), batch.x[b]))
                lm_err.append(nmse(lmmse_detect(batch.h[b], batch.y[b], sigma2),
                                   batch.x[b]))
            rows.append([task, "zf", snr, "nmse", float(np.mean(zf_err))])
            rows.append([task, "lmmse", snr, "nmse", float(np.mean(lm_err))])
        elif task == "precoding":
            batch = build_batch(split, "precoding", idx, profile, obs=obs, snr_db=snr)
            sigma2 = snr_to_sigma2(snr)
            zf_rate, wm_rate = [], []
            for b in range(split.n_samples):
                w = zf_precode(batch.h_noisy[b], tasks.p_max)
                zf_rate.append(sum_rate(batch.h_true[b], w, sigma2))
                w2, _ = wmmse_precode(batch.h_noisy[b], tasks.p_max, sigma2, iters=50)
                wm_rate.append(sum_rate(batch.h_true[b], w2, sigma2))
            rows.append([task, "zf", snr, "sum_rate", float(np.mean(zf_rate))])
            rows.append([task, "wmmse", snr, "sum_rate", float(np.mean(wm_rate))])
    return rows


def cmd_baseline(args) -> int:
    dataset = _require_dataset(args.dataset)
    if args.task not in BASELINE_TASKS:
        raise CliError(f"--task must be one of {BASELINE_TASKS} "
                       "(decoding/localization have no in-scope baseline)")
    grid = parse_grid(args.snr)
    rows = _baseline_rows(dataset, args.task, grid)
    cfg = {"command": "baseline", "task": args.task, "snr": grid,
           "dataset": args.dataset, "profile": dataset.profile.name}
    out = args.out or f"baseline_{args.task}.csv"
    write_csv(out, ["task", "method", "snr", "metric", "value"], rows, cfg)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_train(args) -> int:
    dataset = _require_dataset(args.dataset)
    profile = dataset.profile
    if args.profile and args.profile != profile.name:
        raise CliError(f"profile {args.profile!r} does not match dataset "
                       f"profile {profile.name!r}")
    model_cfg = model_config_for(profile)
    train_kwargs = dict(train_defaults(profile))
    if args.config:
        model_cfg, train_kwargs = apply_overrides(model_cfg, train_kwargs,
                                                  load_kv_overrides(args.config))
    if args.epochs:
        train_kwargs["epochs"] = args.epochs
    tcfg = TrainConfig(seed=args.seed, **train_kwargs)
    if args.alpha:
        tcfg.alpha = parse_alpha(args.alpha)
    model = MultiTaskModel(model_cfg, seed=args.seed)
    result = fit(model, dataset, tcfg, args.out)
    print(f"best epoch {result.best_epoch} (val {result.best_val:.6g}); "
          f"checkpoint at {result.checkpoint_path}, log at {result.log_path}")
    return 0


def _load_model(args, dataset) -> MultiTaskModel:
    if args.checkpoint:
        cfg_path = os.path.join(args.checkpoint, "config.kv")
        if os.path.exists(cfg_path):
            with open(cfg_path) as fh:
                cfg = ModelConfig.from_kv(fh.read())
        else:
            cfg = model_config_for(dataset.profile)
        model = MultiTaskModel(cfg, seed=args.seed)
        model.load_state_dict(load_checkpoint(args.checkpoint))
        return model
    return MultiTaskModel(model_config_for(dataset.profile), seed=args.seed)


def cmd_eval(args) -> int:
    dataset = _require_dataset(args.dataset)
    model = _load_model(args, dataset)
    split = dataset.splits["test"]
    wanted = TASKS if args.task == "all" else (args.task,)
    if any(t not in TASKS for t in wanted):
        raise CliError(f"unknown task {args.task!r}")
    snr_grid = parse_grid(args.snr)
    ebn0_grid = parse_grid(args.ebn0)
    metric_name = {"ce": "nmse", "det": "nmse", "precoding": "sum_rate",
                   "decoding": "ber", "loc": "error_distance"}
    rows, cdf_rows = [], []
    for task in wanted:
        grid = ebn0_grid if task == "decoding" else snr_grid
        for point in grid:
            if task == "decoding":
                value, per = eval_task(model, dataset, split, task, ebn0_db=point)
            else:
                value, per = eval_task(model, dataset, split, task, snr_db=point)
            rows.append([task, "model", point, metric_name[task], value])
            if task == "loc":
                for thr in np.linspace(0.0, 1.0, 51):
                    cdf_rows.append([point, round(float(thr), 3),
                                     float(np.mean(per <= thr))])
    cfg = {"command": "eval", "tasks": list(wanted), "snr": snr_grid,
           "ebn0": ebn0_grid, "dataset": args.dataset,
           "checkpoint": args.checkpoint or "random-init", "seed": args.seed}
    out = args.out or "eval_metrics.csv"
    write_csv(out, ["task", "method", "snr", "metric", "value"], rows, cfg)
    printed = f"wrote {len(rows)} rows to {out}"
    if cdf_rows:
        cdf_path = os.path.splitext(out)[0] + "_loc_cdf.csv"
        write_csv(cdf_path, ["snr", "threshold", "fraction"], cdf_rows, cfg)
        printed += f", CDF table at {cdf_path}"
    print(printed)
    return 0


def cmd_report(args) -> int:
    merged = {}
    methods = []
    metric_of = {}
    for path in args.inputs:
        if not os.path.exists(path):
            raise CliError(f"missing input CSV: {path}")
        header, rows = read_csv(path)
        if header[:5] != ["task", "method", "snr", "metric", "value"]:
            raise CliError(f"unexpected columns in {path}")
        for task, method, snr, metric, value in rows:
            if method not in methods:
                methods.append(method)
            merged.setdefault((task, float(snr)), {})[method] = value
            metric_of[task] = metric
    rows = [[task, metric_of[task], snr] +
            [merged[(task, snr)].get(m, "") for m in methods]
            for task, snr in sorted(merged)]
    cfg = {"command": "report", "inputs": list(args.inputs)}
    write_csv(args.out, ["task", "metric", "snr"] + methods, rows, cfg)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="phyfm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--profile", choices=("toy", "paper"), default="toy")

    p = sub.add_parser("scene-gen", help="generate scenes and grids")
    common(p)
    p.add_argument("--scenarios", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("data-gen", help="generate the full multi-task dataset")
    common(p)
    p.add_argument("--scenarios", type=int, default=250)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", help="classical baselines vs SNR")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--snr", default="0:25:5")
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train the multi-task model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--profile", choices=("toy", "paper"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", default=None,
                   help=f"comma list of task weights in order {','.join(TASKS)}")
    p.add_argument("--config", default=None, help="key=value overrides file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="model metrics vs SNR / EbN0 grids")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--task", default="all")
    p.add_argument("--snr", default="0:25:5")
    p.add_argument("--ebn0", default="4,5,6")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("report", help="merge metric CSVs into one table")
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+")

    return parser


COMMANDS = {"scene-gen": cmd_scene_gen, "data-gen": cmd_data_gen,
            "baseline": cmd_baseline, "train": cmd_train,
            "eval": cmd_eval, "report": cmd_report}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetIntegrityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))
