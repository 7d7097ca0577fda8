"""Command-line surface tying the library into reproducible experiments.

Every subcommand takes exactly three flags: --config (a flat JSON file of
command-specific keys), --seed (overrides the config seed) and --out (the
artifact directory).  Runs print one machine-readable JSON line to stdout
that echoes the resolved config, its hash and the seed; all artifacts
embed the same triple.  Failures print {"code", "message"} and exit 1,
with code "config", "data" or "numeric".  The SETNET_LOG environment
variable (error|info|debug) controls stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import cardnet, detect, formats, mlmetrics, setinfer, synth
from .cardloss import HeadWeights
from .errors import ConfigError, DataError, SetnetError
from .numerics import NegBinParams, nb_pmf_truncated

log = logging.getLogger(__name__)

_REQUIRED = object()

# Known keys and defaults per command; unknown config keys are rejected.
SCHEMAS: dict[str, dict] = {
    "synth": {
        "task": _REQUIRED,  # counting | multilabel | boxes
        "n": 1000,
        "d": 8,
        "C": 16,
        "seed": 0,
        "noise": 0.2,
        "alpha_map": None,
        "beta_map": None,
        "image_size": 200.0,
        "cell_count": 5,
        "box_size": 24.0,
        "jitter": 0.08,
        "duplicates": 3,
        "fp_rate": 0.3,
        "crowd_frac": 0.35,
    },
    "train": {
        "data": _REQUIRED,
        "loss": "negbin",  # negbin | regression
        "hidden": [16],
        "activation": "tanh",
        "alpha_max": 160.0,
        "beta_max": 20.0,
        "floor": 1e-6,
        "learning_rate": 0.001,
        "momentum": 0.9,
        "weight_decay": 1e-6,
        "epochs": 20,
        "batch_size": 32,
        "seed": 0,
    },
    "predict": {
        "model": _REQUIRED,
        "features": _REQUIRED,
        "seed": 0,
    },
    "eval-ml": {
        "records": _REQUIRED,
        "mode": "fixed-k",  # fixed-k | predicted-k
        "pred": None,
        "k_values": None,
        "seed": 0,
    },
    "eval-det": {
        "dets": _REQUIRED,
        "gts": _REQUIRED,
        "iou_thresh": 0.5,
        "n_images": None,
        "seed": 0,
    },
    "nms": {
        "proposals": _REQUIRED,
        "mstar_fixed": None,
        "mstar_file": None,
        "mstar_model": None,
        "mstar_features": None,
        "t0": 0.4,
        "step": 0.01,
        "t_max": 0.95,
        "seed": 0,
    },
    "sample": {
        "card": "negbin",  # negbin | pmf
        "a": 5.0,
        "b": 0.5,
        "pmf": None,
        "element": "categorical",  # categorical | uniform
        "probs": [0.5, 0.3, 0.2],
        "lo": 0.0,
        "hi": 1.0,
        "n": _REQUIRED,
        "seed": 0,
    },
    "gradcheck": {
        "d": 4,
        "hidden": [8],
        "batch": 8,
        "h": 1e-5,
        "loss": "negbin",
        "seed": 0,
    },
}


def _setup_logging() -> None:
    level = os.environ.get("SETNET_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(stream=sys.stderr, level=levels[level],
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(command: str, config_path: str | None, seed: int | None) -> dict:
    schema = SCHEMAS[command]
    config = {k: v for k, v in schema.items() if v is not _REQUIRED}
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {config_path} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        config.update(loaded)
    if seed is not None:
        config["seed"] = seed
    missing = sorted(k for k, v in schema.items()
                     if v is _REQUIRED and k not in config)
    if missing:
        raise ConfigError(f"missing required config keys for {command}: {missing}")
    return config


def _outpath(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _synth_config(cfg: dict) -> synth.SynthConfig:
    task = cfg["task"]
    if task not in ("counting", "multilabel", "boxes"):
        raise ConfigError(f"unknown synth task {task!r}")
    defaults = (
        synth.multilabel_default_maps()
        if task == "multilabel"
        else synth.counting_default_maps()
    )
    alpha_map = (
        synth.ParamMap.from_dict(cfg["alpha_map"]) if cfg["alpha_map"] else defaults[0]
    )
    beta_map = (
        synth.ParamMap.from_dict(cfg["beta_map"]) if cfg["beta_map"] else defaults[1]
    )
    return synth.SynthConfig(
        d=int(cfg["d"]), C=int(cfg["C"]), n=int(cfg["n"]), seed=int(cfg["seed"]),
        alpha_map=alpha_map, beta_map=beta_map, noise=float(cfg["noise"]),
        image_size=float(cfg["image_size"]), cell_count=int(cfg["cell_count"]),
        box_size=float(cfg["box_size"]), jitter=float(cfg["jitter"]),
        duplicates=int(cfg["duplicates"]), fp_rate=float(cfg["fp_rate"]),
        crowd_frac=float(cfg["crowd_frac"]),
    )


def cmd_synth(cfg: dict, out_dir: str) -> dict:
    scfg = _synth_config(cfg)
    header = formats.make_header(cfg, scfg.seed)
    task = cfg["task"]
    files: dict[str, str] = {}
    if task == "counting":
        samples = synth.gen_counting(scfg)
        path = _outpath(out_dir, "data.jsonl")
        formats.write_jsonl(path, header, (
            {"features": list(s.features), "count": s.count} for s in samples
        ))
        files["data"] = path
        log.info("wrote %d counting samples to %s", len(samples), path)
    elif task == "multilabel":
        samples = synth.gen_multilabel(scfg)
        rec_path = _outpath(out_dir, "records.jsonl")
        formats.write_jsonl(rec_path, header, (
            {"scores": list(s.record.scores), "truth": list(s.record.truth.labels)}
            for s in samples
        ))
        feat_path = _outpath(out_dir, "features.jsonl")
        formats.write_jsonl(feat_path, header, (
            {"features": list(s.features), "count": s.count} for s in samples
        ))
        files["records"] = rec_path
        files["features"] = feat_path
    else:
        images = synth.gen_boxes(scfg)
        prop_path = _outpath(out_dir, "proposals.txt")
        formats.write_boxes(prop_path, header,
                            ((im.image_id, im.proposals) for im in images),
                            with_score=True)
        gt_path = _outpath(out_dir, "gt.txt")
        formats.write_boxes(gt_path, header,
                            ((im.image_id, im.ground_truth) for im in images),
                            with_score=False)
        counts_path = _outpath(out_dir, "counts.jsonl")
        formats.write_jsonl(counts_path, header, (
            {"image_id": im.image_id, "count": im.count} for im in images
        ))
        files = {"proposals": prop_path, "gt": gt_path, "counts": counts_path}
    return {"files": files, "n": int(cfg["n"])}


def cmd_train(cfg: dict, out_dir: str) -> dict:
    records = formats.read_counting_records(cfg["data"])
    if not records:
        raise DataError(f"no training records in {cfg['data']}")
    data = [cardnet.TrainingSample(features=f, count=c) for f, c in records]
    d = len(data[0].features)
    kind = cfg["loss"]
    if kind not in ("negbin", "regression"):
        raise ConfigError(f"unknown loss {kind!r}")
    dims = [d] + [int(h) for h in cfg["hidden"]] + [2 if kind == "negbin" else 1]
    head = HeadWeights(alpha_max=float(cfg["alpha_max"]),
                       beta_max=float(cfg["beta_max"]), floor=float(cfg["floor"]))
    model = cardnet.init_model(dims, activation=cfg["activation"], head=head,
                               seed=int(cfg["seed"]), kind=kind)
    tcfg = cardnet.TrainConfig(
        learning_rate=float(cfg["learning_rate"]), momentum=float(cfg["momentum"]),
        weight_decay=float(cfg["weight_decay"]), epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]), seed=int(cfg["seed"]),
    )
    losses: list[dict] = []
    trained = cardnet.train(model, data, tcfg,
                            epoch_callback=lambda e, l: losses.append(
                                {"epoch": e, "loss": l}))
    header = formats.make_header(cfg, tcfg.seed)
    model_path = _outpath(out_dir, "model.json")
    cardnet.save_model(trained, model_path,
                       meta={"config_hash": header["config_hash"]})
    log_path = _outpath(out_dir, "train_log.jsonl")
    formats.write_jsonl(log_path, header, losses)
    return {
        "files": {"model": model_path, "train_log": log_path},
        "final_loss": losses[-1]["loss"],
        "n_samples": len(data),
    }


def cmd_predict(cfg: dict, out_dir: str) -> dict:
    model = cardnet.load_model(cfg["model"])
    rows = []
    for feats in formats.iter_feature_rows(cfg["features"]):
        mode = cardnet.predict_count(model, feats)
        if model.kind == "negbin":
            ab = cardnet.forward(model, feats)
            rows.append({"alpha": ab.alpha, "beta": ab.beta, "mode": mode})
        else:
            rows.append({"mode": mode})
    header = formats.make_header(cfg, int(cfg["seed"]))
    path = _outpath(out_dir, "predictions.jsonl")
    formats.write_jsonl(path, header, rows)
    return {"files": {"predictions": path}, "n": len(rows)}


def _write_curve_csv(path: str, header: dict, columns: list[str],
                     rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# ")
        fh.write(formats.canonical_json(header))
        fh.write("\n")
        fh.write(",".join(columns))
        fh.write("\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
            fh.write("\n")


def cmd_eval_ml(cfg: dict, out_dir: str) -> dict:
    records = formats.read_multilabel_records(cfg["records"])
    if not records:
        raise DataError(f"no records in {cfg['records']}")
    n_classes = len(records[0].scores)
    header = formats.make_header(cfg, int(cfg["seed"]))
    mode = cfg["mode"]
    if mode == "fixed-k":
        k_values = cfg["k_values"] or list(range(0, n_classes + 1))
        sweep = mlmetrics.topk_sweep(records, [int(k) for k in k_values])
        curve_path = _outpath(out_dir, "curve.csv")
        _write_curve_csv(
            curve_path, header,
            ["k", "O-P", "O-R", "C-P", "C-R", "O-F1", "C-F1"],
            [[k, s.o_precision, s.o_recall, s.c_precision, s.c_recall,
              s.o_f1, s.c_f1] for k, s in sweep],
        )
        best_k, best = max(sweep, key=lambda ks: ks[1].o_f1)
        result = {
            "mode": mode,
            "sweep": [{"k": k, **s.as_dict()} for k, s in sweep],
            "best_k": best_k,
            "best": best.as_dict(),
        }
        files = {"curve": curve_path}
    elif mode == "predicted-k":
        if not cfg["pred"]:
            raise ConfigError("predicted-k evaluation needs a 'pred' file")
        _, pred_rows = formats.read_jsonl(cfg["pred"])
        if len(pred_rows) != len(records):
            raise DataError(
                f"{len(pred_rows)} predictions for {len(records)} records"
            )
        try:
            m_stars = [int(r["mode"]) for r in pred_rows]
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"prediction rows need an integer 'mode': {e}") from e
        summary = mlmetrics.predicted_k_eval(records, m_stars)
        result = {"mode": mode, "metrics": summary.as_dict()}
        files = {}
    else:
        raise ConfigError(f"unknown eval-ml mode {mode!r}")
    metrics_path = _outpath(out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(formats.canonical_json({**header, **result}))
        fh.write("\n")
    files["metrics"] = metrics_path
    return {"files": files, **result}


def cmd_eval_det(cfg: dict, out_dir: str) -> dict:
    dets = formats.read_boxes(cfg["dets"], with_score=True)
    gts = formats.read_boxes(cfg["gts"], with_score=False)
    image_ids = sorted(set(dets) | set(gts))
    if not image_ids:
        raise DataError("no images found in detection/ground-truth files")
    thresh = float(cfg["iou_thresh"])
    matches = [
        detect.match_detections(dets.get(i, []), gts.get(i, []), thresh)
        for i in image_ids
    ]
    n_images = int(cfg["n_images"]) if cfg["n_images"] else len(image_ids)
    f1 = detect.detection_f1(matches)
    best_f1 = detect.best_f1_over_thresholds(matches)
    mr = detect.log_avg_miss_rate(matches, n_images)
    miss, fppi = detect.miss_rate_curve(matches, n_images)
    header = formats.make_header(cfg, int(cfg["seed"]))
    curve_path = _outpath(out_dir, "curve.csv")
    _write_curve_csv(curve_path, header, ["fppi", "miss_rate"],
                     [[float(f), float(m)] for f, m in zip(fppi, miss)])
    result = {"f1": f1, "best_f1": best_f1, "mr": mr, "n_images": n_images}
    metrics_path = _outpath(out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(formats.canonical_json({**header, **result}))
        fh.write("\n")
    return {"files": {"curve": curve_path, "metrics": metrics_path}, **result}


def _mstar_lookup(cfg: dict, image_ids: list[int]) -> dict[int, int]:
    sources = [k for k in ("mstar_fixed", "mstar_file", "mstar_model")
               if cfg.get(k) is not None]
    if len(sources) != 1:
        raise ConfigError(
            "exactly one of mstar_fixed / mstar_file / mstar_model is required"
        )
    source = sources[0]
    if source == "mstar_fixed":
        m = int(cfg["mstar_fixed"])
        return {i: m for i in image_ids}
    if source == "mstar_file":
        _, rows = formats.read_jsonl(cfg["mstar_file"])
        try:
            table = {int(r["image_id"]): int(r["count"]) for r in rows}
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"m* rows need image_id and count: {e}") from e
        missing = [i for i in image_ids if i not in table]
        if missing:
            raise DataError(f"m* file lacks image ids {missing[:5]}")
        return table
    if not cfg.get("mstar_features"):
        raise ConfigError("mstar_model also needs mstar_features")
    model = cardnet.load_model(cfg["mstar_model"])
    feats = list(formats.iter_feature_rows(cfg["mstar_features"]))
    if len(feats) != len(image_ids):
        raise DataError(
            f"{len(feats)} feature rows for {len(image_ids)} images"
        )
    return {
        i: cardnet.predict_count(model, f) for i, f in zip(image_ids, feats)
    }


def cmd_nms(cfg: dict, out_dir: str) -> dict:
    proposals = formats.read_boxes(cfg["proposals"], with_score=True)
    image_ids = sorted(proposals)
    nms_cfg = detect.NMSConfig(t0=float(cfg["t0"]), step=float(cfg["step"]),
                               t_max=float(cfg["t_max"]))
    mstar = _mstar_lookup(cfg, image_ids)
    kept_total = 0
    out_images = []
    for i in image_ids:
        kept = detect.adaptive_nms(proposals[i], mstar[i], nms_cfg)
        kept_total += len(kept)
        out_images.append((i, kept))
    header = formats.make_header(cfg, int(cfg["seed"]))
    path = _outpath(out_dir, "kept.txt")
    formats.write_boxes(path, header, out_images, with_score=True)
    return {"files": {"kept": path}, "n_images": len(image_ids),
            "n_kept": kept_total}


def cmd_sample(cfg: dict, out_dir: str) -> dict:
    if cfg["card"] == "negbin":
        params = NegBinParams(a=float(cfg["a"]), b=float(cfg["b"]))
        pmf = nb_pmf_truncated(params)
    elif cfg["card"] == "pmf":
        if not cfg["pmf"]:
            raise ConfigError("card=pmf needs an explicit 'pmf' list")
        pmf = [float(p) for p in cfg["pmf"]]
    else:
        raise ConfigError(f"unknown cardinality spec {cfg['card']!r}")
    card = setinfer.CardinalityPMF(pmf=tuple(np.asarray(pmf) / np.sum(pmf)))
    if cfg["element"] == "categorical":
        probs = np.asarray([float(p) for p in cfg["probs"]])
        probs = probs / probs.sum()

        def sampler(rng: np.random.Generator):
            return int(rng.choice(len(probs), p=probs))
    elif cfg["element"] == "uniform":
        lo, hi = float(cfg["lo"]), float(cfg["hi"])
        if not hi > lo:
            raise ConfigError("uniform element law needs hi > lo")

        def sampler(rng: np.random.Generator):
            return float(rng.uniform(lo, hi))
    else:
        raise ConfigError(f"unknown element spec {cfg['element']!r}")
    rng = np.random.default_rng(int(cfg["seed"]))
    rows = [{"set": setinfer.sample_rfs_with(card, sampler, rng)}
            for _ in range(int(cfg["n"]))]
    header = formats.make_header(cfg, int(cfg["seed"]))
    path = _outpath(out_dir, "samples.jsonl")
    formats.write_jsonl(path, header, rows)
    sizes = [len(r["set"]) for r in rows]
    return {"files": {"samples": path}, "n": len(rows),
            "mean_cardinality": float(np.mean(sizes)) if sizes else 0.0}


def cmd_gradcheck(cfg: dict, out_dir: str) -> dict:
    rng = np.random.default_rng(int(cfg["seed"]))
    d = int(cfg["d"])
    kind = cfg["loss"]
    if kind not in ("negbin", "regression"):
        raise ConfigError(f"unknown loss {kind!r}")
    dims = [d] + [int(h) for h in cfg["hidden"]] + [2 if kind == "negbin" else 1]
    model = cardnet.init_model(dims, seed=int(cfg["seed"]), kind=kind)
    batch = [
        cardnet.TrainingSample(
            features=tuple(rng.uniform(-1.0, 1.0, size=d)),
            count=int(rng.poisson(4.0)),
        )
        for _ in range(int(cfg["batch"]))
    ]
    err = cardnet.gradient_check(model, batch, h=float(cfg["h"]))
    header = formats.make_header(cfg, int(cfg["seed"]))
    path = _outpath(out_dir, "gradcheck.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(formats.canonical_json({**header, "max_rel_error": err}))
        fh.write("\n")
    return {"files": {"report": path}, "max_rel_error": err}


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval-ml": cmd_eval_ml,
    "eval-det": cmd_eval_det,
    "nms": cmd_nms,
    "sample": cmd_sample,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setnet",
        description="Set prediction toolkit: cardinality model, inference, "
                    "NMS and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="overrides the config seed")
        p.add_argument("--out", default=".", help="artifact directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        if e.code not in (0, None):
            print(json.dumps({"code": "config",
                              "message": "invalid command line"}))
            return 1
        return 0
    try:
        config = _resolve_config(args.command, args.config, args.seed)
        result = COMMANDS[args.command](config, args.out)
        payload = {
            "command": args.command,
            "seed": int(config.get("seed", 0)),
            "config_hash": formats.config_hash(config),
            "config": config,
            **result,
        }
        print(json.dumps(payload, sort_keys=True))
        return 0
    except ConfigError as e:
        print(json.dumps({"code": "config", "message": str(e)}))
        return 1
    except (DataError, OSError) as e:
        print(json.dumps({"code": "data", "message": str(e)}))
        return 1
    except (SetnetError, ValueError, ArithmeticError) as e:
        print(json.dumps({"code": "numeric", "message": str(e)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
