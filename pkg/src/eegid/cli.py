"""Batch command-line front end for the identification pipeline.

Subcommands: `pipeline` (preprocess, delta decomposition, attention-RNN
feature learning, boosted-tree classification, held-out evaluation),
`compare-patterns` (the same pipeline over all six bands with a shared
split), `correlate` (the inter-subject correlation study), and `identify`
(apply saved models to new samples). Every artifact embeds the effective
configuration and root seed; reruns reproduce report JSON byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import eegid
from eegid import boost as boostmod
from eegid import data as datamod
from eegid import nn as nnmod
from eegid import plots
from eegid.evaluate import full_report, inter_subject_correlation, roc_points_csv
from eegid.signal import BAND_NAMES, Band, decompose, remove_dc, zscore_normalize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
EXIT_EVALUATION = 5

ALL_BANDS = ("delta", "theta", "alpha", "beta", "gamma", "full")

PRESETS = {
    # desk-scale settings keep the full acceptance suite in the minutes range
    "ci": {"network": {"hidden_dim": 64, "lstm_cells": 64, "decoder_hidden": 64, "n_iter": 200},
           "boost": {"rounds": 50}},
    # library defaults already mirror the published training scale
    "paper": {"network": {}, "boost": {}},
}

NETWORK_KEYS = {"hidden_dim", "encoder_dense_layers", "lstm_cells", "decoder_hidden",
                "seq_len", "learning_rate", "l2_lambda", "n_iter", "batch_count"}
BOOST_KEYS = {"eta", "subsample", "max_depth", "rounds", "reg_lambda", "gamma"}
DATASET_KINDS = {"synthetic", "csv", "edf"}


class ConfigError(ValueError):
    pass


class StageFailure(Exception):
    def __init__(self, stage: str, code: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.code = code
        self.cause = cause


@contextmanager
def _stage(name: str, code: int):
    try:
        yield
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(name, code, exc) from exc


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    dataset: dict
    out_dir: Path
    band: str = "delta"
    dc_offset: float = 0.0
    test_fraction: float = 0.125
    seed: int = 0
    network: dict = field(default_factory=dict)
    boost: dict = field(default_factory=dict)
    correlate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "out_dir": str(self.out_dir),
            "band": self.band,
            "dc_offset": self.dc_offset,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "network": self.network,
            "boost": self.boost,
            "correlate": self.correlate,
        }


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    out.update(override)
    return out


def resolve_config(config_path: str | None, preset: str | None, seed: int | None,
                   band: str | None, out_dir: str | None) -> RunConfig:
    """Layer defaults < preset < config file < command-line flags."""
    doc: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

    known = {"dataset", "band", "dc_offset", "test_fraction", "seed",
             "network", "boost", "correlate", "out_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    preset_doc = PRESETS[preset] if preset else {"network": {}, "boost": {}}

    network = _merge(preset_doc["network"], doc.get("network", {}))
    boost_cfg = _merge(preset_doc["boost"], doc.get("boost", {}))
    bad = set(network) - NETWORK_KEYS
    if bad:
        raise ConfigError(f"unknown network settings: {sorted(bad)}")
    bad = set(boost_cfg) - BOOST_KEYS
    if bad:
        raise ConfigError(f"unknown boost settings: {sorted(bad)}")

    dataset = doc.get("dataset")
    if dataset is None:
        raise ConfigError("config must declare a dataset")
    if not isinstance(dataset, dict) or dataset.get("kind") not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind must be one of {sorted(DATASET_KINDS)}")

    resolved_band = (band or doc.get("band", "delta")).lower()
    if resolved_band not in BAND_NAMES:
        raise ConfigError(f"unknown band {resolved_band!r}; expected one of {BAND_NAMES}")

    out = out_dir or doc.get("out_dir")
    if out is None:
        raise ConfigError("an output directory is required (--out)")

    correlate = _merge({"window_len": 128, "pairs": 100, "bands": list(ALL_BANDS)},
                       doc.get("correlate", {}))

    return RunConfig(
        dataset=dataset,
        out_dir=Path(out),
        band=resolved_band,
        dc_offset=float(doc.get("dc_offset", 0.0)),
        test_fraction=float(doc.get("test_fraction", 0.125)),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        network=network,
        boost=boost_cfg,
        correlate=correlate,
    )


# ---------------------------------------------------------------------------
# Dataset loading

def load_dataset(config: RunConfig) -> list:
    """Raw recordings per the dataset block of the config."""
    ds = config.dataset
    kind = ds["kind"]
    if kind == "synthetic":
        spec = datamod.SyntheticSpec(
            subjects=int(ds.get("subjects", 8)),
            channels=int(ds.get("channels", 14)),
            rate_hz=float(ds.get("rate_hz", 128.0)),
            duration_s=float(ds.get("duration_s", 60.0)),
            oscillators_per_subject=int(ds.get("oscillators_per_subject", 3)),
            noise_level=float(ds.get("noise_level", 2.0)),
            seed=int(ds.get("seed", config.seed)),
            mixing_seed=ds.get("mixing_seed"),
        )
        return datamod.synth_generate(spec)
    if kind == "csv":
        if "path" not in ds:
            raise datamod.DataFormatError("csv dataset needs a 'path'")
        return datamod.load_csv(ds["path"], rate_hz=ds.get("rate_hz"))
    # kind == "edf": one file per subject, label = list position
    paths = ds.get("paths")
    if paths is None:
        root = ds.get("dir")
        if root is None:
            raise datamod.DataFormatError("edf dataset needs 'paths' or 'dir'")
        subjects = int(ds.get("subjects", 8))
        run = int(ds.get("run", 2))  # baseline run recorded with eyes closed
        paths = []
        for s in range(1, subjects + 1):
            name = f"S{s:03d}R{run:02d}.edf"
            nested = Path(root) / f"S{s:03d}" / name
            flat = Path(root) / name
            paths.append(str(nested if nested.exists() else flat))
    max_samples = ds.get("samples_per_subject", 7000)
    recordings = []
    for label, path in enumerate(paths):
        if not Path(path).exists():
            raise datamod.DataFormatError(f"EDF file {path} not found")
        recordings.append(datamod.load_edf(path, subject=label,
                                           max_samples=int(max_samples) if max_samples else None))
    return recordings


def preprocess_recordings(recordings: list, dc_offset: float) -> list:
    return [zscore_normalize(remove_dc(rec, dc_offset)) for rec in recordings]


# ---------------------------------------------------------------------------
# Pipeline core (shared by `pipeline` and `compare-patterns`)

def run_band_pipeline(preprocessed: list, band_name: str, config: RunConfig) -> dict:
    """Decompose, learn features, boost, and evaluate one band.

    The split depends only on (row count, seed), so every band sees the
    same train/test partition of the same sample rows.
    """
    rate = preprocessed[0].rate_hz
    num_classes = max(rec.subject for rec in preprocessed) + 1
    band = Band.named(band_name, rate)

    with _stage("data", EXIT_DATA):
        decomposed = [decompose(rec, band) for rec in preprocessed]
        samples = datamod.samples_from_recordings(decomposed, num_classes=num_classes)
        train_set, test_set = datamod.split(samples, config.test_fraction, config.seed)

    with _stage("training", EXIT_TRAINING):
        net_config = nnmod.NetworkConfig(
            input_dim=samples.features.shape[1], output_dim=num_classes,
            seed=config.seed, **config.network)
        model = nnmod.AttentionRnn.initialize(net_config)
        history = nnmod.train(model, train_set.features, train_set.labels)
        train_features = nnmod.feature_matrix(model, train_set.features)
        test_features = nnmod.feature_matrix(model, test_set.features)
        boost_config = boostmod.BoostConfig(seed=config.seed, **config.boost)
        booster = boostmod.train_boost(train_features, train_set.labels, boost_config,
                                       num_classes=num_classes)

    with _stage("evaluation", EXIT_EVALUATION):
        predicted, probabilities = boostmod.predict_batch(booster, test_features)
        report = full_report(test_set.labels, predicted, probabilities, num_classes)

    return {
        "band": band_name,
        "rate_hz": rate,
        "num_classes": num_classes,
        "n_train": len(train_set),
        "n_test": len(test_set),
        "model": model,
        "booster": booster,
        "history": history,
        "report": report,
    }


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "eegid": eegid.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": ".".join(map(str, sys.version_info[:2])),
    }


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, config: RunConfig, command: str):
    _write_json(out / "run_manifest.json",
                {"command": command, "config": config.to_dict(), "seed": config.seed,
                 "versions": _versions()})


# ---------------------------------------------------------------------------
# Commands

def cmd_pipeline(config: RunConfig) -> int:
    with _stage("data", EXIT_DATA):
        recordings = load_dataset(config)
        preprocessed = preprocess_recordings(recordings, config.dc_offset)
    result = run_band_pipeline(preprocessed, config.band, config)

    with _stage("evaluation", EXIT_EVALUATION):
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, config, "pipeline")
        pipeline_meta = {"band": result["band"], "rate_hz": result["rate_hz"],
                         "dc_offset": config.dc_offset}
        nnmod.save_model(result["model"], out / "rnn_model.json", pipeline=pipeline_meta)
        boostmod.save_boost(result["booster"], out / "boost_model.json")
        report_doc = result["report"].to_dict()
        report_doc.update({"band": result["band"], "seed": config.seed,
                           "n_train": result["n_train"], "n_test": result["n_test"]})
        _write_json(out / "report.json", report_doc)
        (out / "roc.csv").write_text(roc_points_csv(result["report"]))
        (out / "training_loss.csv").write_text(
            "iteration,loss\n" + "\n".join(f"{i},{v!r}" for i, v in enumerate(result["history"])) + "\n")
        plots.save_confusion_matrix(result["report"], out / "confusion_matrix.png")
        plots.save_roc_curves(result["report"], out / "roc_curves.png")
        plots.save_training_loss(result["history"], out / "training_loss.png")

    print(f"pipeline: band={result['band']} accuracy={result['report'].accuracy:.4f} "
          f"n_test={result['n_test']} -> {config.out_dir}")
    return EXIT_OK


def cmd_compare_patterns(config: RunConfig) -> int:
    with _stage("data", EXIT_DATA):
        recordings = load_dataset(config)
        preprocessed = preprocess_recordings(recordings, config.dc_offset)

    results = [run_band_pipeline(preprocessed, band, config) for band in ALL_BANDS]

    with _stage("evaluation", EXIT_EVALUATION):
        accuracies = {r["band"]: r["report"].accuracy for r in results}
        best = max(accuracies, key=accuracies.get)
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, config, "compare-patterns")
        _write_json(out / "comparison.json",
                    {"accuracy_by_band": accuracies, "best_band": best, "seed": config.seed})
        (out / "comparison.csv").write_text(
            "band,accuracy\n" + "\n".join(f"{b},{a!r}" for b, a in accuracies.items()) + "\n")
        plots.save_band_accuracy(accuracies, out / "comparison.png")
        for result in results:
            band_dir = out / "bands" / result["band"]
            band_dir.mkdir(parents=True, exist_ok=True)
            doc = result["report"].to_dict()
            doc.update({"band": result["band"], "seed": config.seed})
            _write_json(band_dir / "report.json", doc)

    for band in ALL_BANDS:
        print(f"compare-patterns: {band:6s} accuracy={accuracies[band]:.4f}")
    print(f"compare-patterns: best={best} -> {config.out_dir}")
    return EXIT_OK


def cmd_correlate(config: RunConfig) -> int:
    with _stage("data", EXIT_DATA):
        recordings = load_dataset(config)
        preprocessed = preprocess_recordings(recordings, config.dc_offset)
        by_subject: dict[int, list] = {}
        for rec in preprocessed:
            by_subject.setdefault(rec.subject, []).append(rec)

    with _stage("evaluation", EXIT_EVALUATION):
        rate = preprocessed[0].rate_hz
        bands = [Band.named(name, rate) for name in config.correlate["bands"]]
        table = inter_subject_correlation(
            by_subject, bands, window_len=int(config.correlate["window_len"]),
            pairs=int(config.correlate["pairs"]), seed=config.seed)
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, config, "correlate")
        _write_json(out / "correlation.json", table.to_dict())
        (out / "correlation.txt").write_text(table.format_text())
        plots.save_correlation_heatmap(table, out / "correlation.png")

    lowest = table.bands[int(np.argmin(table.average))]
    print(table.format_text(), end="")
    print(f"correlate: lowest average band = {lowest} -> {config.out_dir}")
    return EXIT_OK


def cmd_identify(rnn_path: str, boost_path: str, samples_path: str) -> int:
    with _stage("config", EXIT_CONFIG):
        model = nnmod.load_model(rnn_path)
        pipeline_meta = nnmod.load_pipeline_metadata(rnn_path)
        if pipeline_meta is None:
            raise ConfigError(f"{rnn_path} carries no pipeline metadata "
                              "(band/rate/dc_offset); cannot preprocess samples")
        booster = boostmod.load_boost(boost_path)

    with _stage("data", EXIT_DATA):
        recordings = datamod.load_csv(samples_path, rate_hz=pipeline_meta["rate_hz"],
                                      allow_empty=True)
        if not recordings:
            return EXIT_OK
        for rec in recordings:
            if rec.n_channels != model.config.input_dim:
                raise datamod.DataFormatError(
                    f"sample file has {rec.n_channels} channels, model expects "
                    f"{model.config.input_dim}")
        band = Band.named(pipeline_meta["band"], pipeline_meta["rate_hz"])
        decomposed = [decompose(rec, band)
                      for rec in preprocess_recordings(recordings, pipeline_meta["dc_offset"])]

    with _stage("evaluation", EXIT_EVALUATION):
        for rec in decomposed:
            features = nnmod.feature_matrix(model, rec.samples)
            classes, probabilities = boostmod.predict_batch(booster, features)
            for cls, probs in zip(classes, probabilities):
                print(f"{cls} " + " ".join(f"{p:.6f}" for p in probs))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point

def _add_common(parser):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="settings preset")
    parser.add_argument("--seed", type=int, help="root seed (overrides the config)")
    parser.add_argument("--out", help="output directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegid",
                                     description="EEG-based person identification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="train and evaluate on one band")
    _add_common(p)
    p.add_argument("--band", choices=BAND_NAMES, help="frequency band to use")

    p = sub.add_parser("compare-patterns", help="run the pipeline over all six bands")
    _add_common(p)

    p = sub.add_parser("correlate", help="inter-subject correlation study")
    _add_common(p)

    p = sub.add_parser("identify", help="predict subject IDs with saved models")
    p.add_argument("--rnn", required=True, help="saved attention-RNN model JSON")
    p.add_argument("--boost", required=True, help="saved boosted-trees model JSON")
    p.add_argument("samples", help="CSV sample file (ch1..chN,subject,trial)")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "identify":
            return cmd_identify(args.rnn, args.boost, args.samples)
        with _stage("config", EXIT_CONFIG):
            config = resolve_config(args.config, args.preset, args.seed,
                                    getattr(args, "band", None), args.out)
        if args.command == "pipeline":
            return cmd_pipeline(config)
        if args.command == "compare-patterns":
            return cmd_compare_patterns(config)
        return cmd_correlate(config)
    except StageFailure as failure:
        print(f"eegid: {failure}", file=sys.stderr)
        return failure.code


if __name__ == "__main__":
    sys.exit(main())
