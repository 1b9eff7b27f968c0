"""Command-line entry point.

Subcommands: build-dataset, train, evaluate, estimate, metrics. Exit
codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. SEPQE_LOG={debug,info,quiet} controls verbosity; every run logs
its resolved configuration and seed to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import dataset, estimator, report
from .audio import SeparationTriplet
from .errors import DataError, NumericsError, SepqeError
from .manifest import read_manifest, split_entries
from .sisnr import si_snr_pit
from .text import normalize_text, wer
from .wavio import read_wav

log = logging.getLogger("sepqe")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this toolkit reserves 2
    # for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "quiet": logging.ERROR}.get(os.environ.get("SEPQE_LOG", "info").lower(),
                                         logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return data


def build_parser() -> _Parser:
    parser = _Parser(prog="sepqe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    # Flags default to None so an explicit flag always beats the config
    # file, while absent flags fall through to it.
    p = sub.add_parser("build-dataset", parents=[], help="generate a labeled corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-valid", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="seconds per entry")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bins", type=int, default=None, help="WER histogram bin count")
    p.add_argument("--balance", type=int, default=0, metavar="CAP",
                   help="cap train entries per WER bin (0 = off)")
    p.add_argument("--config", help="JSON config file of BuildConfig fields")

    p = sub.add_parser("train", help="train an estimator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=estimator.MODES, default=None)
    p.add_argument("--features", choices=estimator.FEATURE_SOURCES, default=None)
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None,
                   help="warmup steps (default: 10%% of steps)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="JSON file of EstimatorConfig fields")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--metric", choices=("wer", "sisnr"),
                   help="require this metric head (must match the checkpoint)")
    p.add_argument("--out", help="write the JSON report here")

    p = sub.add_parser("estimate", help="predict metrics for one triplet")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mix")
    p.add_argument("--est1")
    p.add_argument("--est2")
    p.add_argument("--features", nargs=3, metavar=("F_MIX", "F_EST1", "F_EST2"),
                   help="three RFQF files instead of WAVs")

    p = sub.add_parser("metrics", help="reference-based oracle metrics")
    p.add_argument("--ref1", required=True)
    p.add_argument("--ref2", required=True)
    p.add_argument("--est1", required=True)
    p.add_argument("--est2", required=True)
    p.add_argument("--ref-text", action="append", default=[],
                   help="reference transcript file (repeatable)")
    p.add_argument("--hyp-text", action="append", default=[],
                   help="hypothesis transcript file (repeatable)")
    return parser


def _cmd_build_dataset(args) -> int:
    overrides = _load_config_file(args.config)
    allowed = {"n_train", "n_valid", "n_test", "duration_s", "sample_rate",
               "seed", "bins", "mean_words", "mix_snr_range_db"}
    unknown = set(overrides) - allowed
    if unknown:
        raise DataError(f"unknown build config keys: {sorted(unknown)}")
    cfg_kwargs = dict(overrides)
    if "mix_snr_range_db" in cfg_kwargs:
        cfg_kwargs["mix_snr_range_db"] = tuple(cfg_kwargs["mix_snr_range_db"])
    for key, flag_value in (("n_train", args.n_train), ("n_valid", args.n_valid),
                            ("n_test", args.n_test), ("duration_s", args.duration),
                            ("seed", args.seed), ("bins", args.bins)):
        if flag_value is not None:
            cfg_kwargs[key] = flag_value
    config = dataset.BuildConfig(**cfg_kwargs)
    log.info("resolved build config: %s", json.dumps(
        {k: getattr(config, k) for k in allowed - {"mix_snr_range_db"}},
        sort_keys=True))
    out_dir = Path(args.out)
    entries = dataset.build_corpus(config, out_dir)
    if args.balance > 0:
        train = dataset.balance_bins(split_entries(entries, "train"),
                                     config.bins, args.balance, seed=config.seed)
        entries = train + [e for e in entries if e.split != "train"]
        from .manifest import write_manifest

        write_manifest(out_dir / "manifest.jsonl", entries)
        log.info("balanced train split to %d entries", len(train))
    stats_report = dataset.stats(entries, out_dir, n_bins=config.bins)
    (out_dir / "stats.json").write_text(json.dumps(stats_report, indent=2))
    print(dataset.render_stats_table(stats_report))
    log.info("wrote %d entries under %s", len(entries), out_dir)
    return EXIT_OK


def _cmd_train(args) -> int:
    overrides = _load_config_file(args.config)
    valid = {f.name for f in dataclasses.fields(estimator.EstimatorConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise DataError(f"unknown estimator config keys: {sorted(unknown)}")
    cfg_kwargs = dict(overrides)
    for key, flag_value in (("metric_mode", args.mode),
                            ("feature_source", args.features),
                            ("total_steps", args.steps),
                            ("warmup_steps", args.warmup),
                            ("seed", args.seed)):
        if flag_value is not None:
            cfg_kwargs[key] = flag_value
    if args.freeze_encoder:
        cfg_kwargs["encoder_trainable"] = False
    cfg_kwargs.setdefault("total_steps", 2000)
    cfg_kwargs.setdefault("warmup_steps", max(1, cfg_kwargs["total_steps"] // 10))
    config = estimator.EstimatorConfig(**cfg_kwargs)
    log.info("resolved train config: %s", json.dumps(dataclasses.asdict(config)))
    model, train_log = estimator.fit_manifest(config, args.manifest)
    estimator.save(model, args.out)
    log_path = Path(args.out).with_suffix(Path(args.out).suffix + ".log.json")
    log_path.write_text(json.dumps(train_log.to_dict()))
    if not train_log.encoder_group_active:
        log.info("encoder group LR inactive (frozen or file-backed features)")
    log.info("final step loss %.6g, best valid MSE %.6g at step %d; "
             "checkpoint %s, log %s", train_log.step_losses[-1],
             train_log.best_valid_mse, train_log.best_step, args.out, log_path)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model = estimator.load(args.ckpt)
    mode = model.config.metric_mode
    if args.metric and mode != "joint" and mode != args.metric:
        raise DataError(f"checkpoint was trained for {mode!r} and has no "
                        f"{args.metric!r} head")
    manifest_path = Path(args.manifest)
    entries = split_entries(read_manifest(manifest_path), args.split)
    result = report.evaluate(model, entries, manifest_path.parent,
                             meta={"ckpt": str(args.ckpt), "split": args.split,
                                   "manifest": str(manifest_path)})
    text = result.to_json()
    if args.out:
        Path(args.out).write_text(text)
        log.info("wrote report to %s", args.out)
    print(result.render_table())
    if not args.out:
        print(text)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    model = estimator.load(args.ckpt)
    if args.features:
        from .features import read_features

        feats = [read_features(p) for p in args.features]
        labels = estimator.predict_from_features(model, *feats)
    else:
        if not (args.mix and args.est1 and args.est2):
            raise DataError("estimate needs --mix/--est1/--est2 or --features")
        triplet = SeparationTriplet(
            mixture=read_wav(args.mix),
            estimates=(read_wav(args.est1), read_wav(args.est2)))
        labels = estimator.predict(model, triplet)
    print(json.dumps(labels.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_metrics(args) -> int:
    refs = (read_wav(args.ref1), read_wav(args.ref2))
    ests = (read_wav(args.est1), read_wav(args.est2))
    result = si_snr_pit(refs, ests)
    out = {
        "sisnr": {
            "per_source": list(result.per_source),
            "average": result.average,
            "permutation": list(result.permutation),
        }
    }
    if args.ref_text or args.hyp_text:
        if len(args.ref_text) != len(args.hyp_text):
            raise DataError("--ref-text and --hyp-text must be paired")
        out["wer"] = []
        for ref_path, hyp_path in zip(args.ref_text, args.hyp_text):
            ref = normalize_text(Path(ref_path).read_text(encoding="utf-8"))
            hyp = normalize_text(Path(hyp_path).read_text(encoding="utf-8"))
            b = wer(ref, hyp)
            out["wer"].append({
                "substitutions": b.substitutions, "deletions": b.deletions,
                "insertions": b.insertions, "ref_len": b.ref_len, "wer": b.wer,
            })
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "build-dataset": _cmd_build_dataset,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "estimate": _cmd_estimate,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NumericsError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except SepqeError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
