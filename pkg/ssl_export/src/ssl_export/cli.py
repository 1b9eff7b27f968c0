"""Command line for the export helper: features and transcripts subcommands."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportJob, export_features, export_transcripts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssl-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="write RFQF features per track per entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default="local-conv",
                   choices=["local-conv", "wav2vec2", "wavlm", "hubert"])
    p.add_argument("--layer", type=int, default=-1,
                   help="encoder stage to export (-1 = final hidden layer)")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("transcripts", help="run ASR, write hypotheses, patch WER labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--asr", default="fixture", choices=["fixture", "whisper"])
    p.add_argument("--out-dir", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(manifest_path=args.manifest,
                    model=getattr(args, "model", "local-conv"),
                    layer=getattr(args, "layer", -1),
                    out_dir=args.out_dir,
                    asr=getattr(args, "asr", "fixture"),
                    seed=getattr(args, "seed", 0))
    try:
        if args.command == "features":
            result = export_features(job)
        else:
            result = export_transcripts(job)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"ssl-export: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
