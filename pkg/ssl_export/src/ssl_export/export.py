"""Feature and transcript export over a sepqe corpus manifest.

The exporter touches the toolkit only through its file contracts: WAV
audio in, RFQF feature files and JSONL manifest patches out. WER labels
are computed with the toolkit's own wer/normalize functions so the
primary's re-label pass reproduces them exactly.
"""

from __future__ import annotations

import json
import os
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sepqe.text import normalize_text, wer

from .asr import make_asr
from .backends import FRAME_RATE_HZ, make_encoder
from .rfqf import write_rfqf

AUDIO_TO_FEATURE_KEY = {"mixture": "mix", "est1": "est1", "est2": "est2"}


@dataclass
class ExportJob:
    manifest_path: str
    model: str = "local-conv"
    layer: int = -1
    out_dir: str | None = None  # defaults to the manifest's directory
    asr: str = "fixture"
    seed: int = 0

    def resolved_out_dir(self) -> Path:
        if self.out_dir is not None:
            return Path(self.out_dir)
        return Path(self.manifest_path).parent


def _read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: exporter expects mono 16-bit WAV")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return samples, rate


def _load_manifest(path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def _write_manifest(path, entries: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True) + "\n")


def export_features(job: ExportJob) -> dict:
    """Write one RFQF file per track per entry and patch feature paths.

    Returns the sidecar metadata (model, layer, dim, frame rate) that is
    also written next to the feature files.
    """
    manifest_path = Path(job.manifest_path)
    manifest_dir = manifest_path.parent
    out_dir = job.resolved_out_dir()
    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    encoder = make_encoder(job.model, seed=job.seed)
    entries = _load_manifest(manifest_path)
    dim = None
    for entry in entries:
        features = {}
        for audio_key, feature_key in AUDIO_TO_FEATURE_KEY.items():
            samples, rate = _read_wav(manifest_dir / entry["audio"][audio_key])
            feats = encoder.extract(samples, rate, layer=job.layer)
            dim = feats.shape[1] if dim is None else dim
            name = f"{entry['id']}.{feature_key}.rfqf"
            write_rfqf(feature_dir / name, feats)
            features[feature_key] = os.path.relpath(feature_dir / name, manifest_dir)
        entry["features"] = features
    _write_manifest(manifest_path, entries)
    metadata = {
        "model": job.model,
        "layer": job.layer,
        "dim": int(dim) if dim is not None else None,
        "frame_rate_hz": FRAME_RATE_HZ,
        "seed": job.seed,
        "n_entries": len(entries),
    }
    (feature_dir / "metadata.json").write_text(json.dumps(metadata, indent=2))
    return metadata


def export_transcripts(job: ExportJob) -> dict:
    """Transcribe both estimated tracks per entry, patch WER labels.

    Hypotheses are normalized with the toolkit's normalizer before
    scoring and storage, so relabeling from the written files is exact.
    Per-file ASR failures are skipped and reported, not fatal.
    """
    manifest_path = Path(job.manifest_path)
    manifest_dir = manifest_path.parent
    out_dir = job.resolved_out_dir()
    text_dir = out_dir / "text"
    text_dir.mkdir(parents=True, exist_ok=True)
    asr = make_asr(job.asr, fixture_root=manifest_dir)
    entries = _load_manifest(manifest_path)
    skipped = []
    for entry in entries:
        wers = {}
        for source in (1, 2):
            try:
                samples, rate = _read_wav(manifest_dir / entry["audio"][f"est{source}"])
                text = asr.transcribe(samples, rate, entry_id=entry["id"], source=source)
            except (FileNotFoundError, ValueError, RuntimeError) as exc:
                skipped.append({"id": entry["id"], "source": source, "error": str(exc)})
                continue
            hyp = normalize_text(text)
            name = f"{entry['id']}.hyp{source}.txt"
            (text_dir / name).write_text(" ".join(hyp) + "\n", encoding="utf-8")
            entry.setdefault("transcripts", {})[f"hyp{source}"] = \
                os.path.relpath(text_dir / name, manifest_dir)
            ref_path = manifest_dir / entry["transcripts"][f"ref{source}"]
            ref = normalize_text(ref_path.read_text(encoding="utf-8"))
            wers[source] = wer(ref, hyp).wer
        if len(wers) == 2:
            entry["labels"]["wer_s1"] = wers[1]
            entry["labels"]["wer_s2"] = wers[2]
            entry["labels"]["wer_avg"] = (wers[1] + wers[2]) / 2.0
    _write_manifest(manifest_path, entries)
    return {"n_entries": len(entries), "skipped": skipped, "asr": job.asr}
