"""Desk-scale labeled corpus generation.

Every entry couples its audio degradation level to its transcript
corruption rate, so both SI-SNR and WER labels are (noisily) inferable
from the audio triplet alone. Three degradation regimes stand in for
separator checkpoints of increasing quality; label balance comes from the
regime mix plus optional WER-bin capping.

Per-entry randomness derives from (seed, split, index) alone, so corpora
are bit-reproducible regardless of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .audio import AudioSignal, degrade, mix, synth_noise, synth_source
from .errors import DataError
from .manifest import (ManifestEntry, MetricLabels, read_manifest, write_manifest)
from .sisnr import si_snr_pit
from .text import VOCAB, corrupt_transcript, wer
from .wavio import quantized, wav_duration_s, write_wav

DEFAULT_REGIMES = {"early": (0.6, 1.0), "mid": (0.3, 0.7), "late": (0.0, 0.4)}

_SPLIT_CODE = {"train": 0, "valid": 1, "test": 2}


def default_wer_coupling(delta: float) -> float:
    """Monotone map from audio degradation to transcript corruption rate."""
    return 0.9 * delta


@dataclass
class BuildConfig:
    n_train: int = 32
    n_valid: int = 8
    n_test: int = 8
    duration_s: float = 1.0
    sample_rate: int = 16000
    regimes: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_REGIMES))
    wer_coupling: Callable[[float], float] = default_wer_coupling
    bins: int = 10
    seed: int = 0
    mix_snr_range_db: tuple[float, float] = (5.0, 20.0)
    mean_words: int = 16

    def __post_init__(self):
        for name, count in (("n_train", self.n_train), ("n_valid", self.n_valid),
                            ("n_test", self.n_test)):
            if count < 1:
                raise DataError(f"{name} must be >= 1, got {count}")
        if self.bins < 1:
            raise DataError(f"bins must be >= 1, got {self.bins}")
        if self.duration_s <= 0:
            raise DataError("duration_s must be positive")
        for name, (lo, hi) in self.regimes.items():
            if not (0.0 <= lo < hi <= 1.0):
                raise DataError(f"regime {name!r} range [{lo}, {hi}] not within [0, 1]")

    def split_counts(self) -> dict[str, int]:
        return {"train": self.n_train, "valid": self.n_valid, "test": self.n_test}


@dataclass
class GeneratedExample:
    """One synthetic triplet with quantized signals and oracle labels."""

    entry_id: str
    split: str
    regime: str
    delta: float
    mixture: AudioSignal
    references: tuple[AudioSignal, AudioSignal]
    estimates: tuple[AudioSignal, AudioSignal]
    ref_transcripts: tuple[list[str], list[str]]
    hyp_transcripts: tuple[list[str], list[str]]
    labels: MetricLabels


def generate_example(config: BuildConfig, split: str, index: int,
                     delta: float | None = None) -> GeneratedExample:
    """Deterministically build one entry's signals, transcripts, and labels.

    ``delta`` overrides the regime-sampled degradation level (used by
    tests to probe the delta=0 endpoint).
    """
    if split not in _SPLIT_CODE:
        raise DataError(f"unknown split {split!r}")
    ss = np.random.SeedSequence([config.seed, _SPLIT_CODE[split], index])
    rng = np.random.default_rng(ss)
    seeds = rng.integers(0, 2**62, size=8)

    s1 = synth_source(int(seeds[0]), config.duration_s, config.sample_rate)
    s2 = synth_source(int(seeds[1]), config.duration_s, config.sample_rate)
    noise = synth_noise(int(seeds[2]), config.duration_s, config.sample_rate)

    regime_names = sorted(config.regimes)
    regime = regime_names[int(rng.integers(len(regime_names)))]
    lo, hi = config.regimes[regime]
    if delta is None:
        delta = float(rng.uniform(lo, hi))

    snr_db = float(rng.uniform(*config.mix_snr_range_db))
    mixture = mix((s1, s2), noise, snr_db)
    est1 = degrade(s1, s2, noise, delta, int(seeds[3]))
    est2 = degrade(s2, s1, noise, delta, int(seeds[4]))

    # Labels are computed on the 16-bit-quantized signals exactly as a
    # re-reader will see them, so a relabel pass reproduces them bit-for-bit.
    s1q, s2q = quantized(s1), quantized(s2)
    e1q, e2q = quantized(est1), quantized(est2)
    sisnr = si_snr_pit((s1q, s2q), (e1q, e2q))

    refs = []
    hyps = []
    wers = []
    for k in range(2):
        n_words = max(4, int(rng.poisson(config.mean_words)))
        ref = [VOCAB[i] for i in rng.integers(0, len(VOCAB), size=n_words)]
        rate = config.wer_coupling(delta) * float(rng.uniform(0.85, 1.15))
        rate = min(1.0, max(0.0, rate))
        hyp = corrupt_transcript(ref, rate, int(seeds[5 + k]))
        refs.append(ref)
        hyps.append(hyp)
        wers.append(wer(ref, hyp).wer)

    labels = MetricLabels(
        wer_s1=wers[0], wer_s2=wers[1], wer_avg=(wers[0] + wers[1]) / 2.0,
        sisnr_s1=sisnr.per_source[0], sisnr_s2=sisnr.per_source[1],
        sisnr_avg=sisnr.average)
    return GeneratedExample(
        entry_id=f"{split}-{index:05d}", split=split, regime=regime, delta=delta,
        mixture=quantized(mixture), references=(s1q, s2q), estimates=(e1q, e2q),
        ref_transcripts=(refs[0], refs[1]), hyp_transcripts=(hyps[0], hyps[1]),
        labels=labels)


def _write_example(example: GeneratedExample, out_dir: Path) -> ManifestEntry:
    eid = example.entry_id
    audio = {}
    for key, sig in (("mixture", example.mixture),
                     ("est1", example.estimates[0]),
                     ("est2", example.estimates[1]),
                     ("ref1", example.references[0]),
                     ("ref2", example.references[1])):
        rel = f"wav/{eid}.{key}.wav"
        write_wav(out_dir / rel, sig)
        audio[key] = rel
    transcripts = {}
    for key, tokens in (("ref1", example.ref_transcripts[0]),
                        ("ref2", example.ref_transcripts[1]),
                        ("hyp1", example.hyp_transcripts[0]),
                        ("hyp2", example.hyp_transcripts[1])):
        rel = f"text/{eid}.{key}.txt"
        (out_dir / rel).write_text(" ".join(tokens) + "\n", encoding="utf-8")
        transcripts[key] = rel
    return ManifestEntry(id=eid, split=example.split, audio=audio,
                         labels=example.labels, regime=example.regime,
                         transcripts=transcripts)


def build_corpus(config: BuildConfig, out_dir) -> list[ManifestEntry]:
    """Generate all splits, write WAVs/transcripts/manifest, return entries."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "text").mkdir(parents=True, exist_ok=True)
    entries = []
    for split, count in config.split_counts().items():
        for index in range(count):
            example = generate_example(config, split, index)
            entries.append(_write_example(example, out_dir))
    write_manifest(out_dir / "manifest.jsonl", entries)
    return entries


def relabel_entry(entry: ManifestEntry, root) -> MetricLabels:
    """Recompute labels from the stored files (the label-consistency check)."""
    from .text import normalize_text
    from .wavio import read_wav

    root = Path(root)
    refs = tuple(read_wav(root / entry.audio[k]) for k in ("ref1", "ref2"))
    ests = tuple(read_wav(root / entry.audio[k]) for k in ("est1", "est2"))
    sisnr = si_snr_pit(refs, ests)
    wers = []
    for k in (1, 2):
        ref = normalize_text((root / entry.transcripts[f"ref{k}"]).read_text())
        hyp = normalize_text((root / entry.transcripts[f"hyp{k}"]).read_text())
        wers.append(wer(ref, hyp).wer)
    return MetricLabels(
        wer_s1=wers[0], wer_s2=wers[1], wer_avg=(wers[0] + wers[1]) / 2.0,
        sisnr_s1=sisnr.per_source[0], sisnr_s2=sisnr.per_source[1],
        sisnr_avg=sisnr.average)


def balance_bins(entries: list[ManifestEntry], n_bins: int, per_bin_cap: int,
                 seed: int = 0) -> list[ManifestEntry]:
    """Cap each equal-width wer_avg bin at ``per_bin_cap`` entries.

    Bins span the observed range; nonempty bins keep at least one entry.
    """
    if not entries:
        raise DataError("cannot balance an empty manifest")
    if n_bins < 1 or per_bin_cap < 1:
        raise DataError("n_bins and per_bin_cap must be >= 1")
    values = np.array([e.labels.wer_avg for e in entries])
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        bin_idx = np.zeros(len(entries), dtype=int)
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
        bin_idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, n_bins - 1)
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for b in range(n_bins):
        members = np.nonzero(bin_idx == b)[0]
        if members.size == 0:
            continue
        if members.size > per_bin_cap:
            members = rng.choice(members, size=per_bin_cap, replace=False)
        keep.extend(int(i) for i in members)
    keep.sort()
    return [entries[i] for i in keep]


def stats(entries: list[ManifestEntry], root, n_bins: int = 10) -> dict:
    """Per-split corpus statistics plus the WER-bin histogram.

    Durations come from WAV headers, word counts from reference
    transcripts; WER spread uses the population standard deviation.
    """
    root = Path(root)
    all_wer = np.array([e.labels.wer_avg for e in entries]) if entries else np.array([0.0])
    span_lo = float(all_wer.min())
    span_hi = float(all_wer.max())
    if span_hi == span_lo:
        span_hi = span_lo + 1e-9
    edges = np.linspace(span_lo, span_hi, n_bins + 1)
    report: dict = {"bin_edges": [float(e) for e in edges], "splits": {}}
    for split in ("train", "valid", "test"):
        selected = [e for e in entries if e.split == split]
        if not selected:
            continue
        durations = [wav_duration_s(root / e.audio["mixture"]) for e in selected]
        words = []
        for e in selected:
            for key in ("ref1", "ref2"):
                if e.transcripts and key in e.transcripts:
                    words.append(len((root / e.transcripts[key]).read_text().split()))
        wers = np.array([e.labels.wer_avg for e in selected])
        idx = np.clip(np.searchsorted(edges, wers, side="right") - 1, 0, n_bins - 1)
        counts = np.bincount(idx, minlength=n_bins)
        pct = 100.0 * counts / counts.sum()
        report["splits"][split] = {
            "total_dur_h": float(sum(durations)) / 3600.0,
            "avg_dur_s": float(np.mean(durations)),
            "n_seg": len(selected),
            "avg_words": float(np.mean(words)) if words else math.nan,
            "wer_mean": float(wers.mean()),
            "wer_std": float(wers.std()),  # population
            "wer_bin_pct": [float(p) for p in pct],
        }
    return report


def render_stats_table(report: dict) -> str:
    """Aligned text table over the stats report's per-split rows."""
    header = ["Split", "Total Dur. (h)", "Avg Dur. (s)", "#Seg", "Avg #WRD",
              "Avg WER", "Std Dev of WER"]
    rows = [header]
    for split, s in report["splits"].items():
        rows.append([
            split,
            f"{s['total_dur_h']:.3f}",
            f"{s['avg_dur_s']:.2f}",
            str(s["n_seg"]),
            f"{s['avg_words']:.2f}",
            f"{100.0 * s['wer_mean']:.2f}%",
            f"{100.0 * s['wer_std']:.2f}%",
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


def export_toy_features(manifest_path, encoder_params=None, seed: int = 0) -> int:
    """Optional pre-extraction pass: write toy-encoder RFQF files per track.

    Patches feature paths into the manifest so training can run with
    ``feature_source="files"``; returns the number of entries processed.
    """
    from .encoder import extract, init_encoder_params
    from .features import write_features
    from .manifest import FEATURE_TRACKS
    from .wavio import read_wav

    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    feature_dir = root / "features"
    feature_dir.mkdir(exist_ok=True)
    if encoder_params is None:
        encoder_params = init_encoder_params(np.random.default_rng(seed))
    entries = read_manifest(manifest_path)
    audio_keys = dict(zip(FEATURE_TRACKS, ("mixture", "est1", "est2")))
    for entry in entries:
        features = {}
        for track, audio_key in audio_keys.items():
            feats = extract(read_wav(root / entry.audio[audio_key]), encoder_params)
            rel = f"features/{entry.id}.{track}.rfqf"
            write_features(root / rel, feats)
            features[track] = rel
        entry.features = features
    write_manifest(manifest_path, entries)
    return len(entries)


def verify_labels(manifest_path, sisnr_tol_db: float = 0.01) -> int:
    """Relabel every entry from disk and compare; returns entries checked."""
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    root = manifest_path.parent
    for entry in entries:
        fresh = relabel_entry(entry, root)
        stored = entry.labels
        for name in ("wer_s1", "wer_s2", "wer_avg"):
            if getattr(fresh, name) != getattr(stored, name):
                raise DataError(f"entry {entry.id}: stored {name} "
                                f"{getattr(stored, name)} != recomputed {getattr(fresh, name)}")
        for name in ("sisnr_s1", "sisnr_s2", "sisnr_avg"):
            if abs(getattr(fresh, name) - getattr(stored, name)) > sisnr_tol_db:
                raise DataError(f"entry {entry.id}: stored {name} deviates by more "
                                f"than {sisnr_tol_db} dB")
    return len(entries)
