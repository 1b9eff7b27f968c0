"""JSONL dataset manifests and per-entry metric labels.

One JSON object per line. Unknown keys survive a read/write round trip so
external tools (e.g. the feature export helper) can annotate entries
without this package losing their fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError

SPLITS = ("train", "valid", "test")
REGIMES = ("early", "mid", "late")
AUDIO_TRACKS = ("mixture", "est1", "est2")
FEATURE_TRACKS = ("mix", "est1", "est2")

_AVG_TOL = 1e-9

_LABEL_FIELDS = ("wer_s1", "wer_s2", "wer_avg", "sisnr_s1", "sisnr_s2", "sisnr_avg")


@dataclass
class MetricLabels:
    """Per-source and average values for each metric kind.

    Fields may be None on estimator outputs that were trained for a single
    metric; manifests require all six (see validate).
    """

    wer_s1: float | None = None
    wer_s2: float | None = None
    wer_avg: float | None = None
    sisnr_s1: float | None = None
    sisnr_s2: float | None = None
    sisnr_avg: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _LABEL_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricLabels":
        unknown = set(d) - set(_LABEL_FIELDS)
        if unknown:
            raise DataError(f"unknown label fields: {sorted(unknown)}")
        return cls(**{k: (None if d.get(k) is None else float(d[k])) for k in _LABEL_FIELDS})

    def validate(self) -> None:
        for k in _LABEL_FIELDS:
            v = getattr(self, k)
            if v is None:
                raise DataError(f"label {k} is missing")
            if v != v or v in (float("inf"), float("-inf")):
                raise DataError(f"label {k} is non-finite")
        for prefix in ("wer", "sisnr"):
            s1 = getattr(self, f"{prefix}_s1")
            s2 = getattr(self, f"{prefix}_s2")
            avg = getattr(self, f"{prefix}_avg")
            if abs(avg - (s1 + s2) / 2.0) > _AVG_TOL:
                raise DataError(
                    f"{prefix}_avg={avg} is not the mean of per-source values ({s1}, {s2})")
        if self.wer_s1 < 0 or self.wer_s2 < 0:
            raise DataError("WER labels must be non-negative")


@dataclass
class ManifestEntry:
    id: str
    split: str
    audio: dict[str, str]
    labels: MetricLabels | None = None
    regime: str | None = None
    features: dict[str, str] | None = None
    transcripts: dict[str, str] | None = None
    extra: dict = field(default_factory=dict)

    _KNOWN = ("id", "split", "audio", "labels", "regime", "features", "transcripts")

    def to_dict(self) -> dict:
        d = dict(self.extra)
        d["id"] = self.id
        d["split"] = self.split
        d["audio"] = self.audio
        if self.labels is not None:
            d["labels"] = self.labels.to_dict()
        if self.regime is not None:
            d["regime"] = self.regime
        if self.features is not None:
            d["features"] = self.features
        if self.transcripts is not None:
            d["transcripts"] = self.transcripts
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        extra = {k: v for k, v in d.items() if k not in cls._KNOWN}
        labels = d.get("labels")
        return cls(
            id=str(d["id"]),
            split=str(d["split"]),
            audio=dict(d["audio"]),
            labels=None if labels is None else MetricLabels.from_dict(labels),
            regime=d.get("regime"),
            features=None if d.get("features") is None else dict(d["features"]),
            transcripts=None if d.get("transcripts") is None else dict(d["transcripts"]),
            extra=extra,
        )


def validate_entry(entry: ManifestEntry) -> None:
    if entry.split not in SPLITS:
        raise DataError(f"entry {entry.id}: unknown split {entry.split!r}")
    if entry.regime is not None and entry.regime not in REGIMES:
        raise DataError(f"entry {entry.id}: unknown regime {entry.regime!r}")
    missing = [k for k in AUDIO_TRACKS if k not in entry.audio]
    if missing:
        raise DataError(f"entry {entry.id}: audio paths missing {missing}")
    if entry.labels is None:
        raise DataError(f"entry {entry.id}: split {entry.split!r} requires labels")
    try:
        entry.labels.validate()
    except DataError as exc:
        raise DataError(f"entry {entry.id}: {exc}") from exc
    if entry.features is not None:
        missing = [k for k in FEATURE_TRACKS if k not in entry.features]
        if missing:
            raise DataError(f"entry {entry.id}: feature paths missing {missing}")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = ManifestEntry.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, DataError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            try:
                validate_entry(entry)
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            entries.append(entry)
    return entries


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    for entry in entries:
        validate_entry(entry)
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def split_entries(entries: list[ManifestEntry], split: str) -> list[ManifestEntry]:
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}")
    return [e for e in entries if e.split == split]
