"""ASR backends for hypothesis transcript export.

``fixture`` replays transcripts from files keyed by entry id and track,
standing in for a real recognizer in offline test environments. Every
backend applies the silence rule first: near-silent audio yields an empty
hypothesis (scored as all deletions downstream).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

SILENCE_PEAK = 1e-4


def is_silent(samples: np.ndarray) -> bool:
    return samples.size == 0 or float(np.max(np.abs(samples))) < SILENCE_PEAK


class FixtureAsr:
    """Reads hypothesis text from ``<root>/<template>`` per (entry, track)."""

    name = "fixture"

    def __init__(self, root, template: str = "text/{entry_id}.hyp{source}.txt"):
        self.root = Path(root)
        self.template = template

    def transcribe(self, samples: np.ndarray, sample_rate: int, *,
                   entry_id: str, source: int) -> str:
        if is_silent(samples):
            return ""
        path = self.root / self.template.format(entry_id=entry_id, source=source)
        if not path.exists():
            raise FileNotFoundError(f"fixture transcript missing: {path}")
        return path.read_text(encoding="utf-8").strip()


class WhisperAsr:  # pragma: no cover - requires weights
    name = "whisper"

    def __init__(self, model_name: str = "large-v3"):
        try:
            import whisper  # noqa: F401
        except ImportError as exc:
            raise RuntimeError(
                "the whisper package and its weights are not available in this "
                "environment; use --asr fixture or install whisper and rerun") from exc
        raise NotImplementedError("wire whisper.load_model here")


def make_asr(name: str, fixture_root=None):
    if name == "fixture":
        if fixture_root is None:
            raise ValueError("fixture ASR needs the corpus root for its transcripts")
        return FixtureAsr(fixture_root)
    if name == "whisper":
        return WhisperAsr()
    raise ValueError(f"unknown ASR backend {name!r}; choose from ['fixture', 'whisper']")
