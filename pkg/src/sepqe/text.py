"""Text normalization, edit-distance WER, and controlled transcript corruption."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import edit_cost_matrix
from .errors import DataError

# Pool used both to synthesize reference transcripts and to draw corrupted
# tokens from. Plain lowercase words only, matching the normalizer alphabet.
VOCAB: tuple[str, ...] = (
    "the", "and", "for", "are", "but", "not", "you", "all", "can", "had",
    "her", "was", "one", "our", "out", "day", "get", "has", "him", "his",
    "how", "man", "new", "now", "old", "see", "two", "way", "who", "boy",
    "did", "its", "let", "put", "say", "she", "too", "use", "that", "with",
    "have", "this", "will", "your", "from", "they", "know", "want", "been",
    "good", "much", "some", "time", "very", "when", "come", "here", "just",
    "like", "long", "make", "many", "more", "only", "over", "such", "take",
    "than", "them", "well", "were", "what", "work", "year", "back", "call",
    "came", "each", "even", "find", "give", "hand", "high", "keep", "last",
    "left", "life", "live", "look", "made", "most", "move", "must", "name",
    "need", "next", "open", "part", "play", "said", "same", "show", "side",
    "tell", "then", "thing", "think", "three", "turn", "under", "water",
    "where", "while", "world", "would", "write", "about", "after", "again",
    "before", "being", "below", "between", "could", "every", "first", "found",
    "great", "house", "large", "learn", "never", "other", "place", "plant",
    "point", "right", "small", "sound", "spell", "still", "study", "their",
)

_STRIP = re.compile(r"[^a-z0-9'\s]")


def normalize_text(raw: str) -> list[str]:
    """Lowercase, drop characters outside [a-z0-9' whitespace], split."""
    return _STRIP.sub("", raw.lower()).split()


@dataclass(frozen=True)
class WerBreakdown:
    """Edit counts from one optimal alignment, plus the resulting rate."""

    substitutions: int
    deletions: int
    insertions: int
    ref_len: int
    wer: float

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerBreakdown:
    """Word error rate via minimal edit alignment with unit costs.

    Counts come from one optimal backtrace with deterministic tie-breaking
    (substitution, then deletion, then insertion). The rate is not clamped
    at 1, so hypotheses longer than the reference can exceed 100%.
    """
    if len(reference) == 0:
        raise DataError("reference transcript is empty")
    ids = {}
    ref_ids = np.fromiter((ids.setdefault(t, len(ids)) for t in reference),
                          dtype=np.int32, count=len(reference))
    hyp_ids = np.fromiter((ids.setdefault(t, len(ids)) for t in hypothesis),
                          dtype=np.int32, count=len(hypothesis))
    d = edit_cost_matrix(ref_ids, hyp_ids)
    subs = dels = ins = 0
    i, j = len(ref_ids), len(hyp_ids)
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref_ids[i - 1] == hyp_ids[j - 1] \
                and d[i, j] == d[i - 1, j - 1]:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            subs += 1
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    rate = (subs + dels + ins) / len(reference)
    return WerBreakdown(subs, dels, ins, len(reference), rate)


def corrupt_transcript(reference: Sequence[str], rate: float,
                       seed: int) -> list[str]:
    """Corrupt a transcript so its expected WER is approximately ``rate``.

    Per token, mutually exclusive events: substitution with probability
    0.6*rate, deletion 0.2*rate, insertion-after 0.2*rate. Deterministic
    under the seed.
    """
    if not 0.0 <= rate <= 1.0:
        raise DataError(f"corruption rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    out: list[str] = []
    for token in reference:
        u = rng.random()
        if u < 0.6 * rate:
            out.append(VOCAB[int(rng.integers(len(VOCAB)))])
        elif u < 0.8 * rate:
            pass
        elif u < rate:
            out.append(token)
            out.append(VOCAB[int(rng.integers(len(VOCAB)))])
        else:
            out.append(token)
    return out
