"""MAE and Pearson-correlation evaluation of trained estimators.

Per metric, the two per-source heads are pooled into one "single" series
(length 2n) and the average head is reported separately, mirroring the
single/average column pairs of separation metric-estimation tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .estimator import OUTPUT_FIELDS, EstimatorModel
from .manifest import ManifestEntry

HEADS = ("s1", "s2", "avg", "single")


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise DataError(f"mae needs equal nonzero lengths, got {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def pcc(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size < 2:
        raise DataError(f"pcc needs two equal-length series of >= 2 points, "
                        f"got {p.shape} vs {t.shape}")
    pc = p - p.mean()
    tc = t - t.mean()
    # Constant series leave rounding dust of ~1e-16 relative to their level;
    # treat spread below 1e-12 of the magnitude as zero variance.
    for series, centered in ((p, pc), (t, tc)):
        spread = np.sqrt(np.dot(centered, centered) / centered.size)
        if spread <= 1e-12 * max(1.0, float(np.max(np.abs(series)))):
            raise DataError("pcc undefined: a series has zero variance")
    denom = np.sqrt(np.dot(pc, pc) * np.dot(tc, tc))
    return float(min(1.0, max(-1.0, np.dot(pc, tc) / denom)))


@dataclass
class HeadReport:
    mae: float
    pcc: float | None
    n: int
    note: str | None = None

    def to_dict(self) -> dict:
        d = {"mae": self.mae, "pcc": self.pcc, "n": self.n}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class EvalReport:
    mode: str
    n_entries: int
    metrics: dict[str, dict[str, HeadReport]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_entries": self.n_entries,
            "metrics": {m: {h: r.to_dict() for h, r in heads.items()}
                        for m, heads in self.metrics.items()},
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        report = cls(mode=d["mode"], n_entries=d["n_entries"], meta=d.get("meta", {}))
        for metric, heads in d["metrics"].items():
            report.metrics[metric] = {
                h: HeadReport(mae=r["mae"], pcc=r["pcc"], n=r["n"], note=r.get("note"))
                for h, r in heads.items()}
        return report

    def render_table(self) -> str:
        rows = [["Metric", "n", "PCC", "MAE", "A.PCC", "A.MAE"]]
        for metric, heads in self.metrics.items():
            single = heads["single"]
            avg = heads["avg"]
            rows.append([
                metric.upper(), str(self.n_entries),
                _fmt(single.pcc), f"{single.mae:.4f}",
                _fmt(avg.pcc), f"{avg.mae:.4f}",
            ])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                         for row in rows)


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _head_report(preds: np.ndarray, targets: np.ndarray) -> HeadReport:
    report = HeadReport(mae=mae(preds, targets), pcc=None, n=int(preds.size))
    try:
        report.pcc = pcc(preds, targets)
    except DataError as exc:
        report.note = str(exc)
    return report


def build_report(predictions: np.ndarray, targets: np.ndarray, mode: str,
                 meta: dict | None = None) -> EvalReport:
    """Assemble the per-head report from (n, n_out) prediction/target arrays.

    Columns follow OUTPUT_FIELDS[mode]; the metric-space values are
    expected here (de-normalized for joint models).
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    fields = OUTPUT_FIELDS[mode]
    if predictions.ndim != 2 or predictions.shape != targets.shape \
            or predictions.shape[1] != len(fields):
        raise DataError(f"expected (n, {len(fields)}) prediction/target arrays, "
                        f"got {predictions.shape} vs {targets.shape}")
    if predictions.shape[0] == 0:
        raise DataError("empty evaluation set")
    report = EvalReport(mode=mode, n_entries=int(predictions.shape[0]),
                        meta=meta or {})
    metric_names = ("wer", "sisnr") if mode == "joint" else (mode,)
    for m_idx, metric in enumerate(metric_names):
        base = 3 * m_idx
        s1_p, s2_p, avg_p = (predictions[:, base + k] for k in range(3))
        s1_t, s2_t, avg_t = (targets[:, base + k] for k in range(3))
        report.metrics[metric] = {
            "s1": _head_report(s1_p, s1_t),
            "s2": _head_report(s2_p, s2_t),
            "avg": _head_report(avg_p, avg_t),
            "single": _head_report(np.concatenate([s1_p, s2_p]),
                                   np.concatenate([s1_t, s2_t])),
        }
    return report


def collect_predictions(model: EstimatorModel, entries: list[ManifestEntry],
                        root) -> tuple[np.ndarray, np.ndarray]:
    """Run the model over entries; returns (predictions, targets) matrices."""
    if not entries:
        raise DataError("empty evaluation set")
    from .estimator import infer_outputs

    fields = OUTPUT_FIELDS[model.config.metric_mode]
    preds = infer_outputs(model, entries, Path(root))
    targets = np.asarray([[getattr(e.labels, f) for f in fields] for e in entries],
                         dtype=np.float64)
    return preds, targets


def evaluate(model: EstimatorModel, entries: list[ManifestEntry], root,
             meta: dict | None = None) -> EvalReport:
    preds, targets = collect_predictions(model, entries, root)
    return build_report(preds, targets, model.config.metric_mode, meta)
