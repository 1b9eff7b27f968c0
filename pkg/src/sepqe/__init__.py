"""Reference-free quality estimation for two-speaker separation.

Ground-truth SI-SNR and WER oracles, a deterministic synthetic corpus
builder with coupled labels, and a trainable three-track estimator that
predicts per-source and average metric values from audio alone.
"""

from .audio import AudioSignal, SeparationTriplet, degrade, mix, synth_noise, synth_source
from .dataset import (BuildConfig, balance_bins, build_corpus,
                      export_toy_features, stats)
from .errors import DataError, FormatError, NumericsError, SepqeError
from .estimator import (EstimatorConfig, EstimatorModel, LabelNormalizer, fit,
                        fit_manifest, forward, load, predict, predict_from_features,
                        save, training_loss)
from .features import FeatureSequence, read_features, write_features
from .manifest import ManifestEntry, MetricLabels, read_manifest, write_manifest
from .report import EvalReport, evaluate, mae, pcc
from .sisnr import SiSnrResult, si_snr, si_snr_pit
from .text import WerBreakdown, corrupt_transcript, normalize_text, wer
from .wavio import read_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "AudioSignal", "SeparationTriplet", "degrade", "mix", "synth_noise",
    "synth_source", "BuildConfig", "balance_bins", "build_corpus", "stats",
    "export_toy_features", "DataError", "FormatError", "NumericsError", "SepqeError",
    "EstimatorConfig", "EstimatorModel", "LabelNormalizer", "fit",
    "fit_manifest", "forward", "load", "predict", "predict_from_features",
    "save", "training_loss", "FeatureSequence", "read_features",
    "write_features", "ManifestEntry", "MetricLabels", "read_manifest",
    "write_manifest", "EvalReport", "evaluate", "mae", "pcc", "SiSnrResult",
    "si_snr", "si_snr_pit", "WerBreakdown", "corrupt_transcript",
    "normalize_text", "wer", "read_wav", "write_wav", "__version__",
]
