"""Quantile-pooling anomaly detection for sound spectrograms.

Fit an entry-wise quantile reference on normal spectrograms, then score new
spectrograms by how far, and how often, they rise above it.
"""

__version__ = "0.1.0"

from .audio_io import AudioClip, DatasetManifest, ManifestEntry, decode_wav, encode_wav, read_wav, scan_dataset, select_channel
from .evaluation import RocResult, SplitPlan, evaluate, make_splits, roc_auc
from .reference import ReferenceSpectrogram, build_reference, build_references, load_reference, quantile, save_reference
from .scoring import (
    AnomalyScore,
    DifferenceSpectrogram,
    Metric,
    difference_spectrogram,
    export_explanation,
    score,
    score_binomial,
    score_counting,
    score_mean,
    score_sum,
)
from .spectrogram import DbConfig, Spectrogram, StftConfig, amplitude_to_db, compute_spectrogram, hann_window, stft_magnitude
from .tuning import GridConfig, TuningRecord, grid_search, run_protocol
from .validation import ExceedanceReport, SyntheticSpec, exceedance_experiment, synth_generate

__all__ = [
    "AnomalyScore", "AudioClip", "DatasetManifest", "DbConfig", "DifferenceSpectrogram",
    "ExceedanceReport", "GridConfig", "ManifestEntry", "Metric", "ReferenceSpectrogram",
    "RocResult", "Spectrogram", "SplitPlan", "StftConfig", "SyntheticSpec", "TuningRecord",
    "amplitude_to_db", "build_reference", "build_references", "compute_spectrogram",
    "decode_wav", "difference_spectrogram", "encode_wav", "evaluate", "exceedance_experiment",
    "export_explanation", "grid_search", "hann_window", "load_reference", "make_splits",
    "quantile", "read_wav", "roc_auc", "run_protocol", "save_reference", "scan_dataset",
    "score", "score_binomial", "score_counting", "score_mean", "score_sum", "select_channel",
    "stft_magnitude", "synth_generate",
]
