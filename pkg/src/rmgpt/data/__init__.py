"""Dataset hub: manifests, resampling, windowing, synthetic data and splits."""
from .manifest import (DatasetManifest, ManifestError, RecordEntry, load_manifest, load_payload,
                       manifest_from_dict, write_manifest)
from .signals import (SIGMA_FLOOR, SignalWindow, resample, standardize, standardize_arrays,
                      window_and_standardize, window_count, window_signal)
from .splits import WindowSet, build_windows, few_shot_split, train_test_split
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "DatasetManifest", "ManifestError", "RecordEntry", "load_manifest", "load_payload",
    "manifest_from_dict", "write_manifest", "SIGMA_FLOOR", "SignalWindow", "resample",
    "standardize", "standardize_arrays", "window_and_standardize", "window_count",
    "window_signal", "WindowSet", "build_windows", "few_shot_split", "train_test_split",
    "SyntheticSpec", "generate_synthetic",
]
