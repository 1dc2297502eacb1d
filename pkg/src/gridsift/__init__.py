"""gridsift: event detection, categorization and clustering for micro-PMU streams.

The package turns 120 fps synchrophasor CSV streams into nine per-phase
feature channels (voltage magnitude, current magnitude, power factor),
screens them with per-feature sequence discriminators, merges flagged
windows into events, and groups recurring events by waveform similarity.
"""

__version__ = "0.1.0"

from gridsift.ingest import FEATURE_NAMES, derive_features, fit_norm_stats, windowize

__all__ = [
    "FEATURE_NAMES",
    "derive_features",
    "fit_norm_stats",
    "windowize",
    "__version__",
]
