"""EEG-based person identification pipeline.

Preprocess multichannel EEG, decompose it into frequency bands, learn
per-sample deep features with an attention-weighted LSTM encoder-decoder,
classify identities with gradient boosted trees, and evaluate the result.
"""

from eegid.signal import (
    Band,
    FilterDesign,
    Recording,
    apply_filter,
    decompose,
    design_bandpass,
    remove_dc,
    zscore_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "Band",
    "FilterDesign",
    "Recording",
    "apply_filter",
    "decompose",
    "design_bandpass",
    "remove_dc",
    "zscore_normalize",
    "__version__",
]
