"""EEG preprocessing and frequency-band decomposition.

Raw recordings get a constant DC offset removed and are z-scored per
channel; band decomposition runs each channel through a Butterworth
band-pass realized as a cascade of second-order sections.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

STAGE_RAW = "raw"
STAGE_PREPROCESSED = "preprocessed"

# Classic band edges in Hz; the gamma upper edge depends on the sampling
# rate and is resolved in Band.named().
BAND_EDGES = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 12.0),
    "beta": (12.0, 30.0),
}

BAND_NAMES = ("delta", "theta", "alpha", "beta", "gamma", "full")


class FilterDesignError(ValueError):
    """Raised when band edges are unrealizable at the given sampling rate."""


class ConstantChannelWarning(UserWarning):
    """A channel had zero variance and was normalized to all zeros."""


@dataclass(frozen=True)
class Recording:
    """Multichannel EEG time series with subject/trial labels.

    samples has shape [T time points, N channels]; stage tracks where the
    recording sits in the preprocessing chain ("raw", "preprocessed", or
    "band:<name>").
    """

    samples: np.ndarray
    rate_hz: float
    subject: int
    trial: int = 0
    stage: str = STAGE_RAW

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D [T, N], got shape {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError(f"need at least 1 time point and 1 channel, got {samples.shape}")
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Band:
    """A named frequency band with its edge frequencies in Hz.

    The "full" band applies no filtering and carries no edges.
    """

    name: str
    low_hz: float = 0.0
    high_hz: float = 0.0

    @property
    def is_full(self) -> bool:
        return self.name == "full"

    @classmethod
    def named(cls, name: str, rate_hz: float) -> "Band":
        """Resolve a band name to its edges at the given sampling rate.

        Gamma nominally spans 30-100 Hz but is clamped to one Hz below the
        Nyquist frequency (30-63 Hz at 128 Hz, 30-79 Hz at 160 Hz).
        """
        key = name.lower()
        if key == "full":
            return cls("full")
        if key == "gamma":
            high = min(100.0, rate_hz / 2.0 - 1.0)
            band = cls("gamma", 30.0, high)
        elif key in BAND_EDGES:
            band = cls(key, *BAND_EDGES[key])
        else:
            raise ValueError(f"unknown band {name!r}; expected one of {BAND_NAMES}")
        if not (0.0 < band.low_hz < band.high_hz < rate_hz / 2.0):
            raise FilterDesignError(
                f"band {band.name} edges ({band.low_hz}, {band.high_hz}) Hz are invalid "
                f"at {rate_hz} Hz sampling"
            )
        return band


@dataclass(frozen=True)
class FilterDesign:
    """Digital band-pass as second-order sections (scipy sos layout).

    sections is an array [n_sections, 6] of (b0, b1, b2, 1, a1, a2); order
    is the analog prototype order, so the digital band-pass has twice that.
    """

    sections: np.ndarray
    order: int
    band: Band
    rate_hz: float

    def pole_magnitudes(self) -> np.ndarray:
        """Magnitude of every pole, computed from the section denominators."""
        mags = []
        for sec in self.sections:
            mags.extend(np.abs(np.roots(sec[3:])))
        return np.asarray(mags)

    def response_at(self, freq_hz: float | np.ndarray) -> np.ndarray:
        """Cascade magnitude response at the given frequencies in Hz."""
        _, h = sps.sosfreqz(self.sections, worN=2 * np.pi * np.atleast_1d(freq_hz) / self.rate_hz)
        return np.abs(h)


def remove_dc(rec: Recording, dc: float) -> Recording:
    """Subtract a constant DC offset (in microvolts) from every sample."""
    if rec.stage != STAGE_RAW:
        raise ValueError(f"remove_dc expects a raw recording, got stage {rec.stage!r}")
    return replace(rec, samples=rec.samples - dc)


def zscore_normalize(rec: Recording) -> Recording:
    """Standardize each channel to zero mean and unit population std.

    A constant channel (zero variance) is mapped to all zeros and a
    ConstantChannelWarning is issued instead of producing NaNs.
    """
    if rec.stage != STAGE_RAW:
        raise ValueError(f"zscore_normalize expects a raw recording, got stage {rec.stage!r}")
    centered = rec.samples - rec.samples.mean(axis=0)
    std = centered.std(axis=0)  # population (divide-by-T) form
    flat = std == 0.0
    if np.any(flat):
        warnings.warn(
            f"{int(flat.sum())} constant channel(s) normalized to zeros",
            ConstantChannelWarning,
            stacklevel=2,
        )
    out = np.divide(centered, std, out=np.zeros_like(centered), where=~flat)
    return replace(rec, samples=out, stage=STAGE_PREPROCESSED)


def design_bandpass(band: Band, rate_hz: float, order: int = 3) -> FilterDesign:
    """Design a digital Butterworth band-pass for `band` at `rate_hz`.

    The analog prototype has the given order (3 by default, so the digital
    filter is order 6) and is mapped through the bilinear transform with
    frequency pre-warping, yielding exact -3 dB points at the band edges.
    """
    if band.is_full:
        raise FilterDesignError("the full band applies no filter; nothing to design")
    if not (0.0 < band.low_hz < band.high_hz):
        raise FilterDesignError(f"invalid band edges ({band.low_hz}, {band.high_hz})")
    if band.high_hz >= rate_hz / 2.0:
        raise FilterDesignError(
            f"high edge {band.high_hz} Hz is not below the Nyquist frequency {rate_hz / 2.0} Hz"
        )
    sos = sps.butter(order, [band.low_hz, band.high_hz], btype="bandpass", output="sos", fs=rate_hz)
    return FilterDesign(sections=sos, order=order, band=band, rate_hz=rate_hz)


def apply_filter(design: FilterDesign, rec: Recording) -> Recording:
    """Filter each channel causally (forward pass, zero initial state)."""
    if rec.rate_hz != design.rate_hz:
        raise ValueError(
            f"recording rate {rec.rate_hz} Hz does not match filter design rate {design.rate_hz} Hz"
        )
    filtered = sps.sosfilt(design.sections, rec.samples, axis=0)
    return replace(rec, samples=filtered, stage=f"band:{design.band.name}")


def decompose(rec: Recording, band: Band) -> Recording:
    """Isolate one frequency band of a preprocessed recording.

    The full band is a documented pass-through; any other band designs and
    applies the Butterworth band-pass.
    """
    if rec.stage != STAGE_PREPROCESSED:
        raise ValueError(f"decompose expects a preprocessed recording, got stage {rec.stage!r}")
    if band.is_full:
        return rec
    design = design_bandpass(band, rec.rate_hz)
    return apply_filter(design, rec)
