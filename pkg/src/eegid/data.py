"""Dataset ingestion, seeded splits, and a synthetic-EEG generator.

CSV files carry one sample per row with a `ch1..chN,subject,trial` header
and a JSON manifest alongside for the sampling rate. The EDF reader covers
the classic 16-bit format used by public motor-imagery recordings
(annotation signals are skipped). The synthetic generator builds recordings
whose identity information lives only in the delta band: each subject gets
private low-frequency oscillators mixed into the channels, while a single
shared broadband noise waveform (4-60 Hz) is added identically to everyone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from eegid.seeding import substream
from eegid.signal import Recording

ANNOTATION_LABEL = "EDF Annotations"


class DataFormatError(ValueError):
    """Malformed CSV, manifest, or EDF content."""


@dataclass(frozen=True)
class SampleSet:
    """Feature rows with subject labels, plus where they came from."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels must have the same number of rows")

    def __len__(self) -> int:
        return self.features.shape[0]


def samples_from_recordings(recordings: list[Recording],
                            num_classes: int | None = None) -> SampleSet:
    """Stack every time point of every recording into labelled sample rows."""
    if not recordings:
        raise DataFormatError("no recordings to assemble")
    widths = {rec.n_channels for rec in recordings}
    if len(widths) != 1:
        raise DataFormatError(f"recordings disagree on channel count: {sorted(widths)}")
    features = np.vstack([rec.samples for rec in recordings])
    labels = np.concatenate([np.full(rec.n_samples, rec.subject, dtype=np.int64)
                             for rec in recordings])
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    stage = recordings[0].stage
    return SampleSet(features=features, labels=labels, num_classes=k,
                     provenance={"stage": stage, "rate_hz": recordings[0].rate_hz})


# ---------------------------------------------------------------------------
# CSV + manifest

def manifest_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".manifest.json")


def write_manifest(csv_path: str | Path, name: str, rate_hz: float, channels: int) -> Path:
    path = manifest_path_for(csv_path)
    path.write_text(json.dumps({"name": name, "rate_hz": rate_hz, "channels": channels},
                               indent=2, sort_keys=True))
    return path


def read_manifest(csv_path: str | Path) -> dict:
    path = manifest_path_for(csv_path)
    if not path.exists():
        raise DataFormatError(f"manifest {path} not found (needed for the sampling rate)")
    doc = json.loads(path.read_text())
    for key in ("name", "rate_hz", "channels"):
        if key not in doc:
            raise DataFormatError(f"manifest {path} is missing the {key!r} field")
    return doc


def save_csv(recordings: list[Recording], csv_path: str | Path,
             name: str = "dataset") -> Path:
    """Write recordings as sample rows at full float precision, plus manifest."""
    csv_path = Path(csv_path)
    widths = {rec.n_channels for rec in recordings}
    if len(widths) != 1:
        raise DataFormatError(f"recordings disagree on channel count: {sorted(widths)}")
    n_channels = widths.pop()
    rates = {rec.rate_hz for rec in recordings}
    if len(rates) != 1:
        raise DataFormatError(f"recordings disagree on sampling rate: {sorted(rates)}")

    header = ",".join([f"ch{i + 1}" for i in range(n_channels)] + ["subject", "trial"])
    lines = [header]
    for rec in recordings:
        for row in rec.samples:
            cells = [repr(float(v)) for v in row]
            lines.append(",".join(cells + [str(rec.subject), str(rec.trial)]))
    csv_path.write_text("\n".join(lines) + "\n")
    write_manifest(csv_path, name, rates.pop(), n_channels)
    return csv_path


def load_csv(path: str | Path, rate_hz: float | None = None,
             allow_empty: bool = False) -> list[Recording]:
    """Parse sample rows into one raw Recording per (subject, trial) group.

    The sampling rate comes from the manifest next to the file unless given
    explicitly. Any malformed row is an error naming its line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset file {path} not found")
    if rate_hz is None:
        rate_hz = float(read_manifest(path)["rate_hz"])

    with path.open() as fh:
        header = fh.readline().strip()
        fields = header.split(",") if header else []
        if len(fields) < 3 or fields[-2:] != ["subject", "trial"]:
            raise DataFormatError(f"{path}: unknown header {header!r}; "
                                  "expected ch1..chN,subject,trial")
        n_channels = len(fields) - 2
        expected = [f"ch{i + 1}" for i in range(n_channels)]
        if fields[:-2] != expected:
            raise DataFormatError(f"{path}: unknown header {header!r}; "
                                  "expected ch1..chN,subject,trial")

        groups: dict[tuple[int, int], list[list[float]]] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != n_channels + 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {n_channels + 2} fields, got {len(cells)}")
            try:
                values = [float(c) for c in cells[:n_channels]]
                subject = _int_field(cells[-2])
                trial = _int_field(cells[-1])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(v) for v in values):
                raise DataFormatError(f"{path}:{lineno}: non-finite sample value")
            groups.setdefault((subject, trial), []).append(values)

    if not groups:
        if allow_empty:
            return []
        raise DataFormatError(f"{path}: no samples")
    return [
        Recording(np.asarray(rows, dtype=np.float64), rate_hz, subject=subject, trial=trial)
        for (subject, trial), rows in groups.items()
    ]


def _int_field(token: str) -> int:
    value = float(token)  # raises ValueError on non-numeric input
    if value != int(value):
        raise ValueError(f"expected an integer, got {token!r}")
    return int(value)


# ---------------------------------------------------------------------------
# EDF

@dataclass(frozen=True)
class EdfSignal:
    label: str
    transducer: str
    dimension: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    prefiltering: str
    samples_per_record: int

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)

    @property
    def is_annotation(self) -> bool:
        return self.label == ANNOTATION_LABEL


@dataclass(frozen=True)
class EdfFile:
    """Parsed classic-EDF header plus per-signal digital sample streams."""

    version: str
    patient_id: str
    recording_id: str
    start_date: str
    start_time: str
    n_records: int
    record_duration_s: float
    signals: list[EdfSignal]
    digital: list[np.ndarray]


def parse_edf(path: str | Path) -> EdfFile:
    """Decode the 256-byte header, signal table, and 16-bit LE payload."""
    path = Path(path)
    raw = path.read_bytes()

    def ascii_field(offset: int, width: int, name: str) -> str:
        chunk = raw[offset:offset + width]
        if len(chunk) < width:
            raise DataFormatError(f"{path}: truncated header at byte {offset} ({name})")
        try:
            return chunk.decode("ascii").strip()
        except UnicodeDecodeError:
            raise DataFormatError(f"{path}: non-ASCII header field {name} at byte {offset}") from None

    def int_field(offset: int, width: int, name: str) -> int:
        text = ascii_field(offset, width, name)
        try:
            return int(text)
        except ValueError:
            raise DataFormatError(f"{path}: field {name} at byte {offset} is not an integer: {text!r}") from None

    def float_field(offset: int, width: int, name: str) -> float:
        text = ascii_field(offset, width, name)
        try:
            return float(text)
        except ValueError:
            raise DataFormatError(f"{path}: field {name} at byte {offset} is not a number: {text!r}") from None

    version = ascii_field(0, 8, "version")
    patient = ascii_field(8, 80, "patient_id")
    recording = ascii_field(88, 80, "recording_id")
    start_date = ascii_field(168, 8, "start_date")
    start_time = ascii_field(176, 8, "start_time")
    header_bytes = int_field(184, 8, "header_bytes")
    n_records = int_field(236, 8, "n_records")
    record_duration = float_field(244, 8, "record_duration")
    n_signals = int_field(252, 4, "n_signals")
    if n_signals < 1:
        raise DataFormatError(f"{path}: file declares {n_signals} signals")
    if n_records < 1:
        raise DataFormatError(f"{path}: file declares {n_records} data records")
    if record_duration <= 0:
        raise DataFormatError(f"{path}: record duration must be positive, got {record_duration}")
    expected_header = 256 + 256 * n_signals
    if header_bytes != expected_header:
        raise DataFormatError(
            f"{path}: header_bytes field says {header_bytes}, expected {expected_header}")

    def table(offset_base: int, width: int, name: str, conv):
        start = 256 + offset_base * n_signals
        return [conv(start + i * width, width, f"{name}[{i}]") for i in range(n_signals)]

    labels = table(0, 16, "label", ascii_field)
    transducers = table(16, 80, "transducer", ascii_field)
    dimensions = table(96, 8, "dimension", ascii_field)
    phys_min = table(104, 8, "physical_min", float_field)
    phys_max = table(112, 8, "physical_max", float_field)
    dig_min = table(120, 8, "digital_min", int_field)
    dig_max = table(128, 8, "digital_max", int_field)
    prefilter = table(136, 80, "prefiltering", ascii_field)
    spr = table(216, 8, "samples_per_record", int_field)

    signals = []
    for i in range(n_signals):
        if dig_min[i] >= dig_max[i]:
            raise DataFormatError(
                f"{path}: signal {i} ({labels[i]!r}) has digital_min {dig_min[i]} >= "
                f"digital_max {dig_max[i]}")
        if not (np.isfinite(phys_min[i]) and np.isfinite(phys_max[i])):
            raise DataFormatError(
                f"{path}: signal {i} ({labels[i]!r}) has a non-finite physical range")
        if spr[i] < 1:
            raise DataFormatError(f"{path}: signal {i} declares {spr[i]} samples per record")
        signals.append(EdfSignal(labels[i], transducers[i], dimensions[i],
                                 phys_min[i], phys_max[i], dig_min[i], dig_max[i],
                                 prefilter[i], spr[i]))

    record_values = sum(spr)
    payload = raw[expected_header:]
    expected_payload = n_records * record_values * 2
    if len(payload) != expected_payload:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected_payload} "
            f"({n_records} records at byte {expected_header})")
    decoded = np.frombuffer(payload, dtype="<i2").reshape(n_records, record_values)

    digital = []
    offset = 0
    for sig in signals:
        digital.append(np.ascontiguousarray(
            decoded[:, offset:offset + sig.samples_per_record]).reshape(-1))
        offset += sig.samples_per_record

    return EdfFile(version=version, patient_id=patient, recording_id=recording,
                   start_date=start_date, start_time=start_time, n_records=n_records,
                   record_duration_s=record_duration, signals=signals, digital=digital)


def load_edf(path: str | Path, subject: int = 0, trial: int = 0,
             max_samples: int | None = None) -> Recording:
    """Physical-valued Recording from an EDF file, annotation signals skipped."""
    edf = parse_edf(path)
    keep = [i for i, sig in enumerate(edf.signals) if not sig.is_annotation]
    if not keep:
        raise DataFormatError(f"{path}: no data signals (annotations only)")
    rates = {edf.signals[i].samples_per_record for i in keep}
    if len(rates) != 1:
        raise DataFormatError(
            f"{path}: data signals use mixed samples-per-record {sorted(rates)}; unsupported")
    spr = rates.pop()
    rate_hz = spr / edf.record_duration_s

    columns = []
    for i in keep:
        sig = edf.signals[i]
        physical = (edf.digital[i].astype(np.float64) - sig.digital_min) * sig.gain + sig.physical_min
        columns.append(physical)
    samples = np.column_stack(columns)
    if max_samples is not None:
        samples = samples[:max_samples]
    return Recording(samples, rate_hz, subject=subject, trial=trial)


# ---------------------------------------------------------------------------
# Splits and labels

def split(sample_set: SampleSet, test_fraction: float = 0.125,
          seed: int = 0) -> tuple[SampleSet, SampleSet]:
    """Seeded uniform shuffle into disjoint (train, test) sample sets."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(sample_set)
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise ValueError(f"test_fraction {test_fraction} leaves an empty side for n={n}")
    perm = substream(seed, "split").permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    def take(idx):
        return SampleSet(features=sample_set.features[idx], labels=sample_set.labels[idx],
                         num_classes=sample_set.num_classes,
                         provenance=dict(sample_set.provenance))

    return take(train_idx), take(test_idx)


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Rows with a single 1 at each label position."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# Synthetic EEG

DELTA_LO_HZ = 0.6
DELTA_HI_HZ = 3.8
NOISE_LO_HZ = 4.0
NOISE_HI_HZ = 60.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a self-contained identification dataset.

    Each subject gets `oscillators_per_subject` private sinusoids inside a
    disjoint slice of the 0.6-3.8 Hz range (random amplitude and phase) that
    are mixed into the channels through subject-specific columns of the
    seeded mixing matrix. One shared band-limited noise waveform covering
    4-60 Hz is added identically to every subject, so the higher bands carry
    no identity and correlate strongly across subjects.
    """

    subjects: int
    channels: int
    rate_hz: float
    duration_s: float
    oscillators_per_subject: int = 3
    noise_level: float = 2.0
    seed: int = 0
    mixing_seed: int | None = None

    def __post_init__(self):
        if self.subjects < 1 or self.channels < 1:
            raise ValueError("subjects and channels must be >= 1")
        if self.rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("rate_hz and duration_s must be positive")
        if not 2 <= self.oscillators_per_subject <= 3:
            raise ValueError("oscillators_per_subject must be 2 or 3")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")


def subject_frequencies(spec: SyntheticSpec) -> np.ndarray:
    """Disjoint per-subject oscillator frequencies, shape [subjects, n_osc].

    Subject s owns the s-th slice of [0.6, 3.8] Hz; oscillators sit at
    centered offsets inside the slice so neighbouring subjects stay
    separated by 0.7 slice widths.
    """
    n = spec.oscillators_per_subject
    width = (DELTA_HI_HZ - DELTA_LO_HZ) / spec.subjects
    offsets = 0.5 + (np.arange(n) - (n - 1) / 2.0) * 0.15
    return DELTA_LO_HZ + width * (np.arange(spec.subjects)[:, None] + offsets[None, :])


def _shared_noise(spec: SyntheticSpec, n_samples: int) -> np.ndarray:
    """Band-limited (4-60 Hz) noise, one waveform per channel, fixed RMS."""
    if spec.noise_level == 0.0:
        return np.zeros((n_samples, spec.channels))
    rng = substream(spec.seed, "synth-noise")
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / spec.rate_hz)
    high = min(NOISE_HI_HZ, 0.98 * spec.rate_hz / 2.0)
    band = (freqs > NOISE_LO_HZ) & (freqs <= high)
    spectrum = np.zeros((freqs.size, spec.channels), dtype=np.complex128)
    n_band = int(band.sum())
    spectrum[band] = rng.normal(size=(n_band, spec.channels)) \
        + 1j * rng.normal(size=(n_band, spec.channels))
    noise = np.fft.irfft(spectrum, n=n_samples, axis=0)
    rms = np.sqrt((noise ** 2).mean(axis=0))
    return noise / rms * spec.noise_level


def synth_generate(spec: SyntheticSpec) -> list[Recording]:
    """One raw Recording per subject; identical inputs yield identical data."""
    n_samples = int(round(spec.duration_s * spec.rate_hz))
    if n_samples < 1:
        raise ValueError("duration too short for the sampling rate")
    t = np.arange(n_samples) / spec.rate_hz

    freqs = subject_frequencies(spec)
    sig_rng = substream(spec.seed, "synth-signature")
    amplitudes = sig_rng.uniform(0.7, 1.3, size=freqs.shape)
    phases = sig_rng.uniform(0.0, 2.0 * np.pi, size=freqs.shape)

    mix_seed = spec.seed if spec.mixing_seed is None else spec.mixing_seed
    mix_rng = substream(mix_seed, "synth-mixing")
    mixing = mix_rng.normal(size=(spec.subjects, spec.channels, spec.oscillators_per_subject))

    noise = _shared_noise(spec, n_samples)

    recordings = []
    for s in range(spec.subjects):
        oscillators = amplitudes[s] * np.sin(2.0 * np.pi * t[:, None] * freqs[s] + phases[s])
        channels = oscillators @ mixing[s].T
        # every channel's oscillator power is normalized to exactly 1 so the
        # z-score divisor downstream cannot leak identity into other bands
        rms = np.sqrt((channels ** 2).mean(axis=0))
        channels = channels / rms
        recordings.append(Recording(channels + noise, spec.rate_hz, subject=s, trial=0))
    return recordings
