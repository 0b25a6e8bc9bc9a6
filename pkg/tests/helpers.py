"""Shared test utilities: a minimal classic-EDF byte builder."""

import numpy as np


def _pad(text, width):
    encoded = str(text).encode("ascii")
    if len(encoded) > width:
        raise ValueError(f"field {text!r} exceeds {width} bytes")
    return encoded.ljust(width)


def build_edf(signals, n_records, record_duration="1", version="0",
              patient="local patient", recording="local recording",
              start_date="01.01.20", start_time="00.00.00",
              header_bytes=None, payload_override=None):
    """Assemble classic-EDF bytes from per-signal dicts.

    Each signal dict carries label, physical_min/max, digital_min/max,
    samples_per_record, and data (flat int16 sequence of
    n_records * samples_per_record values).
    """
    ns = len(signals)
    head = b"".join([
        _pad(version, 8),
        _pad(patient, 80),
        _pad(recording, 80),
        _pad(start_date, 8),
        _pad(start_time, 8),
        _pad(header_bytes if header_bytes is not None else 256 + 256 * ns, 8),
        _pad("", 44),
        _pad(n_records, 8),
        _pad(record_duration, 8),
        _pad(ns, 4),
    ])

    columns = [
        ("label", 16, "EEG"),
        ("transducer", 80, ""),
        ("dimension", 8, "uV"),
        ("physical_min", 8, None),
        ("physical_max", 8, None),
        ("digital_min", 8, None),
        ("digital_max", 8, None),
        ("prefiltering", 80, ""),
        ("samples_per_record", 8, None),
        ("reserved", 32, ""),
    ]
    table = b""
    for key, width, default in columns:
        for sig in signals:
            value = sig.get(key, default)
            if value is None:
                raise ValueError(f"signal missing required field {key}")
            table += _pad(value, width)

    if payload_override is not None:
        return head + table + payload_override

    payload = b""
    for r in range(n_records):
        for sig in signals:
            spr = sig["samples_per_record"]
            chunk = np.asarray(sig["data"][r * spr:(r + 1) * spr], dtype="<i2")
            payload += chunk.tobytes()
    return head + table + payload
