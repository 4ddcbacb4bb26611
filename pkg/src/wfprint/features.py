"""Per-flow feature vectors (duration, directional counts/lengths, rates)."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .flows import Flow

MISSING = math.nan

FEATURE_NAMES = (
    "flow_duration",
    "fwd_packets",
    "bwd_packets",
    "fwd_length",
    "bwd_length",
    "flow_bytes_per_s",
    "flow_packets_per_s",
    "avg_packet_size",
)


class FeatureVector(NamedTuple):
    flow_duration: float
    fwd_packets: int
    bwd_packets: int
    fwd_length: int
    bwd_length: int
    flow_bytes_per_s: float
    flow_packets_per_s: float
    avg_packet_size: float


def is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def from_counters(duration: float, fwd_packets, bwd_packets, fwd_length, bwd_length) -> FeatureVector:
    """Build a feature vector from raw directional counters.

    Rates are MISSING (NaN) for zero-duration flows, and also when a
    vanishingly small duration would overflow them to infinity.
    """
    total_bytes = fwd_length + bwd_length
    total_packets = fwd_packets + bwd_packets
    if duration > 0:
        bps = total_bytes / duration
        pps = total_packets / duration
        if not (math.isfinite(bps) and math.isfinite(pps)):
            bps = pps = MISSING
    else:
        bps = pps = MISSING
    avg = total_bytes / total_packets if total_packets else MISSING
    return FeatureVector(duration, fwd_packets, bwd_packets, fwd_length, bwd_length, bps, pps, avg)


def featurize(flow: Flow) -> FeatureVector:
    return from_counters(flow.last_ts - flow.first_ts, flow.fwd_packets, flow.bwd_packets,
                         flow.fwd_bytes, flow.bwd_bytes)


def feature_matrix(vectors) -> np.ndarray:
    """Stack feature vectors into an (n, 8) float array; MISSING becomes NaN."""
    if not len(vectors):
        return np.empty((0, len(FEATURE_NAMES)))
    return np.asarray([[float(v) for v in fv] for fv in vectors], dtype=float)
