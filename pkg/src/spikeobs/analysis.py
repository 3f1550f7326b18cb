"""Spike-train statistics: detection, intervals, firing phenotype.

The phenotype classifier only has to tell sustained single-spike firing
from burst firing.  Bursting shows up as a bimodal inter-spike-interval
distribution: short within-burst intervals plus interburst pauses an
order of magnitude longer, so a simple gap rule on the interval
histogram is enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPIKE_THRESHOLD = -20.0  # mV; an upward crossing counts as one spike
LONG_GAP_FACTOR = 3.0    # interval > factor * median marks a pause
PAUSE_SEPARATION = 5.0   # pause median must exceed this * short median
TONIC_MAX_CV = 0.3       # spread allowed for regular single spiking
MIN_INTERVALS = 4


def spike_times(t, v, threshold: float = SPIKE_THRESHOLD) -> np.ndarray:
    """Times of upward threshold crossings of the voltage trace."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape:
        raise ValueError(f"t and v must match, got {t.shape} vs {v.shape}")
    if t.size < 2:
        return np.zeros(0)
    crossed = (v[1:] >= threshold) & (v[:-1] < threshold)
    return t[1:][crossed]


def intervals_in(spikes: np.ndarray, t_start: float, t_stop: float) -> np.ndarray:
    """Inter-spike intervals between consecutive spikes inside a window."""
    spikes = np.asarray(spikes, dtype=float)
    inside = spikes[(spikes >= t_start) & (spikes <= t_stop)]
    return np.diff(inside)


@dataclass(frozen=True)
class Phenotype:
    label: str               # quiescent | tonic | bursting | irregular
    n_spikes: int
    rate_hz: float
    median_interval: float   # ms, nan when undefined
    n_pauses: int
    median_pause: float      # ms, nan when no pauses


def classify_intervals(isi) -> str:
    """'quiescent' | 'tonic' | 'bursting' | 'irregular'.

    tonic: no long gaps and a tight interval distribution.
    bursting: at least two gaps beyond LONG_GAP_FACTOR * median, with the
    gap median at least PAUSE_SEPARATION times the short-interval median.
    """
    isi = np.asarray(isi, dtype=float)
    if isi.size < MIN_INTERVALS:
        return "quiescent"
    med = float(np.median(isi))
    long_gaps = isi[isi > LONG_GAP_FACTOR * med]
    short = isi[isi <= LONG_GAP_FACTOR * med]
    if long_gaps.size == 0:
        cv = float(isi.std() / isi.mean())
        return "tonic" if cv < TONIC_MAX_CV else "irregular"
    if long_gaps.size >= 2 and np.median(long_gaps) >= PAUSE_SEPARATION * np.median(short):
        return "bursting"
    return "irregular"


def window_phenotype(t, v, t_start: float, t_stop: float,
                     threshold: float = SPIKE_THRESHOLD) -> Phenotype:
    """Firing phenotype of one time window of a voltage trace."""
    if not t_stop > t_start:
        raise ValueError(f"window needs t_stop > t_start (got {t_start}..{t_stop})")
    spikes = spike_times(t, v, threshold)
    inside = spikes[(spikes >= t_start) & (spikes <= t_stop)]
    isi = np.diff(inside)
    label = classify_intervals(isi)
    med = float(np.median(isi)) if isi.size else float("nan")
    pauses = isi[isi > LONG_GAP_FACTOR * med] if isi.size else isi
    return Phenotype(
        label=label,
        n_spikes=int(inside.size),
        rate_hz=1000.0 * inside.size / (t_stop - t_start),
        median_interval=med,
        n_pauses=int(pauses.size),
        median_pause=float(np.median(pauses)) if pauses.size else float("nan"),
    )
