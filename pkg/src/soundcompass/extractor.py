"""Classical steered extraction: delay-and-sum driven by a direction clue.

Far-field model: a plane wave from unit direction u reaches the mic at offset
r_m a time (u . r_m)/c earlier than the array center, so the steering delay is
tau_m = -(u . r_m)/c. Channels are advanced by their steering delays, averaged
(coherent at the steered direction, incoherent elsewhere), and the estimate is
re-projected to M channels by re-applying each delay so spatial metrics remain
computable against multichannel references.
"""

from __future__ import annotations

import math

import numpy as np

from .audio_io import MultichannelWaveform
from .clues import DoAClue
from .delays import delay_signal

SPEED_OF_SOUND = 343.0


def steering_delays(offsets: np.ndarray, clue: DoAClue) -> np.ndarray:
    """tau_m = -(u . r_m)/c in seconds, [M]."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.ndim != 2 or offsets.shape[1] != 3:
        raise ValueError("offsets must be [M x 3]")
    u = clue.unit_vector()
    return -(offsets @ u) / SPEED_OF_SOUND


def steering_vector(offsets: np.ndarray, clue: DoAClue, freqs_hz: np.ndarray) -> np.ndarray:
    """Unit-magnitude phasors e^{-i 2 pi f tau_m}, shape [F x M]."""
    tau = steering_delays(offsets, clue)
    freqs_hz = np.asarray(freqs_hz, dtype=np.float64)
    return np.exp(-2j * np.pi * freqs_hz[:, None] * tau[None, :])


def delay_and_sum(
    mixture: MultichannelWaveform, clue: DoAClue, offsets: np.ndarray
) -> MultichannelWaveform:
    """Steer, average, re-project; M=1 input passes through untouched."""
    if not (math.isfinite(clue.azimuth) and math.isfinite(clue.polar)):
        raise ValueError("clue angles must be finite")
    offsets = np.asarray(offsets, dtype=np.float64)
    m = mixture.num_channels
    if offsets.shape[0] != m:
        raise ValueError(f"{offsets.shape[0]} offsets for {m} channels")
    if m == 1:
        return MultichannelWaveform(mixture.samples.copy(), mixture.sample_rate)

    fs = mixture.sample_rate
    delays = steering_delays(offsets, clue) * fs  # samples
    aligned = np.stack(
        [delay_signal(mixture.samples[ch], -delays[ch]) for ch in range(m)]
    )
    est = aligned.mean(axis=0)
    out = np.stack([delay_signal(est, delays[ch]) for ch in range(m)])
    return MultichannelWaveform(out, fs)
