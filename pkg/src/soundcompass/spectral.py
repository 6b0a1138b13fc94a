"""Gaussian-window STFT/iSTFT and the musical-scale overlapping band split.

Frames start at multiples of the hop; the signal is zero-padded at the end so
the final partial frame is kept: T = floor((S - fft_size)/hop) + 2 for
S > fft_size, else 1. Synthesis is least-squares overlap-add with per-sample
window-energy normalization, so arbitrary Gaussian windows invert cleanly as
long as their energy stays above a floor at every sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import MultichannelWaveform

ENERGY_FLOOR = 1e-8  # min per-sample synthesis window energy


class WindowEnergyError(ValueError):
    """Synthesis window energy underflows at some sample; inversion refused."""


@dataclass
class GaussianWindowParams:
    """Gaussian analysis window, mean/std as fractions of window length."""

    mean: float
    std: float
    length: int

    def __post_init__(self):
        self.length = int(self.length)
        if self.length < 2:
            raise ValueError(f"window length must be >= 2, got {self.length}")
        if self.std <= 0:
            raise ValueError(f"std must be positive, got {self.std}")


def make_gaussian_window(p: GaussianWindowParams) -> np.ndarray:
    """w[i] = exp(-((i/(length-1) - mean)^2) / (2 std^2)); peak <= 1."""
    u = np.arange(p.length) / (p.length - 1)
    return np.exp(-((u - p.mean) ** 2) / (2.0 * p.std**2))


@dataclass
class ComplexSpectrogram:
    """Per-channel complex time-frequency grid stored as stacked real planes.

    planes[0..M-1] are real parts, planes[M..2M-1] imaginary parts, so the
    tensor is [2M, T, F] with F = fft_size/2 + 1.
    """

    planes: np.ndarray
    frame_hop: int
    fft_size: int
    sample_rate: int

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3:
            raise ValueError("planes must be [2M, T, F]")
        if self.planes.shape[0] % 2:
            raise ValueError("plane count must be even (real+imag per channel)")
        if self.planes.shape[2] != self.fft_size // 2 + 1:
            raise ValueError(
                f"F={self.planes.shape[2]} inconsistent with fft_size={self.fft_size}"
            )

    @property
    def num_channels(self) -> int:
        return self.planes.shape[0] // 2

    @property
    def num_frames(self) -> int:
        return self.planes.shape[1]

    @property
    def num_bins(self) -> int:
        return self.planes.shape[2]

    def as_complex(self) -> np.ndarray:
        """[M, T, F] complex view of the stacked planes."""
        m = self.num_channels
        return self.planes[:m] + 1j * self.planes[m:]

    @classmethod
    def from_complex(cls, spec, frame_hop, fft_size, sample_rate):
        planes = np.concatenate([spec.real, spec.imag], axis=0)
        return cls(planes, frame_hop, fft_size, sample_rate)


def frame_count(num_samples: int, fft_size: int, hop: int) -> int:
    if num_samples <= fft_size:
        return 1
    return (num_samples - fft_size) // hop + 2


def stft(w: MultichannelWaveform, p: GaussianWindowParams, fft_size: int, hop: int) -> ComplexSpectrogram:
    if hop <= 0:
        raise ValueError("hop must be positive")
    if hop > fft_size:
        raise ValueError("hop must not exceed fft_size")
    if p.length != fft_size:
        raise ValueError(f"window length {p.length} != fft_size {fft_size}")
    x = w.samples
    if x.shape[1] == 0:
        raise ValueError("empty signal")

    t_frames = frame_count(x.shape[1], fft_size, hop)
    padded_len = (t_frames - 1) * hop + fft_size
    padded = np.zeros((x.shape[0], padded_len))
    padded[:, : x.shape[1]] = x

    window = make_gaussian_window(p)
    starts = np.arange(t_frames) * hop
    frames = np.stack([padded[:, s : s + fft_size] for s in starts], axis=1)  # [M, T, N]
    spec = np.fft.rfft(frames * window, axis=2)
    return ComplexSpectrogram.from_complex(spec, hop, fft_size, w.sample_rate)


def synthesis_window_energy(p: GaussianWindowParams, hop: int, num_frames: int) -> np.ndarray:
    """Per-sample sum of squared window values over all frames covering it."""
    window = make_gaussian_window(p)
    total = (num_frames - 1) * hop + p.length
    energy = np.zeros(total)
    w2 = window**2
    for t in range(num_frames):
        energy[t * hop : t * hop + p.length] += w2
    return energy


def istft(spec: ComplexSpectrogram, p: GaussianWindowParams, out_len: int | None = None) -> MultichannelWaveform:
    """Least-squares inverse: windowed overlap-add over window energy.

    Raises WindowEnergyError instead of dividing when the window energy at
    any requested output sample falls below ENERGY_FLOOR (window too narrow
    for the hop, or mean too far off center for the edges).
    """
    if p.length != spec.fft_size:
        raise ValueError(f"window length {p.length} != fft_size {spec.fft_size}")
    hop, fft_size = spec.frame_hop, spec.fft_size
    t_frames = spec.num_frames
    full_len = (t_frames - 1) * hop + fft_size
    if out_len is None:
        out_len = full_len
    if out_len > full_len:
        raise ValueError(f"out_len {out_len} exceeds synthesizable length {full_len}")

    energy = synthesis_window_energy(p, hop, t_frames)
    min_energy = energy[:out_len].min()
    if min_energy < ENERGY_FLOOR:
        bad = int(np.argmin(energy[:out_len]))
        raise WindowEnergyError(
            f"window energy {min_energy:.3e} at sample {bad} is below {ENERGY_FLOOR:.0e}; "
            "widen std or shrink the hop"
        )

    window = make_gaussian_window(p)
    frames = np.fft.irfft(spec.as_complex(), n=fft_size, axis=2)  # [M, T, N]
    acc = np.zeros((spec.num_channels, full_len))
    for t in range(t_frames):
        acc[:, t * hop : t * hop + fft_size] += frames[:, t, :] * window
    out = acc[:, :out_len] / energy[:out_len]
    return MultichannelWaveform(out, spec.sample_rate)


# ---------------------------------------------------------------------------
# Overlapping subband layout on the 12-tone equal-temperament scale


@dataclass
class BandLayout:
    """K inclusive (lo_bin, hi_bin) ranges covering every bin in [0, F-1]."""

    bands: list[tuple[int, int]]
    num_bins: int
    sample_rate: int = 16000
    fft_size: int = 512

    def __post_init__(self):
        self.bands = [(int(lo), int(hi)) for lo, hi in self.bands]
        if not self.bands:
            raise ValueError("layout needs at least one band")
        for k, (lo, hi) in enumerate(self.bands):
            if lo > hi:
                raise ValueError(f"band {k} has lo {lo} > hi {hi}")
            if lo < 0 or hi >= self.num_bins:
                raise ValueError(f"band {k} [{lo},{hi}] exceeds [0,{self.num_bins - 1}]")
        los = [b[0] for b in self.bands]
        if los != sorted(los):
            raise ValueError("bands must be sorted by lo_bin")
        covered = np.zeros(self.num_bins, dtype=bool)
        for lo, hi in self.bands:
            covered[lo : hi + 1] = True
        if not covered.all():
            missing = int(np.flatnonzero(~covered)[0])
            raise ValueError(f"layout leaves bin {missing} uncovered")

    @property
    def num_bands(self) -> int:
        return len(self.bands)

    def widths(self) -> list[int]:
        return [hi - lo + 1 for lo, hi in self.bands]

    def to_json(self, path=None) -> str:
        payload = json.dumps(
            {"fs": self.sample_rate, "fft_size": self.fft_size, "bands": [list(b) for b in self.bands]},
            indent=2,
        )
        if path is not None:
            Path(path).write_text(payload + "\n", encoding="utf-8")
        return payload

    @classmethod
    def from_json(cls, text_or_path):
        p = Path(str(text_or_path))
        text = p.read_text(encoding="utf-8") if p.exists() else str(text_or_path)
        d = json.loads(text)
        fft_size = d["fft_size"]
        return cls(
            bands=[tuple(b) for b in d["bands"]],
            num_bins=fft_size // 2 + 1,
            sample_rate=d["fs"],
            fft_size=fft_size,
        )


def make_band_layout(
    num_bins: int,
    sample_rate: int,
    f_min: float = 50.0,
    step_semitones: float = 3.0,
    overlap_semitones: float = 1.0,
    fft_size: int | None = None,
) -> BandLayout:
    """Build overlapping subbands with geometrically spaced edges.

    Edges sit at f_min * 2^(k*step/12) up to Nyquist; the band below the first
    edge is kept and extended down to bin 0, the last band is extended up to
    bin F-1, and every band is widened by half the overlap on each side. After
    quantization to bins, bands are grown downward (never shrunk) so widths
    are non-decreasing; that keeps narrow-low/wide-high ordering despite the
    Nyquist clip and integer rounding. Defaults give K=31 at fs=16000, F=257.
    """
    if f_min <= 0:
        raise ValueError("f_min must be positive")
    nyquist = sample_rate / 2.0
    if f_min >= nyquist:
        raise ValueError(f"f_min {f_min} must be below Nyquist {nyquist}")
    if overlap_semitones < 0 or step_semitones <= overlap_semitones:
        raise ValueError("need step_semitones > overlap_semitones >= 0")
    if fft_size is None:
        fft_size = 2 * (num_bins - 1)

    edges = [0.0]
    k = 0
    while True:
        f = f_min * 2.0 ** (k * step_semitones / 12.0)
        if f >= nyquist:
            break
        edges.append(f)
        k += 1
    edges.append(nyquist)
    if len(edges) < 3:
        raise ValueError("parameters yield fewer than 2 bands")

    half = 2.0 ** (overlap_semitones / 24.0)  # half-overlap widening factor
    bin_hz = sample_rate / fft_size
    bands = []
    for lo_hz, hi_hz in zip(edges[:-1], edges[1:]):
        lo = math.floor((lo_hz / half) / bin_hz)
        hi = math.ceil((hi_hz * half) / bin_hz)
        bands.append([max(lo, 0), min(hi, num_bins - 1)])
    bands[0][0] = 0
    bands[-1][1] = num_bins - 1

    # monotone-width repair: quantization and the Nyquist clip can leave a
    # band narrower than its predecessor; grow it toward lower bins (more
    # overlap, never less coverage), spilling upward only at the bin-0 wall.
    for k in range(1, len(bands)):
        want = bands[k - 1][1] - bands[k - 1][0] + 1
        have = bands[k][1] - bands[k][0] + 1
        if have < want:
            grow = want - have
            down = min(grow, bands[k][0])
            bands[k][0] -= down
            bands[k][1] = min(bands[k][1] + (grow - down), num_bins - 1)

    if len(bands) < 2:
        raise ValueError("parameters yield fewer than 2 bands")
    return BandLayout(
        bands=[tuple(b) for b in bands],
        num_bins=num_bins,
        sample_rate=sample_rate,
        fft_size=fft_size,
    )


def split_bands(x: np.ndarray, layout: BandLayout) -> list[np.ndarray]:
    """Slice [C, T, F] into K tensors [C, T, F_k]; overlapping bins repeat."""
    x = np.asarray(x)
    if x.shape[-1] != layout.num_bins:
        raise ValueError(f"last axis {x.shape[-1]} != layout bins {layout.num_bins}")
    return [x[..., lo : hi + 1].copy() for lo, hi in layout.bands]


def merge_weights(layout: BandLayout) -> list[np.ndarray]:
    """Per-band per-bin merge weights; for every bin they sum to exactly 1.

    Each band ramps up linearly across its overlap with the previous band and
    down across its overlap with the next (triangular cross-fade); profiles
    are then normalized per bin, and the last contribution is set to the
    exact complement so the partition of unity holds bitwise.
    """
    bands = layout.bands
    profiles = []
    for k, (lo, hi) in enumerate(bands):
        width = hi - lo + 1
        prof = np.ones(width)
        n_prev = (bands[k - 1][1] - lo + 1) if k > 0 else 0
        n_next = (hi - bands[k + 1][0] + 1) if k + 1 < len(bands) else 0
        if n_prev > 0:
            ramp_up = np.arange(1, min(n_prev, width) + 1) / (n_prev + 1)
            prof[: len(ramp_up)] = np.minimum(prof[: len(ramp_up)], ramp_up)
        if n_next > 0:
            ramp_dn = np.arange(min(n_next, width), 0, -1) / (n_next + 1)
            prof[width - len(ramp_dn) :] = np.minimum(prof[width - len(ramp_dn) :], ramp_dn)
        profiles.append(prof)

    weights = [np.zeros(hi - lo + 1) for lo, hi in bands]
    for f in range(layout.num_bins):
        cover = [k for k in range(len(bands)) if bands[k][0] <= f <= bands[k][1]]
        vals = [profiles[k][f - bands[k][0]] for k in cover]
        total = sum(vals)
        acc = 0.0
        for i, k in enumerate(cover):
            if i == len(cover) - 1:
                w = 1.0 - acc  # exact complement: per-bin weights sum to 1
            else:
                w = vals[i] / total
                acc += w
            weights[k][f - bands[k][0]] = w
    return weights


def merge_bands(bands: list[np.ndarray], layout: BandLayout) -> np.ndarray:
    """Cross-fade K band tensors back to [C, T, F]; inverse of split_bands."""
    if len(bands) != layout.num_bands:
        raise ValueError(f"got {len(bands)} bands for a {layout.num_bands}-band layout")
    for k, ((lo, hi), b) in enumerate(zip(layout.bands, bands)):
        if b.shape[-1] != hi - lo + 1:
            raise ValueError(f"band {k} has {b.shape[-1]} bins, layout wants {hi - lo + 1}")
    weights = merge_weights(layout)
    lead_shape = bands[0].shape[:-1]
    out = np.zeros(lead_shape + (layout.num_bins,))
    for (lo, hi), w, b in zip(layout.bands, weights, bands):
        out[..., lo : hi + 1] += w * b
    return out
