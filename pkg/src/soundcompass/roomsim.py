"""Shoebox-room impulse responses by the image-source method, scene rendering.

Images of a source at s inside a box [0,L] are at (1-2p)*s + 2m*L for
p in {0,1}^3 and integer m per axis; the image reflects |m_d - p_d| times off
the wall at 0 and |m_d| times off the wall at L along each axis d. Each image
contributes an attenuated, fractionally delayed copy: amplitude
(product of wall reflection coefficients) / (4 pi distance), delay d/c.

Rendering convolves each source with its RIR, splitting the zeroth-order
(direct) tap from the rest so direct and reverberant stems are separate
targets; their sum equals the full convolution by linearity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import MultichannelWaveform, read_wav, write_wav
from .clues import DoAClue
from .delays import KERNEL_HALF, KERNEL_TAPS, fractional_delay_kernel
from .scenes import SceneSpec

SPEED_OF_SOUND = 343.0
MAX_IMAGE_ORDER = 12
MIN_SOURCE_MIC_DISTANCE = 1e-3  # 1 mm
ACTIVATION_GATE_DB = -40.0
DEFAULT_FFT_SIZE = 512
DEFAULT_HOP = 256


class SimulationError(ValueError):
    pass


def sabine_absorption(room_dims, rt60: float) -> float:
    """Uniform wall absorption giving the requested decay time (Sabine)."""
    lx, ly, lz = (float(v) for v in room_dims)
    if rt60 <= 0:
        raise SimulationError(f"rt60 must be positive, got {rt60}")
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + ly * lz + lx * lz)
    alpha = 0.161 * volume / (rt60 * surface)
    if alpha > 1.0:
        raise SimulationError(
            f"rt60 {rt60} s is unreachable for this room (needs absorption {alpha:.2f} > 1)"
        )
    return alpha


def _wall_absorptions(spec: SceneSpec) -> np.ndarray:
    """Six absorption coefficients: x=0, x=L, y=0, y=L, z=0, z=L."""
    if spec.absorption is not None:
        return np.asarray(spec.absorption, dtype=np.float64)
    return np.full(6, sabine_absorption(spec.room_dims, spec.rt60_s))


def _image_order(spec: SceneSpec, absorptions: np.ndarray) -> int:
    if spec.rt60_s is not None:
        rt60 = spec.rt60_s
    else:
        lx, ly, lz = spec.room_dims
        volume = lx * ly * lz
        surface = 2.0 * (lx * ly + ly * lz + lx * lz)
        mean_a = float(absorptions.mean())
        rt60 = 0.161 * volume / (surface * max(mean_a, 1e-6))
    order = math.ceil(rt60 * SPEED_OF_SOUND / min(spec.room_dims)) + 1
    return min(order, MAX_IMAGE_ORDER)


@dataclass
class RoomImpulseResponse:
    taps: np.ndarray  # [M, L] full response
    direct_taps: np.ndarray  # [M, L] zeroth-order image only
    sample_rate: int
    direct_tap_index: np.ndarray  # [M] nearest integer arrival per channel

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        self.direct_taps = np.asarray(self.direct_taps, dtype=np.float64)
        self.direct_tap_index = np.asarray(self.direct_tap_index, dtype=np.int64)
        if self.taps.ndim != 2:
            raise ValueError("taps must be [M, L]")
        if self.direct_taps.shape != self.taps.shape:
            raise ValueError("direct_taps must match taps shape")
        if self.direct_tap_index.shape != (self.taps.shape[0],):
            raise ValueError("need one direct tap index per channel")

    @property
    def num_channels(self) -> int:
        return self.taps.shape[0]

    def reverb_taps(self) -> np.ndarray:
        """Everything the zeroth-order image does not account for; exact complement."""
        return self.taps - self.direct_taps


def simulate_rir(
    spec: SceneSpec, source_index: int, max_order: int | None = None, sample_rate: int = 16000
) -> RoomImpulseResponse:
    """Image-source RIR from one source to every array mic."""
    spec.validate()
    if not (0 <= source_index < len(spec.sources)):
        raise SimulationError(f"source index {source_index} out of range")
    room = np.asarray(spec.room_dims, dtype=np.float64)
    src = np.asarray(spec.sources[source_index].position, dtype=np.float64)
    mics = np.asarray(spec.array_center, dtype=np.float64) + spec.array_offsets

    absorptions = _wall_absorptions(spec)
    betas = np.sqrt(np.clip(1.0 - absorptions, 0.0, 1.0))  # pairs per axis
    order = _image_order(spec, absorptions) if max_order is None else int(max_order)
    anechoic = bool(np.all(betas == 0.0))
    if anechoic:
        order = 0

    ms = np.arange(-order, order + 1)
    # per-axis image coordinates and reflection-coefficient products
    axis_coords, axis_gains = [], []
    for d in range(3):
        coords, gains = [], []
        for p in (0, 1):
            c = (1 - 2 * p) * src[d] + 2 * ms * room[d]
            g = betas[2 * d] ** np.abs(ms - p) * betas[2 * d + 1] ** np.abs(ms)
            coords.append(c)
            gains.append(g)
        axis_coords.append(np.concatenate(coords))
        axis_gains.append(np.concatenate(gains))

    cx, cy, cz = np.meshgrid(*axis_coords, indexing="ij")
    gx, gy, gz = np.meshgrid(*axis_gains, indexing="ij")
    positions = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)  # [I, 3]
    gains = (gx * gy * gz).ravel()
    keep = gains > 1e-12
    positions, gains = positions[keep], gains[keep]
    if positions.shape[0] == 0:
        raise SimulationError("no live image sources; absorption layout degenerate")

    kernel_cache: dict[int, np.ndarray] = {}

    fs = sample_rate
    num_mics = mics.shape[0]
    direct_idx = np.zeros(num_mics, dtype=np.int64)
    channels, direct_channels = [], []
    max_len = 0

    def scatter(taps, d_int, q, amps):
        tap_range = np.arange(KERNEL_TAPS)
        for qv in np.unique(q):
            if qv not in kernel_cache:
                kernel_cache[qv] = fractional_delay_kernel(qv / 64.0)
            sel = q == qv
            idx = ((d_int[sel] - KERNEL_HALF)[:, None] + tap_range[None, :]).ravel()
            w = (amps[sel][:, None] * kernel_cache[qv][None, :]).ravel()
            ok = (idx >= 0) & (idx < taps.shape[0])
            np.add.at(taps, idx[ok], w[ok])

    def quantize(delays):
        d_int = np.floor(delays).astype(np.int64)
        q = np.round((delays - d_int) * 64).astype(np.int64)
        d_int = d_int + (q == 64)  # fraction rounded up to the next sample
        return d_int, np.where(q == 64, 0, q)

    for mi in range(num_mics):
        dists = np.linalg.norm(positions - mics[mi], axis=1)
        d_direct = float(np.linalg.norm(src - mics[mi]))
        if d_direct < MIN_SOURCE_MIC_DISTANCE:
            raise SimulationError(
                f"source {source_index} is within 1 mm of mic {mi}; geometry degenerate"
            )
        dists = np.maximum(dists, MIN_SOURCE_MIC_DISTANCE)
        d_int, q = quantize(dists / SPEED_OF_SOUND * fs)
        length = int(d_int.max()) + KERNEL_TAPS + 1
        taps = np.zeros(length)
        scatter(taps, d_int, q, gains / (4.0 * np.pi * dists))

        direct = np.zeros(length)
        dd_int, dq = quantize(np.array([d_direct / SPEED_OF_SOUND * fs]))
        scatter(direct, dd_int, dq, np.array([1.0 / (4.0 * np.pi * d_direct)]))

        channels.append(taps)
        direct_channels.append(direct)
        direct_idx[mi] = int(round(d_direct / SPEED_OF_SOUND * fs))
        max_len = max(max_len, length)

    out = np.zeros((num_mics, max_len))
    out_direct = np.zeros((num_mics, max_len))
    for mi in range(num_mics):
        out[mi, : channels[mi].shape[0]] = channels[mi]
        out_direct[mi, : direct_channels[mi].shape[0]] = direct_channels[mi]
    return RoomImpulseResponse(out, out_direct, fs, direct_idx)


def ground_truth_doa(spec: SceneSpec, source_index: int) -> DoAClue:
    src = np.asarray(spec.sources[source_index].position, dtype=np.float64)
    center = np.asarray(spec.array_center, dtype=np.float64)
    v = src - center
    if np.linalg.norm(v) < MIN_SOURCE_MIC_DISTANCE:
        raise SimulationError(f"source {source_index} sits at the array center")
    return DoAClue.from_vector(v)


def frame_activation(
    direct: MultichannelWaveform, fft_size: int = DEFAULT_FFT_SIZE, hop: int = DEFAULT_HOP
) -> np.ndarray:
    """Binary per-frame activity of a stem: frame RMS gated at -40 dB of peak."""
    from .spectral import frame_count

    x = direct.samples
    t_frames = frame_count(x.shape[1], fft_size, hop)
    padded = np.zeros((x.shape[0], (t_frames - 1) * hop + fft_size))
    padded[:, : x.shape[1]] = x
    rms = np.empty(t_frames)
    for t in range(t_frames):
        seg = padded[:, t * hop : t * hop + fft_size]
        rms[t] = np.sqrt((seg**2).mean())
    peak = rms.max()
    if peak == 0.0:
        return np.zeros(t_frames)
    gate = peak * 10.0 ** (ACTIVATION_GATE_DB / 20.0)
    return (rms >= gate).astype(np.float64)


@dataclass
class SourceTruth:
    direct: MultichannelWaveform
    reverb: MultichannelWaveform
    doa: DoAClue
    activation: np.ndarray
    class_label: str
    position: np.ndarray


@dataclass
class SceneTruth:
    sources: list
    noise: MultichannelWaveform | None
    sample_rate: int


def _load_source_signal(path, expect_rate: int | None) -> tuple[np.ndarray, int]:
    w = read_wav(path)
    if expect_rate is not None and w.sample_rate != expect_rate:
        raise SimulationError(
            f"{path}: sample rate {w.sample_rate} != scene rate {expect_rate}"
        )
    if not np.isfinite(w.samples).all():
        raise SimulationError(f"{path}: source audio contains non-finite samples")
    if w.num_channels != 1:
        raise SimulationError(f"{path}: source signals must be mono, got {w.num_channels} channels")
    return w.samples[0], w.sample_rate


def render_scene(spec: SceneSpec, base_dir=None) -> tuple[MultichannelWaveform, SceneTruth]:
    """Convolve every source with its RIR; return mixture and per-source truth.

    WAV paths in the scene spec resolve relative to base_dir when given. All
    signals must share one sample rate; stems are trimmed to the longest
    source length S so mixture and stems align sample-for-sample.
    """
    spec.validate()

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() or base_dir is None else Path(base_dir) / p

    signals = []
    rate = None
    for j, s in enumerate(spec.sources):
        sig, rate = _load_source_signal(resolve(s.wav), rate)
        signals.append(sig * 10.0 ** (s.gain_db / 20.0))
    num_samples = max(sig.shape[0] for sig in signals)

    num_mics = spec.array_offsets.shape[0]
    mixture = np.zeros((num_mics, num_samples))
    truths = []
    for j, sig in enumerate(signals):
        rir = simulate_rir(spec, j, sample_rate=rate)
        direct = _fit_length(fftconvolve(sig[None, :], rir.direct_taps, axes=1), num_samples)
        reverb = _fit_length(fftconvolve(sig[None, :], rir.reverb_taps(), axes=1), num_samples)
        dw = MultichannelWaveform(direct, rate)
        rw = MultichannelWaveform(reverb, rate)
        mixture += direct + reverb
        truths.append(
            SourceTruth(
                direct=dw,
                reverb=rw,
                doa=ground_truth_doa(spec, j),
                activation=frame_activation(dw),
                class_label=spec.sources[j].class_label,
                position=np.asarray(spec.sources[j].position, dtype=np.float64),
            )
        )

    noise_w = None
    if spec.noise is not None:
        nw = read_wav(resolve(spec.noise.wav))
        if nw.sample_rate != rate:
            raise SimulationError(
                f"noise rate {nw.sample_rate} != scene rate {rate}"
            )
        n = nw.samples
        if n.shape[1] < num_samples:
            raise SimulationError(
                f"noise is {n.shape[1]} samples, scene needs {num_samples}"
            )
        n = n[:, :num_samples]
        if n.shape[0] == 1:
            n = np.repeat(n, num_mics, axis=0)
        elif n.shape[0] != num_mics:
            raise SimulationError(
                f"noise has {n.shape[0]} channels, array has {num_mics}"
            )
        n = n * 10.0 ** (spec.noise.gain_db / 20.0)
        noise_w = MultichannelWaveform(n, rate)
        mixture = mixture + n

    return MultichannelWaveform(mixture, rate), SceneTruth(truths, noise_w, rate)


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.shape[1] >= n:
        return x[:, :n]
    out = np.zeros((x.shape[0], n))
    out[:, : x.shape[1]] = x
    return out


def schroeder_decay_db(rir: RoomImpulseResponse) -> tuple[np.ndarray, np.ndarray]:
    """Backward-integrated energy decay curve in dB, channel-energy pooled."""
    energy = (rir.taps**2).sum(axis=0)
    edc = np.cumsum(energy[::-1])[::-1]
    total = edc[0]
    if total <= 0:
        raise SimulationError("impulse response has no energy")
    t = np.arange(energy.shape[0]) / rir.sample_rate
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.maximum(edc / total, 1e-30))
    return t, db


def schroeder_rt60(rir: RoomImpulseResponse) -> float:
    """RT60 from the -5..-25 dB span of the Schroeder curve, extrapolated x3."""
    t, db = schroeder_decay_db(rir)
    t5 = _crossing_time(t, db, -5.0)
    t25 = _crossing_time(t, db, -25.0)
    if t25 <= t5:
        raise SimulationError("decay curve too short to measure RT60")
    return 3.0 * (t25 - t5)


def _crossing_time(t: np.ndarray, db: np.ndarray, level: float) -> float:
    below = np.flatnonzero(db <= level)
    if below.size == 0:
        raise SimulationError(f"decay never reaches {level} dB")
    i = below[0]
    if i == 0:
        return float(t[0])
    # linear interpolation between the straddling samples
    d0, d1 = db[i - 1], db[i]
    w = (level - d0) / (d1 - d0)
    return float(t[i - 1] + w * (t[i] - t[i - 1]))


# ---------------------------------------------------------------------------
# Batch rendering and truth serialization


def truth_to_dict(spec: SceneSpec, truth: SceneTruth, num_samples: int) -> dict:
    return {
        "sample_rate": truth.sample_rate,
        "num_samples": num_samples,
        "room_dims": list(map(float, spec.room_dims)),
        "array_center": list(map(float, spec.array_center)),
        "array_offsets": np.asarray(spec.array_offsets, dtype=np.float64).tolist(),
        "frame": {"fft_size": DEFAULT_FFT_SIZE, "hop": DEFAULT_HOP},
        "sources": [
            {
                "azimuth": st.doa.azimuth,
                "polar": st.doa.polar,
                "class": st.class_label,
                "position": st.position.tolist(),
                "activation": st.activation.tolist(),
            }
            for st in truth.sources
        ],
    }


def render_scene_to_dir(spec: SceneSpec, out_dir, base_dir=None) -> Path:
    """Write mixture.wav, per-source stems, and truth.json under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mixture, truth = render_scene(spec, base_dir=base_dir)
    write_wav(mixture, out_dir / "mixture.wav")
    for j, st in enumerate(truth.sources):
        write_wav(st.direct, out_dir / f"src{j}_direct.wav")
        write_wav(st.reverb, out_dir / f"src{j}_reverb.wav")
    payload = truth_to_dict(spec, truth, mixture.num_samples)
    (out_dir / "truth.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return out_dir
