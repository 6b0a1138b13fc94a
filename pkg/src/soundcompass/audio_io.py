"""Multichannel WAV input/output.

Only uncompressed RIFF/WAVE is handled: 16-bit integer PCM and 32-bit IEEE
float, little-endian, any channel count. Samples are exchanged as float
matrices of shape [channels, samples] scaled to [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PCM16_SCALE = 32768.0

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Raised for WAV data this toolkit cannot read or write."""


@dataclass
class MultichannelWaveform:
    """Time-domain signal, M channels by S samples at a fixed rate.

    ``samples`` is always a 2-D float64 array; a 1-D input is promoted to a
    single channel. All channels share the same length by construction.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise ValueError("waveform needs at least one channel")
        self.samples = arr
        self.sample_rate = int(self.sample_rate)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise WavFormatError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def read_wav(path) -> MultichannelWaveform:
    """Read a PCM16 or float32 WAV file into a [-1, 1]-scaled waveform.

    Channel count and sample rate come from the header. PCM16 samples are
    scaled by 1/32768, so +32767 maps to 32767/32768.
    """
    path = Path(path)
    with path.open("rb") as fh:
        riff, _size, wave_id = struct.unpack("<4sI4s", _read_exact(fh, 12, "RIFF header"))
        if riff != b"RIFF" or wave_id != b"WAVE":
            raise WavFormatError(f"{path}: not a RIFF/WAVE file")

        fmt = None
        data = None
        while True:
            head = fh.read(8)
            if len(head) == 0:
                break
            if len(head) < 8:
                raise WavFormatError(f"{path}: truncated chunk header")
            chunk_id, chunk_size = struct.unpack("<4sI", head)
            if chunk_id == b"fmt ":
                fmt = _read_exact(fh, chunk_size, "fmt chunk")
            elif chunk_id == b"data":
                data = _read_exact(fh, chunk_size, "data chunk")
            else:
                fh.seek(chunk_size, 1)
            if chunk_size % 2:  # chunks are word-aligned
                fh.seek(1, 1)

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: fmt chunk too short")

    audio_format, channels, rate, _byte_rate, block_align, bits = struct.unpack(
        "<HHIIHH", fmt[:16]
    )
    if audio_format == _FMT_EXTENSIBLE and len(fmt) >= 40:
        # sub-format GUID starts with the effective format code
        audio_format = struct.unpack("<H", fmt[24:26])[0]
    if channels == 0:
        raise WavFormatError(f"{path}: zero channels")

    if audio_format == _FMT_PCM and bits == 16:
        raw = np.frombuffer(data, dtype="<i2")
        scale = 1.0 / PCM16_SCALE
    elif audio_format == _FMT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(data, dtype="<f4")
        scale = 1.0
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding (format {audio_format}, {bits}-bit); "
            "only PCM16 and float32 are handled"
        )

    if block_align and len(data) % block_align:
        raise WavFormatError(f"{path}: data chunk is not a whole number of frames")
    if raw.size % channels:
        raise WavFormatError(f"{path}: sample count not divisible by channel count")

    frames = raw.reshape(-1, channels)  # interleaved on disk
    samples = frames.T.astype(np.float64) * scale
    return MultichannelWaveform(samples, rate)


def write_wav(w: MultichannelWaveform, path, encoding: str = "float32") -> None:
    """Write a waveform as PCM16 or float32 WAV.

    PCM16 requires samples in [-1, 1]; out-of-range input is an error rather
    than a silent clamp. Non-finite samples are always rejected.
    """
    if encoding not in ("pcm16", "float32"):
        raise ValueError(f"encoding must be 'pcm16' or 'float32', got {encoding!r}")
    x = w.samples
    if not np.all(np.isfinite(x)):
        raise WavFormatError("refusing to write non-finite samples")

    if encoding == "pcm16":
        peak = np.max(np.abs(x)) if x.size else 0.0
        if peak > 1.0:
            raise WavFormatError(f"pcm16 peak {peak:.6g} exceeds full scale 1.0")
        scaled = np.round(x * PCM16_SCALE)
        np.clip(scaled, -PCM16_SCALE, PCM16_SCALE - 1, out=scaled)  # +1.0 -> 32767
        payload = scaled.astype("<i2").T.tobytes()
        audio_format, bits = _FMT_PCM, 16
    else:
        payload = x.astype("<f4").T.tobytes()
        audio_format, bits = _FMT_IEEE_FLOAT, 32

    channels = w.num_channels
    block_align = channels * bits // 8
    byte_rate = w.sample_rate * block_align
    fmt = struct.pack("<HHIIHH", audio_format, channels, w.sample_rate, byte_rate, block_align, bits)
    pad = b"\x00" if len(payload) % 2 else b""

    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<4sI4s", b"RIFF", 4 + 8 + len(fmt) + 8 + len(payload) + len(pad), b"WAVE"))
        fh.write(struct.pack("<4sI", b"fmt ", len(fmt)))
        fh.write(fmt)
        fh.write(struct.pack("<4sI", b"data", len(payload)))
        fh.write(payload)
        fh.write(pad)
