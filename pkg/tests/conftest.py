import numpy as np
import pytest

from soundcompass import (
    MultichannelWaveform,
    SceneSpec,
    SourceSpec,
    tetrahedral_offsets,
    write_wav,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def make_noise_wav(path, seconds=0.5, rate=16000, channels=1, seed=0, scale=0.3):
    r = np.random.default_rng(seed)
    x = scale * r.standard_normal((channels, int(seconds * rate)))
    w = MultichannelWaveform(x, rate)
    write_wav(w, path)
    return w


def make_tone_wav(path, freq=440.0, seconds=0.5, rate=16000, scale=0.3):
    t = np.arange(int(seconds * rate)) / rate
    w = MultichannelWaveform(scale * np.sin(2 * np.pi * freq * t)[None, :], rate)
    write_wav(w, path)
    return w


@pytest.fixture
def scene_factory(tmp_path):
    """Build a renderable SceneSpec with generated source WAVs on disk."""

    def build(
        positions=((1.2, 3.8, 1.7),),
        room=(5.57, 5.20, 3.79),
        center=(2.8, 2.6, 1.5),
        rt60=None,
        absorption=None,
        seconds=0.4,
        gain_db=0.0,
        seed=1,
    ):
        if rt60 is None and absorption is None:
            absorption = [1.0] * 6
        sources = []
        for j, pos in enumerate(positions):
            wav_path = tmp_path / f"s{j}.wav"
            make_noise_wav(wav_path, seconds=seconds, seed=seed + j)
            sources.append(
                SourceSpec(position=list(pos), class_label=f"class{j}", gain_db=gain_db, wav=str(wav_path))
            )
        return SceneSpec(
            room_dims=list(room),
            array_center=list(center),
            array_offsets=tetrahedral_offsets(),
            sources=sources,
            rt60_s=rt60,
            absorption=absorption,
        )

    return build
