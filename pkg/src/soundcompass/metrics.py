"""Extraction-quality and spatial-fidelity metrics, plus the training losses.

SNR-family scores are capped at +-100 dB BEFORE improvement subtraction, so a
perfect estimate against a -3 dB mixture reports an improvement of 103 dB
rather than infinity. Multichannel scores are computed per channel and
averaged. Spatial cues (ILD, IPD, ITD) are per mic pair; pairs with a silent
channel are flagged undefined (NaN) and excluded from mean absolute errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import MultichannelWaveform
from .spectral import ComplexSpectrogram, GaussianWindowParams, stft

SNR_CAP_DB = 100.0
ENERGY_FLOOR = 1e-12
IPD_GATE_DB = -60.0
BCE_EPS = 1e-7
DEFAULT_WINDOW = GaussianWindowParams(mean=0.5, std=0.25, length=512)
DEFAULT_HOP = 256

CSV_HEADER = ["scene_id", "source_id", "snri_db", "si_snri_db", "d_ild_db", "d_ipd_rad", "d_itd_us"]


def _cap(db: float) -> float:
    return max(-SNR_CAP_DB, min(SNR_CAP_DB, db))


def _ratio_db(num: float, den: float) -> float:
    if den <= 0.0:
        return SNR_CAP_DB
    if num <= 0.0:
        return -SNR_CAP_DB
    return _cap(10.0 * math.log10(num / den))


def _as_2d(x) -> np.ndarray:
    if isinstance(x, MultichannelWaveform):
        return x.samples
    a = np.asarray(x, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def snr(est, ref) -> float:
    """10 log10(||ref||^2 / ||est - ref||^2), channel-averaged, capped +-100."""
    e, r = _as_2d(est), _as_2d(ref)
    if e.shape != r.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {r.shape}")
    vals = []
    for ch in range(r.shape[0]):
        rr = float(r[ch] @ r[ch])
        if rr <= 0.0:
            raise ValueError(f"reference channel {ch} is all zero")
        vals.append(_ratio_db(rr, float((e[ch] - r[ch]) @ (e[ch] - r[ch]))))
    return float(np.mean(vals))


def si_snr(est, ref) -> float:
    """Scale-invariant SNR: project est onto ref, compare to the residual."""
    e, r = _as_2d(est), _as_2d(ref)
    if e.shape != r.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {r.shape}")
    vals = []
    for ch in range(r.shape[0]):
        rr = float(r[ch] @ r[ch])
        if rr <= 0.0:
            raise ValueError(f"reference channel {ch} is all zero")
        s_target = (float(e[ch] @ r[ch]) / rr) * r[ch]
        resid = e[ch] - s_target
        vals.append(_ratio_db(float(s_target @ s_target), float(resid @ resid)))
    return float(np.mean(vals))


def snr_i(est, ref, mixture) -> float:
    """SNR improvement over the unprocessed mixture (caps applied first)."""
    return snr(est, ref) - snr(mixture, ref)


def si_snr_i(est, ref, mixture) -> float:
    return si_snr(est, ref) - si_snr(mixture, ref)


# ---------------------------------------------------------------------------
# Spatial cues


def ild(w: MultichannelWaveform, pair: tuple[int, int]) -> float:
    """Inter-channel level difference 10 log10(E_i/E_j); NaN if a channel is silent."""
    i, j = _check_pair(pair, w.num_channels)
    ei = float(w.samples[i] @ w.samples[i])
    ej = float(w.samples[j] @ w.samples[j])
    if ei < ENERGY_FLOOR or ej < ENERGY_FLOOR:
        return math.nan
    return 10.0 * math.log10(ei / ej)


def ipd(spec: ComplexSpectrogram, pair: tuple[int, int]) -> np.ndarray:
    """Wrapped phase difference angle(X_j) - angle(X_i) per (t, f) in (-pi, pi]."""
    i, j = _check_pair(pair, spec.num_channels)
    x = spec.as_complex()
    return np.angle(x[j] * np.conj(x[i]))


def gcc_phat_itd(w: MultichannelWaveform, pair: tuple[int, int], max_lag_s: float) -> float:
    """Time difference of arrival in seconds; positive when channel j lags i.

    Whitened cross-correlation: peak lag of ifft(X_j conj(X_i)/|.|) within
    +-max_lag_s, refined by a 3-point parabolic fit. NaN for silent channels.
    """
    i, j = _check_pair(pair, w.num_channels)
    xi, xj = w.samples[i], w.samples[j]
    if float(xi @ xi) < ENERGY_FLOOR or float(xj @ xj) < ENERGY_FLOOR:
        return math.nan
    if max_lag_s <= 0:
        raise ValueError("max_lag_s must be positive")
    s = xi.shape[0]
    nfft = 1 << max(1, (2 * s - 1).bit_length())
    spec_i = np.fft.rfft(xi, nfft)
    spec_j = np.fft.rfft(xj, nfft)
    cross = spec_j * np.conj(spec_i)
    mag = np.abs(cross)
    cross = np.where(mag > 0, cross / np.maximum(mag, 1e-300), 0.0)
    corr = np.fft.irfft(cross, nfft)

    max_lag = int(round(max_lag_s * w.sample_rate))
    max_lag = min(max_lag, nfft // 2 - 1)
    lags = np.arange(-max_lag, max_lag + 1)
    vals = corr[lags % nfft]
    k = int(np.argmax(vals))
    peak_lag = float(lags[k])
    if 0 < k < len(vals) - 1:
        y0, y1, y2 = vals[k - 1], vals[k], vals[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0:
            peak_lag += 0.5 * (y0 - y2) / denom
    return peak_lag / w.sample_rate


def _check_pair(pair, m: int) -> tuple[int, int]:
    i, j = int(pair[0]), int(pair[1])
    if i == j or not (0 <= i < m and 0 <= j < m):
        raise ValueError(f"pair {pair} must be two distinct channels below {m}")
    return i, j


@dataclass
class PairErrors:
    pair: tuple[int, int]
    d_ild_db: float
    d_ipd_rad: float
    d_itd_us: float

    @property
    def defined(self) -> bool:
        return not (
            math.isnan(self.d_ild_db) or math.isnan(self.d_ipd_rad) or math.isnan(self.d_itd_us)
        )


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return np.angle(np.exp(1j * a))


def spatial_errors(
    est: MultichannelWaveform,
    ref: MultichannelWaveform,
    max_lag_s: float | None = None,
    window: GaussianWindowParams = DEFAULT_WINDOW,
    hop: int = DEFAULT_HOP,
) -> tuple[float, float, float, list]:
    """MAE of ILD/IPD/ITD cues over all channel pairs, est vs ref.

    IPD differences are averaged only over bins whose smallest magnitude
    across the four involved spectra stays within 60 dB of the overall peak;
    phases of near-silent bins are noise. Returns (d_ild_db, d_ipd_rad,
    d_itd_us, per_pair) where undefined pairs are excluded from the means.
    """
    if est.samples.shape != ref.samples.shape or est.sample_rate != ref.sample_rate:
        raise ValueError("est and ref must share shape and sample rate")
    m = est.num_channels
    if m < 2:
        raise ValueError("spatial cues need at least two channels")
    if max_lag_s is None:
        max_lag_s = 64 / est.sample_rate

    spec_est = stft(est, window, window.length, hop)
    spec_ref = stft(ref, window, window.length, hop)
    mag_est = np.abs(spec_est.as_complex())
    mag_ref = np.abs(spec_ref.as_complex())
    peak = max(mag_est.max(), mag_ref.max())
    gate = peak * 10.0 ** (IPD_GATE_DB / 20.0)

    per_pair = []
    for i in range(m):
        for j in range(i + 1, m):
            d_ild = abs(ild(est, (i, j)) - ild(ref, (i, j)))

            # peak == 0: a zero gate would admit every silent bin
            mask = (
                (mag_est[i] >= gate)
                & (mag_est[j] >= gate)
                & (mag_ref[i] >= gate)
                & (mag_ref[j] >= gate)
                & (peak > 0.0)
            )
            if mask.any():
                diff = _wrap_angle(ipd(spec_est, (i, j)) - ipd(spec_ref, (i, j)))
                d_ipd = float(np.abs(diff[mask]).mean())
            else:
                d_ipd = math.nan

            itd_e = gcc_phat_itd(est, (i, j), max_lag_s)
            itd_r = gcc_phat_itd(ref, (i, j), max_lag_s)
            d_itd = abs(itd_e - itd_r) * 1e6

            per_pair.append(PairErrors((i, j), d_ild, d_ipd, d_itd))

    def mean_defined(vals):
        ok = [v for v in vals if not math.isnan(v)]
        return float(np.mean(ok)) if ok else math.nan

    return (
        mean_defined([p.d_ild_db for p in per_pair]),
        mean_defined([p.d_ipd_rad for p in per_pair]),
        mean_defined([p.d_itd_us for p in per_pair]),
        per_pair,
    )


# ---------------------------------------------------------------------------
# Losses


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with probability clamp at 1e-7."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ValueError("pred and target must have the same length")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean())


def combined_loss(
    direct_est,
    reverb_est,
    direct_ref,
    reverb_ref,
    sed_pred=None,
    sed_target=None,
) -> float:
    """0.9 (-SNR) + 0.1 (-SI-SNR) over direct, reverb, and their sum, plus BCE."""
    d_e, r_e = _as_2d(direct_est), _as_2d(reverb_est)
    d_r, r_r = _as_2d(direct_ref), _as_2d(reverb_ref)
    if d_e.shape != d_r.shape or r_e.shape != r_r.shape or d_e.shape != r_e.shape:
        raise ValueError("all four stems must share one shape")
    total = 0.0
    for est, ref in ((d_e, d_r), (r_e, r_r), (d_e + r_e, d_r + r_r)):
        total += 0.9 * (-snr(est, ref)) + 0.1 * (-si_snr(est, ref))
    if (sed_pred is None) != (sed_target is None):
        raise ValueError("provide both sed_pred and sed_target, or neither")
    if sed_pred is not None:
        total += bce_loss(sed_pred, sed_target)
    return total


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricsReport:
    scene_id: str
    source_id: str
    snri_db: float
    si_snri_db: float
    d_ild_db: float
    d_ipd_rad: float
    d_itd_us: float
    per_pair: list = field(default_factory=list)

    def row(self) -> list[str]:
        return [self.scene_id, self.source_id] + [
            f"{v:.6f}" for v in (self.snri_db, self.si_snri_db, self.d_ild_db, self.d_ipd_rad, self.d_itd_us)
        ]


def evaluate_extraction(
    est: MultichannelWaveform,
    ref: MultichannelWaveform,
    mixture: MultichannelWaveform,
    scene_id: str = "",
    source_id: str = "",
    max_lag_s: float | None = None,
) -> MetricsReport:
    d_ild, d_ipd, d_itd, pairs = spatial_errors(est, ref, max_lag_s=max_lag_s)
    return MetricsReport(
        scene_id=scene_id,
        source_id=source_id,
        snri_db=snr_i(est, ref, mixture),
        si_snri_db=si_snr_i(est, ref, mixture),
        d_ild_db=d_ild,
        d_ipd_rad=d_ipd,
        d_itd_us=d_itd,
        per_pair=pairs,
    )


def write_reports_csv(reports: list, path, aggregate: bool = True) -> None:
    """One row per report plus a trailing mean row over finite values."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for r in reports:
            writer.writerow(r.row())
        if aggregate and reports:
            cols = []
            for name in ("snri_db", "si_snri_db", "d_ild_db", "d_ipd_rad", "d_itd_us"):
                vals = [getattr(r, name) for r in reports if not math.isnan(getattr(r, name))]
                cols.append(f"{float(np.mean(vals)):.6f}" if vals else "nan")
            writer.writerow(["mean", ""] + cols)
