"""Frame-level acoustic descriptors, utterance functionals and SNR estimation.

The 36 per-frame descriptors, in frozen column order: 13 MFCCs, zero
crossing rate, energy, entropy of energy, spectral centroid, spectral
spread, spectral entropy, spectral flux, spectral rolloff, 12 chroma
values, chroma deviation, harmonic ratio, pitch. Frames are 25 ms with a
10 ms hop at 16 kHz (400/160 samples). Appending first-order deltas gives
72 streams; 21 functionals per stream give the 1512-dim utterance vector.

All conventions below (window, FFT size, mel filter count, sub-band
counts, silence fall-backs) are the fixed contract of this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from emofuse.audio import TARGET_RATE, Waveform

FRAME_LEN = 400  # 25 ms at 16 kHz
HOP_LEN = 160  # 10 ms
NFFT = 512
N_MELS = 26
N_MFCC = 13
LOG_FLOOR = 1e-10  # mel energies are floored before the log
ENERGY_ENTROPY_BLOCKS = 10
SPECTRAL_ENTROPY_BANDS = 10
ROLLOFF_FRACTION = 0.90
PITCH_MIN_LAG = TARGET_RATE // 500  # 32 samples -> 500 Hz ceiling
PITCH_MAX_LAG = TARGET_RATE // 50  # 320 samples -> 50 Hz floor
VOICING_THRESHOLD = 0.1
FUNCTIONAL_COUNT = 21

SPECTRAL_NAMES = (
    "zcr",
    "energy",
    "energy_entropy",
    "spectral_centroid",
    "spectral_spread",
    "spectral_entropy",
    "spectral_flux",
    "spectral_rolloff",
)

LLD_NAMES = tuple(
    [f"mfcc_{i:02d}" for i in range(1, N_MFCC + 1)]
    + list(SPECTRAL_NAMES)
    + [f"chroma_{i:02d}" for i in range(1, 13)]
    + ["chroma_deviation", "harmonic_ratio", "pitch"]
)

FUNCTIONAL_NAMES = (
    "mean",
    "std",
    "skewness",
    "kurtosis",
    "min",
    "max",
    "range",
    "rel_min_pos",
    "rel_max_pos",
    "quartile_1",
    "median",
    "quartile_3",
    "iqr_1_2",
    "iqr_2_3",
    "iqr_1_3",
    "percentile_1",
    "percentile_99",
    "range_p1_p99",
    "lr_slope",
    "lr_offset",
    "lr_error",
)

FUNCTIONAL_DIM = 72 * FUNCTIONAL_COUNT  # 1512

_WINDOW = np.hamming(FRAME_LEN)
_BIN_FREQS = np.arange(NFFT // 2 + 1) * (TARGET_RATE / NFFT)


@dataclass
class FrameFeatureMatrix:
    """Per-utterance T x D descriptor sequence (D = 36, or 72 with deltas)."""

    values: np.ndarray
    feature_names: tuple[str, ...] = field(default=LLD_NAMES)
    frame_ms: int = 25
    hop_ms: int = 10

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"expected 2-D feature matrix, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.feature_names):
            raise ValueError(
                f"{self.values.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains non-finite entries")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def frame_signal(w: Waveform) -> np.ndarray:
    """Slice a canonical waveform into (T, 400) frames with hop 160.

    The tail remainder shorter than one frame is dropped, so
    T = floor((n - 400) / 160) + 1.
    """
    if not w.is_canonical():
        raise ValueError("frame_signal requires canonical 16 kHz mono input")
    x = w.samples
    if x.shape[0] < FRAME_LEN:
        raise ValueError(
            f"utterance too short: {x.shape[0]} samples < one {FRAME_LEN}-sample frame"
        )
    n_frames = (x.shape[0] - FRAME_LEN) // HOP_LEN + 1
    idx = np.arange(FRAME_LEN)[None, :] + HOP_LEN * np.arange(n_frames)[:, None]
    return x[idx]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank() -> np.ndarray:
    """26 triangular filters spanning 0-8000 Hz, sampled at the FFT bin centers."""
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(TARGET_RATE / 2), N_MELS + 2))
    fb = np.zeros((N_MELS, NFFT // 2 + 1))
    for j in range(N_MELS):
        lo, center, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (_BIN_FREQS - lo) / (center - lo)
        falling = (hi - _BIN_FREQS) / (hi - center)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


_MEL_FB = _mel_filterbank()


def _power_spectra(frames: np.ndarray) -> np.ndarray:
    windowed = frames * _WINDOW
    return np.abs(np.fft.rfft(windowed, NFFT, axis=-1)) ** 2


def _mfcc_batch(power: np.ndarray) -> np.ndarray:
    mel_energies = power @ _MEL_FB.T
    log_e = np.log(np.maximum(mel_energies, LOG_FLOOR))
    ceps = dct(log_e, type=2, norm="ortho", axis=-1)
    return ceps[..., 1 : N_MFCC + 1]


def compute_mfcc(frame: np.ndarray) -> np.ndarray:
    """13 cepstral coefficients (c1..c13; c0 is excluded, energy is separate).

    Recipe: Hamming window, 512-point FFT, 26 triangular mel filters over
    0-8000 Hz, log of floored filter energies, orthonormal DCT-II.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"expected a {FRAME_LEN}-sample frame, got shape {frame.shape}")
    return _mfcc_batch(_power_spectra(frame[None, :]))[0]


def frame_magnitude_spectrum(frame: np.ndarray) -> np.ndarray:
    """Magnitude spectrum of a Hamming-windowed frame (257 bins)."""
    frame = np.asarray(frame, dtype=np.float64)
    return np.sqrt(_power_spectra(frame[None, :])[0])


def _entropy_bits(p: np.ndarray, axis: int = -1) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    return -terms.sum(axis=axis)


def _spectral_batch(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (T, 8) descriptor block and the (T, 257) magnitude spectra."""
    n = frames.shape[0]
    power = _power_spectra(frames)
    mag = np.sqrt(power)

    signs = np.where(frames >= 0.0, 1.0, -1.0)
    zcr = (signs[:, 1:] != signs[:, :-1]).sum(axis=1) / (FRAME_LEN - 1)

    energy = np.mean(frames**2, axis=1)

    sub = frames.reshape(n, ENERGY_ENTROPY_BLOCKS, -1)
    sub_e = np.sum(sub**2, axis=2)
    tot_e = sub_e.sum(axis=1, keepdims=True)
    p_e = np.divide(sub_e, tot_e, out=np.zeros_like(sub_e), where=tot_e > 0.0)
    energy_entropy = np.where(tot_e[:, 0] > 0.0, _entropy_bits(p_e), 0.0)

    mag_sum = mag.sum(axis=1)
    safe = np.where(mag_sum > 0.0, mag_sum, 1.0)
    centroid = np.where(mag_sum > 0.0, (mag * _BIN_FREQS).sum(axis=1) / safe, 0.0)
    spread_sq = (mag * (_BIN_FREQS[None, :] - centroid[:, None]) ** 2).sum(axis=1) / safe
    spread = np.where(mag_sum > 0.0, np.sqrt(np.maximum(spread_sq, 0.0)), 0.0)

    n_band_bins = (power.shape[1] // SPECTRAL_ENTROPY_BANDS) * SPECTRAL_ENTROPY_BANDS
    bands = power[:, :n_band_bins].reshape(n, SPECTRAL_ENTROPY_BANDS, -1).sum(axis=2)
    band_tot = bands.sum(axis=1, keepdims=True)
    p_b = np.divide(bands, band_tot, out=np.zeros_like(bands), where=band_tot > 0.0)
    spectral_entropy = np.where(band_tot[:, 0] > 0.0, _entropy_bits(p_b), 0.0)

    l1 = mag.sum(axis=1, keepdims=True)
    mag_n = np.divide(mag, l1, out=np.zeros_like(mag), where=l1 > 0.0)
    flux = np.zeros(n)
    if n > 1:
        flux[1:] = ((mag_n[1:] - mag_n[:-1]) ** 2).sum(axis=1)

    pow_tot = power.sum(axis=1)
    cum = np.cumsum(power, axis=1)
    reached = cum >= ROLLOFF_FRACTION * pow_tot[:, None]
    first = reached.argmax(axis=1)
    rolloff = np.where(pow_tot > 0.0, _BIN_FREQS[first], 0.0)

    block = np.stack(
        [zcr, energy, energy_entropy, centroid, spread, spectral_entropy, flux, rolloff],
        axis=1,
    )
    return block, mag


def compute_spectral_descriptors(
    frame: np.ndarray, previous_frame_spectrum: np.ndarray | None = None
) -> np.ndarray:
    """ZCR, energy, entropy of energy, centroid, spread, spectral entropy,
    flux and rolloff for one frame.

    previous_frame_spectrum is the magnitude spectrum of the preceding frame
    (see frame_magnitude_spectrum); flux is 0 when it is absent.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"expected a {FRAME_LEN}-sample frame, got shape {frame.shape}")
    block, mag = _spectral_batch(frame[None, :])
    out = block[0]
    if previous_frame_spectrum is not None:
        prev = np.asarray(previous_frame_spectrum, dtype=np.float64)
        pair = np.stack([prev**2, mag[0] ** 2])
        flux = _spectral_batch_flux(pair)
        out[6] = flux
    return out


def _spectral_batch_flux(power_pair: np.ndarray) -> float:
    mag = np.sqrt(power_pair)
    l1 = mag.sum(axis=1, keepdims=True)
    mag_n = np.divide(mag, l1, out=np.zeros_like(mag), where=l1 > 0.0)
    return float(((mag_n[1] - mag_n[0]) ** 2).sum())


_PITCH_CLASS = np.zeros(NFFT // 2 + 1, dtype=np.int64)
_PITCH_CLASS[1:] = np.mod(np.rint(12.0 * np.log2(_BIN_FREQS[1:] / 440.0)).astype(np.int64), 12)


def _chroma_batch(frames: np.ndarray) -> np.ndarray:
    power = _power_spectra(frames)
    chroma = np.zeros((frames.shape[0], 12))
    np.add.at(chroma.T, _PITCH_CLASS[1:], power[:, 1:].T)
    tot = chroma.sum(axis=1, keepdims=True)
    chroma = np.divide(chroma, tot, out=np.zeros_like(chroma), where=tot > 0.0)
    deviation = chroma.std(axis=1)
    return np.concatenate([chroma, deviation[:, None]], axis=1)


def compute_chroma(frame: np.ndarray) -> np.ndarray:
    """12 chroma values plus their population standard deviation.

    Bin k > 0 with frequency f maps to pitch class round(12*log2(f/440)) mod
    12 (class 0 is A); power is accumulated and the vector normalized to sum
    1, staying all-zero for silent frames.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"expected a {FRAME_LEN}-sample frame, got shape {frame.shape}")
    return _chroma_batch(frame[None, :])[0]


def _pitch_batch(frames: np.ndarray) -> np.ndarray:
    n, flen = frames.shape
    nfft = 1024  # >= FRAME_LEN + PITCH_MAX_LAG, linear autocorrelation via FFT
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, : PITCH_MAX_LAG + 1]

    sq = frames**2
    csum = np.cumsum(sq, axis=1)
    total = csum[:, -1]
    lags = np.arange(PITCH_MIN_LAG, PITCH_MAX_LAG + 1)
    e_head = csum[:, flen - 1 - lags]  # sum of x_n^2 for n in [0, flen-1-lag]
    e_tail = total[:, None] - csum[:, lags - 1]  # for n in [lag, flen-1]
    denom = np.sqrt(e_head * e_tail)
    r = np.divide(acf[:, lags], denom, out=np.zeros((n, lags.size)), where=denom > 0.0)

    best = r.argmax(axis=1)
    ratio = np.clip(r[np.arange(n), best], 0.0, 1.0)
    pitch = np.where(ratio >= VOICING_THRESHOLD, TARGET_RATE / lags[best], 0.0)
    return np.stack([ratio, pitch], axis=1)


def compute_pitch_harmonic(frame: np.ndarray) -> tuple[float, float]:
    """(harmonic_ratio, pitch_hz) from normalized autocorrelation.

    Lags 32..320 samples are searched (50-500 Hz); pitch is reported as 0
    when the peak falls below the 0.1 voicing threshold.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (FRAME_LEN,):
        raise ValueError(f"expected a {FRAME_LEN}-sample frame, got shape {frame.shape}")
    out = _pitch_batch(frame[None, :])[0]
    return float(out[0]), float(out[1])


def assemble_llds(w: Waveform) -> FrameFeatureMatrix:
    """Full T x 36 descriptor matrix for one canonical utterance."""
    frames = frame_signal(w)
    power = _power_spectra(frames)
    mfcc = _mfcc_batch(power)
    spectral, _ = _spectral_batch(frames)
    chroma = _chroma_batch(frames)
    pitch = _pitch_batch(frames)
    values = np.concatenate([mfcc, spectral, chroma, pitch], axis=1)
    return FrameFeatureMatrix(values=values, feature_names=LLD_NAMES)


def compute_deltas(m: FrameFeatureMatrix) -> FrameFeatureMatrix:
    """Append first-order regression deltas (half-window 2, edge replication)."""
    x = m.values
    padded = np.concatenate([x[:1], x[:1], x, x[-1:], x[-1:]], axis=0)
    t = np.arange(2, padded.shape[0] - 2)
    delta = (
        (padded[t + 1] - padded[t - 1]) + 2.0 * (padded[t + 2] - padded[t - 2])
    ) / 10.0
    names = m.feature_names + tuple(f"{n}_delta" for n in m.feature_names)
    return FrameFeatureMatrix(
        values=np.concatenate([x, delta], axis=1),
        feature_names=names,
        frame_ms=m.frame_ms,
        hop_ms=m.hop_ms,
    )


def functional_feature_names(lld_names: tuple[str, ...] | None = None) -> tuple[str, ...]:
    if lld_names is None:
        lld_names = LLD_NAMES + tuple(f"{n}_delta" for n in LLD_NAMES)
    return tuple(f"{s}_{f}" for s in lld_names for f in FUNCTIONAL_NAMES)


def utterance_functionals(m: FrameFeatureMatrix) -> np.ndarray:
    """21 functionals over each of the 72 streams -> 1512-dim vector.

    Functional order per stream: mean, std, skewness, kurtosis, min, max,
    range, relative min/max position, quartiles, three inter-quartile
    ranges, 1st/99th percentiles and their range, linear-regression slope,
    offset and quadratic error. Moments are population moments, kurtosis is
    excess kurtosis, and both fall back to 0 when std < 1e-12.
    """
    x = m.values
    if x.shape[1] != 72:
        raise ValueError(f"functionals require 72 streams (with deltas), got {x.shape[1]}")
    n = x.shape[0]

    mean = x.mean(axis=0)
    centered = x - mean
    std = np.sqrt(np.mean(centered**2, axis=0))
    stable = std >= 1e-12
    safe_std = np.where(stable, std, 1.0)
    skew = np.where(stable, np.mean(centered**3, axis=0) / safe_std**3, 0.0)
    kurt = np.where(stable, np.mean(centered**4, axis=0) / safe_std**4 - 3.0, 0.0)

    mn = x.min(axis=0)
    mx = x.max(axis=0)
    if n > 1:
        rel_min = x.argmin(axis=0) / (n - 1)
        rel_max = x.argmax(axis=0) / (n - 1)
    else:
        rel_min = np.zeros(x.shape[1])
        rel_max = np.zeros(x.shape[1])

    p1, q1, med, q3, p99 = np.percentile(x, [1, 25, 50, 75, 99], axis=0)

    t = np.arange(n, dtype=np.float64)
    if n > 1:
        t_mean = t.mean()
        t_var = np.mean((t - t_mean) ** 2)
        slope = ((t - t_mean)[:, None] * centered).mean(axis=0) / t_var
    else:
        slope = np.zeros(x.shape[1])
    offset = mean - slope * t.mean()
    resid = x - (slope[None, :] * t[:, None] + offset[None, :])
    lr_error = np.mean(resid**2, axis=0)

    per_stream = np.stack(
        [
            mean, std, skew, kurt, mn, mx, mx - mn, rel_min, rel_max,
            q1, med, q3, med - q1, q3 - med, q3 - q1,
            p1, p99, p99 - p1, slope, offset, lr_error,
        ],
        axis=1,
    )
    return per_stream.reshape(-1)


def estimate_snr(w: Waveform) -> float:
    """Energy-percentile SNR estimate in dB.

    Noise power is the mean of the lowest-decile frame energies (floored at
    1e-12), signal power the mean of the highest quartile.
    """
    frames = frame_signal(w)
    n = frames.shape[0]
    if n < 10:
        raise ValueError(f"SNR estimate needs at least 10 frames, got {n}")
    energies = np.sort(np.mean(frames**2, axis=1))
    n_noise = max(1, n // 10)
    n_signal = max(1, n // 4)
    noise = max(float(energies[:n_noise].mean()), 1e-12)
    signal = float(energies[-n_signal:].mean())
    return 10.0 * np.log10(signal / noise)
