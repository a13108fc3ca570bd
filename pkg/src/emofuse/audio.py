"""WAV decoding and canonicalization to 16 kHz mono sample buffers."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from emofuse.errors import EmofuseError

TARGET_RATE = 16000

# Polyphase windowed-sinc resampler: Kaiser window, 64 taps per phase.
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64


class AudioIngestError(EmofuseError):
    """Base error for audio decoding problems; carries the offending path."""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{message}: {self.path}")


class AudioFileMissing(AudioIngestError):
    def __init__(self, path):
        super().__init__(path, "audio file not found")


class MalformedWavFile(AudioIngestError):
    def __init__(self, path, detail: str):
        super().__init__(path, f"malformed WAV file ({detail})")


class UnsupportedWavEncoding(AudioIngestError):
    def __init__(self, path, detail: str):
        super().__init__(path, f"unsupported WAV encoding ({detail})")


@dataclass
class Waveform:
    """Decoded audio: float64 amplitudes in [-1, 1].

    samples has shape (n,) for mono and (n, channels) otherwise. After
    canonicalize() the rate is 16000 Hz and the signal is mono.
    """

    samples: np.ndarray
    sample_rate: int
    channel_count: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def is_canonical(self) -> bool:
        return self.sample_rate == TARGET_RATE and self.channel_count == 1


def _read_chunks(raw: bytes, path) -> dict[bytes, bytes]:
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedWavFile(path, f"truncated {cid.decode(errors='replace')!r} chunk")
        if cid not in chunks:
            chunks[cid] = body
        pos += 8 + size + (size & 1)  # chunks are padded to even length
    return chunks


def decode_wav(path) -> Waveform:
    """Decode a RIFF/WAVE file with PCM16 or IEEE-float payload.

    Amplitudes are scaled to [-1, 1]; the original sample rate and channel
    count are preserved.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioFileMissing(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavFile(path, "missing RIFF/WAVE header")
    chunks = _read_chunks(raw, path)
    if b"fmt " not in chunks:
        raise MalformedWavFile(path, "no fmt chunk")
    if b"data" not in chunks:
        raise MalformedWavFile(path, "no data chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise MalformedWavFile(path, "fmt chunk too short")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels < 1:
        raise MalformedWavFile(path, "zero channels declared")
    data = chunks[b"data"]

    if audio_format == 1:  # integer PCM
        if bits != 16:
            raise UnsupportedWavEncoding(path, f"PCM with {bits} bits; only 16-bit PCM supported")
        if len(data) % (2 * channels) != 0:
            raise MalformedWavFile(path, "data size not a multiple of the frame size")
        values = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3:  # IEEE float
        if bits == 32:
            dtype = "<f4"
        elif bits == 64:
            dtype = "<f8"
        else:
            raise UnsupportedWavEncoding(path, f"IEEE float with {bits} bits")
        if len(data) % ((bits // 8) * channels) != 0:
            raise MalformedWavFile(path, "data size not a multiple of the frame size")
        values = np.frombuffer(data, dtype=dtype).astype(np.float64)
    else:
        raise UnsupportedWavEncoding(path, f"format code {audio_format}")

    if values.size == 0:
        raise MalformedWavFile(path, "empty data chunk")
    if channels > 1:
        values = values.reshape(-1, channels)
    return Waveform(samples=values, sample_rate=int(rate), channel_count=int(channels))


def _design_taps(up: int, down: int) -> np.ndarray:
    n_taps = TAPS_PER_PHASE * up
    n = np.arange(n_taps) - (n_taps - 1) / 2.0
    cutoff = min(1.0 / up, 1.0 / down)
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(n_taps, KAISER_BETA)
    return h / h.sum()


def canonicalize(w: Waveform) -> Waveform:
    """Downmix to mono (channel mean) and resample to 16 kHz.

    Already-canonical input is returned unchanged, which makes the operation
    idempotent bit-for-bit.
    """
    if w.num_samples == 0:
        raise ValueError("cannot canonicalize zero-length waveform")
    if w.is_canonical():
        return w
    samples = w.samples
    if w.channel_count > 1:
        samples = samples.mean(axis=1)
    if w.sample_rate != TARGET_RATE:
        g = gcd(TARGET_RATE, w.sample_rate)
        up, down = TARGET_RATE // g, w.sample_rate // g
        samples = resample_poly(samples, up, down, window=_design_taps(up, down))
    samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples=samples, sample_rate=TARGET_RATE, channel_count=1)


def write_wav_pcm16(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write a mono PCM16 WAV file (used by fixtures and the synthetic corpus)."""
    samples = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = struct.pack("<HHIIHH", 1, 1, sample_rate, sample_rate * 2, 2, 16)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)
