import struct

import numpy as np
import pytest

from emofuse.audio import (
    TARGET_RATE,
    AudioFileMissing,
    MalformedWavFile,
    UnsupportedWavEncoding,
    Waveform,
    canonicalize,
    decode_wav,
    write_wav_pcm16,
)


def _sine(freq, seconds, rate, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def test_pcm16_roundtrip(tmp_path):
    path = tmp_path / "tone.wav"
    x = _sine(440, 0.25, 16000)
    write_wav_pcm16(path, x, 16000)
    w = decode_wav(path)
    assert w.sample_rate == 16000
    assert w.channel_count == 1
    assert w.num_samples == x.size
    # quantization to 16 bits only
    assert np.max(np.abs(w.samples - x)) < 1.0 / 32768.0


def test_decode_missing_file(tmp_path):
    with pytest.raises(AudioFileMissing):
        decode_wav(tmp_path / "nope.wav")


def test_decode_rejects_non_riff(tmp_path):
    path = tmp_path / "garbage.wav"
    path.write_bytes(b"OGGS" + b"\x00" * 64)
    with pytest.raises(MalformedWavFile):
        decode_wav(path)


def test_decode_rejects_8bit_pcm(tmp_path):
    path = tmp_path / "8bit.wav"
    payload = bytes(range(64))
    fmt = struct.pack("<HHIIHH", 1, 1, 16000, 16000, 1, 8)
    blob = (
        b"RIFF"
        + struct.pack("<I", 36 + len(payload))
        + b"WAVE"
        + b"fmt "
        + struct.pack("<I", len(fmt))
        + fmt
        + b"data"
        + struct.pack("<I", len(payload))
        + payload
    )
    path.write_bytes(blob)
    with pytest.raises(UnsupportedWavEncoding):
        decode_wav(path)


def test_decode_float32_wav(tmp_path):
    path = tmp_path / "f32.wav"
    x = _sine(100, 0.1, 16000).astype("<f4")
    payload = x.tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, 16000, 16000 * 4, 4, 32)
    blob = (
        b"RIFF"
        + struct.pack("<I", 36 + len(payload))
        + b"WAVE"
        + b"fmt "
        + struct.pack("<I", len(fmt))
        + fmt
        + b"data"
        + struct.pack("<I", len(payload))
        + payload
    )
    path.write_bytes(blob)
    w = decode_wav(path)
    assert np.allclose(w.samples, x.astype(np.float64), atol=1e-7)


def test_canonical_input_returned_unchanged():
    w = Waveform(samples=_sine(200, 0.1, 16000), sample_rate=16000, channel_count=1)
    assert canonicalize(w) is w


def test_stereo_downmix_is_channel_mean():
    left = _sine(300, 0.1, 16000)
    right = np.zeros_like(left)
    stereo = np.stack([left, right], axis=1)
    w = Waveform(samples=stereo, sample_rate=16000, channel_count=2)
    out = canonicalize(w)
    assert out.channel_count == 1
    assert np.allclose(out.samples, left / 2.0)


@pytest.mark.parametrize("rate", [22050, 44100, 8000])
def test_resample_output_length(rate):
    seconds = 0.5
    w = Waveform(
        samples=_sine(200, seconds, rate), sample_rate=rate, channel_count=1
    )
    out = canonicalize(w)
    assert out.sample_rate == TARGET_RATE
    expected = int(np.ceil(w.num_samples * TARGET_RATE / rate))
    assert out.num_samples == expected


def test_resample_preserves_dc_gain():
    w = Waveform(samples=np.full(44100, 0.25), sample_rate=44100, channel_count=1)
    out = canonicalize(w)
    middle = out.samples[2000:-2000]
    assert np.max(np.abs(middle - 0.25)) < 5e-6


def test_resample_preserves_tone_frequency():
    w = Waveform(samples=_sine(440, 1.0, 44100), sample_rate=44100, channel_count=1)
    out = canonicalize(w)
    spec = np.abs(np.fft.rfft(out.samples[:8192] * np.hanning(8192)))
    peak_hz = spec.argmax() * TARGET_RATE / 8192
    assert abs(peak_hz - 440.0) < TARGET_RATE / 8192 + 1e-9


def test_waveform_rejects_bad_input():
    with pytest.raises(ValueError):
        Waveform(samples=np.array([]), sample_rate=16000, channel_count=1)
    with pytest.raises(ValueError):
        Waveform(samples=np.array([np.nan]), sample_rate=16000, channel_count=1)
    with pytest.raises(ValueError):
        Waveform(samples=np.array([0.0]), sample_rate=0, channel_count=1)
