"""Synthetic mini-corpus generator for tests and demos.

Everything here is fixture plumbing, not science: tones with class-coded
pitch/energy patterns stand in for speech, pseudo-word transcripts carry
class vocabulary, and the "embeddings" are seeded hashes mixed with a few
measured signal statistics. The point is a corpus on which every
sub-system has real signal to find, with class imbalance, speaker
structure, and mixed source sample rates, sized to run end to end in
minutes.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from emofuse.audio import write_wav_pcm16
from emofuse.featio import write_embedding
from emofuse.labels import EMOTION_CLASSES
from emofuse.manifest import UtteranceRecord, write_manifest

CLASS_PROPORTIONS = {
    "angry": 0.180,
    "anxious": 0.093,
    "disgust": 0.029,
    "happy": 0.168,
    "neutral": 0.285,
    "sad": 0.094,
    "surprise": 0.036,
    "worried": 0.115,
}

# f0 base, harmonic tilt, tremolo (rate Hz, depth), noise level,
# pitch drift over the utterance, duration range (s)
_PROFILES = {
    "angry": (285.0, -0.5, (6.0, 0.35), 0.08, 0.00, (0.8, 1.4)),
    "anxious": (255.0, -1.0, (8.5, 0.25), 0.15, 0.00, (0.9, 1.6)),
    "disgust": (130.0, -2.0, (2.5, 0.20), 0.12, -0.05, (1.0, 1.8)),
    "happy": (310.0, -0.7, (5.0, 0.30), 0.04, 0.05, (0.8, 1.5)),
    "neutral": (190.0, -1.2, (3.0, 0.10), 0.06, 0.00, (1.0, 1.8)),
    "sad": (115.0, -1.8, (1.5, 0.15), 0.05, -0.10, (1.2, 2.0)),
    "surprise": (360.0, -0.6, (7.0, 0.40), 0.05, 0.30, (0.6, 1.2)),
    "worried": (225.0, -1.4, (4.0, 0.20), 0.10, -0.15, (1.0, 1.7)),
}

_SOURCE_RATES = ((16000, 0.75), (22050, 0.15), (44100, 0.10))
_NUM_SPEAKERS = 24
_NUM_FEMALE = 13  # 13/24 = 0.54 female share
TEST_FRACTION = 0.125
MISSING_TRANSCRIPT_RATE = 0.05
EMBEDDING_DIM = 200

_SYLLABLES = (
    "ba be bi bo bu da de di do du ga ge gi go gu ka ke ki ko ku "
    "ma me mi mo mu na ne ni no nu ra re ri ro ru sa se si so su "
    "ta te ti to tu va ve vi vo vu za ze zi zo zu"
).split()

_FILLERS = ("la", "num", "tok", "sen", "vi", "por", "den", "agu", "mir", "ost")


def _largest_remainder(total: int, weights: list[float]) -> list[int]:
    quotas = [total * w for w in weights]
    counts = [int(np.floor(q)) for q in quotas]
    short = total - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


@dataclass
class _Speaker:
    id: str
    gender: str
    f0_mult: float


def _speakers(rng: np.random.Generator) -> list[_Speaker]:
    out = []
    for i in range(_NUM_SPEAKERS):
        gender = "female" if i < _NUM_FEMALE else "male"
        base = 1.15 if gender == "female" else 0.80
        out.append(
            _Speaker(id=f"spk{i:02d}", gender=gender, f0_mult=base * rng.uniform(0.92, 1.08))
        )
    return out


def _class_words(cls: str) -> list[str]:
    rng = np.random.default_rng([zlib.crc32(cls.encode()), 0x77])
    words = set()
    while len(words) < 12:
        k = int(rng.integers(2, 4))
        words.add("".join(_SYLLABLES[int(j)] for j in rng.integers(0, len(_SYLLABLES), k)))
    return sorted(words)


def _class_cjk(cls: str) -> list[str]:
    base = EMOTION_CLASSES.index(cls)
    # four ideographs per class, drawn from the unified and extension-A blocks
    return [chr(0x4E00 + 37 * base + j) for j in range(3)] + [chr(0x3400 + 11 * base)]


def _transcript(cls: str, rng: np.random.Generator) -> str:
    words = _class_words(cls)
    cjk = _class_cjk(cls)
    n_tokens = int(rng.integers(6, 15))
    parts = []
    for _ in range(n_tokens):
        r = rng.random()
        if r < 0.55:
            parts.append(words[int(rng.integers(0, len(words)))])
        elif r < 0.85:
            parts.append(_FILLERS[int(rng.integers(0, len(_FILLERS)))])
        else:
            parts.append(
                "".join(cjk[int(j)] for j in rng.integers(0, len(cjk), int(rng.integers(1, 3))))
            )
    return " ".join(parts)


def _tone(cls: str, speaker: _Speaker, rate: int, rng: np.random.Generator) -> np.ndarray:
    f0_base, tilt, (trem_rate, trem_depth), noise_level, drift, (dmin, dmax) = _PROFILES[cls]
    duration = rng.uniform(dmin, dmax)
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    f0 = f0_base * speaker.f0_mult * (1.0 + 0.02 * rng.standard_normal())
    f_inst = f0 * (1.0 + drift * t / t[-1])
    phase = 2.0 * np.pi * np.cumsum(f_inst) / rate
    y = np.zeros(n)
    for h in range(1, 7):
        y += float(h) ** tilt * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    y *= 1.0 + trem_depth * np.sin(2.0 * np.pi * trem_rate * t)
    attack = min(0.08, duration / 4)
    release = min(0.15, duration / 4)
    env = np.minimum(1.0, t / attack) * np.minimum(1.0, (t[-1] - t) / release)
    y = y * env + noise_level * rng.standard_normal(n)
    peak = np.abs(y).max()
    return y * (0.55 * rng.uniform(0.8, 1.1) / peak)


def _embedding(cls: str, speaker: _Speaker, signal: np.ndarray, rate: int, rng: np.random.Generator) -> np.ndarray:
    """Pseudo-embedding: speaker hash + class hash + crude signal stats.

    Stands in for an external utterance-embedding extractor; carries
    deliberate class/speaker structure so the downstream net has something
    to learn. Not a speech representation.
    """
    spk_rng = np.random.default_rng([zlib.crc32(speaker.id.encode()), 0xE0])
    cls_rng = np.random.default_rng([zlib.crc32(cls.encode()), 0xE1])
    vec = np.zeros(EMBEDDING_DIM)
    vec[0:64] = spk_rng.standard_normal(64)
    vec[64:128] = 0.9 * cls_rng.standard_normal(64) + 0.5 * rng.standard_normal(64)
    energy = float(np.mean(signal**2))
    zc = float(np.mean(np.abs(np.diff(np.signbit(signal).astype(np.float64)))))
    stats = np.array([np.log(len(signal) / rate), np.log(energy + 1e-9), zc * 10.0])
    vec[128 : 128 + 3] = stats
    vec[131:200] = 0.3 * rng.standard_normal(69)
    return vec


def make_corpus(out_dir, size: int = 800, seed: int = 0):
    """Generate wavs, embeddings, and the manifest; returns the manifest path."""
    from pathlib import Path

    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "emb").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, zlib.crc32(b"synthetic-corpus")])
    speakers = _speakers(rng)

    class_counts = _largest_remainder(
        size, [CLASS_PROPORTIONS[c] for c in EMOTION_CLASSES]
    )
    rate_counts = _largest_remainder(size, [w for _, w in _SOURCE_RATES])
    rate_pool = []
    for (rate, _), k in zip(_SOURCE_RATES, rate_counts):
        rate_pool.extend([rate] * k)
    rate_pool = [int(rate_pool[i]) for i in rng.permutation(size)]

    records: list[UtteranceRecord] = []
    utt_no = 0
    for cls, count in zip(EMOTION_CLASSES, class_counts):
        n_test = int(np.floor(count * TEST_FRACTION + 0.5))
        spk_order = rng.permutation(_NUM_SPEAKERS)
        for j in range(count):
            speaker = speakers[int(spk_order[j % _NUM_SPEAKERS])]
            utt_id = f"utt_{utt_no:04d}"
            rate = rate_pool[utt_no]
            utt_no += 1
            signal = _tone(cls, speaker, rate, rng)
            wav_path = out_dir / "wav" / f"{utt_id}.wav"
            write_wav_pcm16(wav_path, signal, rate)
            emb_path = out_dir / "emb" / f"{utt_id}.txt"
            write_embedding(emb_path, _embedding(cls, speaker, signal, rate, rng))
            transcript = None
            if rng.random() >= MISSING_TRANSCRIPT_RATE:
                transcript = _transcript(cls, rng)
            records.append(
                UtteranceRecord(
                    id=utt_id,
                    audio_path=str(wav_path),
                    emotion=cls,
                    speaker_id=speaker.id,
                    gender=speaker.gender,
                    partition="test" if j < n_test else "train",
                    transcript=transcript,
                    embedding_path=str(emb_path),
                )
            )
    manifest_path = out_dir / "manifest.tsv"
    write_manifest(records, manifest_path)
    return manifest_path
