"""WAV ingestion, energy-based VAD, and log mel filterbank extraction.

The front end that turns PCM audio into the (frames, bins) feature maps
the rest of the package consumes: strict 16-bit mono RIFF parsing, a
frame-energy gate for silence removal, and an HTK-mel triangular
filterbank over Hann-windowed power spectra.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import FormatError

FBANK_MAGIC = "voxtend-fbank v1"


@dataclass(frozen=True)
class Waveform:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FbankConfig:
    sample_rate: int = 16000
    frame_len: float = 0.025
    frame_shift: float = 0.010
    n_fft: int = 512
    n_mels: int = 64
    f_min: float = 300.0
    f_max: float = 7600.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
        if self.n_fft & (self.n_fft - 1) or self.n_fft < 1:
            raise ValueError("n_fft must be a power of two")
        if self.n_fft < self.frame_samples:
            raise ValueError("n_fft must cover one frame of samples")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_len * self.sample_rate))

    @property
    def shift_samples(self) -> int:
        return int(round(self.frame_shift * self.sample_rate))


# ---------------------------------------------------------------------------
# WAV parsing


def read_wav(data: bytes | IO[bytes]) -> Waveform:
    """Parse a RIFF/WAVE byte stream; PCM 16-bit mono only.

    Samples are scaled by 1/32768 into [-1, 1).  Truncated data is an
    error, never a partial read.
    """
    if not isinstance(data, (bytes, bytearray)):
        data = data.read()
    buf = bytes(data)
    if len(buf) < 12 or buf[0:4] != b"RIFF":
        raise FormatError("missing RIFF header")
    if buf[8:12] != b"WAVE":
        raise FormatError("missing WAVE form type")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack("<I", buf[pos + 4:pos + 8])
        body = buf[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise FormatError("fmt chunk too small")
            audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if audio_format != 1:
                raise FormatError(f"unsupported audio format {audio_format} (PCM only)")
            if channels != 1:
                raise FormatError(f"unsupported channel count {channels} (mono only)")
            if bits != 16:
                raise FormatError(f"unsupported bits per sample {bits} (16-bit only)")
            fmt = rate
        elif cid == b"data":
            if len(body) < size:
                raise FormatError("data chunk truncated")
            pcm = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise FormatError("missing fmt chunk")
    if pcm is None:
        raise FormatError("missing data chunk")
    if len(pcm) % 2:
        raise FormatError("data chunk holds a partial sample")
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(sample_rate=fmt, samples=samples)


# ---------------------------------------------------------------------------
# VAD


def vad_filter(w: Waveform, frame_len: float = 0.025, threshold_db: float = -40.0) -> Waveform:
    """Drop non-overlapping frames whose RMS energy falls below threshold_db.

    Energy is measured in dB relative to full scale (sample value 1.0);
    all-zero frames sit at -inf dB and always drop.  Survivors are
    concatenated, so the output length is a multiple of the frame size.
    """
    if frame_len <= 0.0:
        raise ValueError("frame_len must be positive")
    size = int(round(frame_len * w.sample_rate))
    n_frames = len(w.samples) // size
    frames = w.samples[: n_frames * size].reshape(n_frames, size)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(rms)
    kept = frames[db >= threshold_db]
    return Waveform(sample_rate=w.sample_rate, samples=kept.reshape(-1))


# ---------------------------------------------------------------------------
# log mel filterbank


def hz_to_mel(f):
    """HTK mel scale: 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: FbankConfig) -> np.ndarray:
    """Center frequency in Hz of each triangular filter."""
    pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def mel_filterbank(cfg: FbankConfig) -> np.ndarray:
    """Triangular filters on the rfft bin grid; shape (n_mels, n_fft//2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    freqs = np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate / cfg.n_fft
    fb = np.zeros((cfg.n_mels, len(freqs)))
    for k in range(cfg.n_mels):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[k] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def frame_count(n_samples: int, cfg: FbankConfig) -> int:
    """Frames produced from n_samples: 1 + floor((N - frame)/shift)."""
    if n_samples < cfg.frame_samples:
        raise ValueError(f"input of {n_samples} samples is shorter than one frame")
    return 1 + (n_samples - cfg.frame_samples) // cfg.shift_samples


def fbank(w: Waveform, cfg: FbankConfig) -> np.ndarray:
    """Log mel filterbank features, shape (frames, n_mels).

    Pipeline per frame: Hann window, magnitude-squared rfft (zero-padded
    to n_fft), triangular mel filters, natural log of energy + floor.
    """
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"waveform rate {w.sample_rate} != config rate {cfg.sample_rate}")
    n = len(w.samples)
    n_frames = frame_count(n, cfg)
    size, shift = cfg.frame_samples, cfg.shift_samples
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    idx = np.arange(n_frames)[:, None] * shift + np.arange(size)[None, :]
    frames = w.samples[idx] * window
    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2
    energy = power @ mel_filterbank(cfg).T
    return np.log(energy + cfg.log_floor)


# ---------------------------------------------------------------------------
# feature map files


def save_feature_map(x: np.ndarray, sink: IO[str]) -> None:
    x = np.asarray(x, dtype=np.float64)
    sink.write(FBANK_MAGIC + "\n")
    sink.write(f"frames={x.shape[0]} bins={x.shape[1]}\n")
    for row in x:
        sink.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_feature_map(source: IO[str]) -> np.ndarray:
    lines = [ln.rstrip("\n") for ln in source]
    if not lines or lines[0] != FBANK_MAGIC:
        raise FormatError(f"missing magic line {FBANK_MAGIC!r}")
    if len(lines) < 2:
        raise FormatError("missing frames/bins line")
    m = lines[1].split()
    try:
        if len(m) != 2 or not m[0].startswith("frames=") or not m[1].startswith("bins="):
            raise ValueError
        frames = int(m[0][len("frames="):])
        bins = int(m[1][len("bins="):])
    except ValueError:
        raise FormatError(f"bad dimension line {lines[1]!r}") from None
    body = [ln for ln in lines[2:] if ln]
    if len(body) != frames:
        raise FormatError(f"expected {frames} rows, found {len(body)}")
    rows = []
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != bins:
            raise FormatError(f"row {i}: expected {bins} values, found {len(vals)}")
        rows.append([float(v) for v in vals])
    return np.array(rows, dtype=np.float64)
