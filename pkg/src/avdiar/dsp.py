"""Log-Mel feature extraction and WAV handling.

The feature front end: frame the waveform (25 ms window, 10 ms hop,
no padding), apply a Hann window, take the power spectrum at the next
power-of-two FFT size, pool through a triangular HTK-Mel filterbank
spanning 0 Hz to Nyquist, and log-compress with an energy floor.
All arithmetic is double precision.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import ConfigError, DataError
from .validation import as_float_array, check_finite, check_positive

ENERGY_FLOOR = 1e-10
DEFAULT_FRAME_LEN_S = 0.025
DEFAULT_FRAME_HOP_S = 0.010


@dataclass
class AudioSignal:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.samples = as_float_array(self.samples, "samples", ndim=1)
        check_finite(self.samples, "samples")
        check_positive(self.sample_rate_hz, "sample_rate_hz")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class LogMelFeatures:
    """T x M log-Mel matrix with its framing parameters."""

    values: np.ndarray
    frame_hop_s: float = DEFAULT_FRAME_HOP_S
    frame_len_s: float = DEFAULT_FRAME_LEN_S
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.values = as_float_array(self.values, "values", ndim=2)
        check_finite(self.values, "values")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_mels(self) -> int:
        return self.values.shape[1]

    def save(self, path) -> None:
        binio.write_framed_matrix(path, binio.LMEL_MAGIC, self.values,
                                  self.frame_hop_s, self.frame_len_s)

    @classmethod
    def load(cls, path) -> "LogMelFeatures":
        values, hop, win = binio.read_framed_matrix(path, binio.LMEL_MAGIC)
        return cls(values, frame_hop_s=hop, frame_len_s=win)


def num_frames(num_samples: int, frame_len: int, frame_hop: int) -> int:
    """Frame count under the no-padding convention."""
    if num_samples < frame_len:
        return 0
    return 1 + (num_samples - frame_len) // frame_hop


def frame_signal(signal: AudioSignal, frame_len_s: float = DEFAULT_FRAME_LEN_S,
                 frame_hop_s: float = DEFAULT_FRAME_HOP_S) -> np.ndarray:
    """Slice the waveform into overlapping frames, dropping any tail."""
    check_positive(frame_hop_s, "frame_hop_s")
    if frame_len_s < frame_hop_s:
        raise ConfigError(
            f"frame_len_s {frame_len_s} must be >= frame_hop_s {frame_hop_s}")
    frame_len = int(round(frame_len_s * signal.sample_rate_hz))
    frame_hop = int(round(frame_hop_s * signal.sample_rate_hz))
    t = num_frames(len(signal.samples), frame_len, frame_hop)
    if t == 0:
        raise DataError(
            f"signal too short: {len(signal.samples)} samples < "
            f"one {frame_len}-sample frame")
    idx = np.arange(frame_len) + frame_hop * np.arange(t)[:, None]
    return signal.samples[idx]


def hz_to_mel(f):
    """HTK Mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(n_mels: int, sample_rate_hz: int) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters."""
    check_positive(n_mels, "n_mels")
    edges = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate_hz / 2.0),
                        n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank_matrix(n_mels: int, fft_size: int,
                          sample_rate_hz: int) -> np.ndarray:
    """Unnormalized triangular filters, n_mels x (fft_size/2 + 1)."""
    check_positive(n_mels, "n_mels")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0),
                                     hz_to_mel(sample_rate_hz / 2.0),
                                     n_mels + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    fb = np.zeros((n_mels, fft_size // 2 + 1))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / (center - lo)
        down = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    if np.any(fb.sum(axis=1) == 0.0):
        raise ConfigError(
            f"{n_mels} mel filters too many for fft size {fft_size}: "
            f"some filter spans no bin")
    return fb


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def log_mel(signal: AudioSignal, n_mels: int = 80,
            frame_len_s: float = DEFAULT_FRAME_LEN_S,
            frame_hop_s: float = DEFAULT_FRAME_HOP_S) -> LogMelFeatures:
    """Extract log-Mel filterbank features from a waveform."""
    frames = frame_signal(signal, frame_len_s, frame_hop_s)
    frame_len = frames.shape[1]
    fft_size = next_pow2(frame_len)
    window = np.hanning(frame_len)
    spectrum = np.fft.rfft(frames * window, n=fft_size, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    fb = mel_filterbank_matrix(n_mels, fft_size, signal.sample_rate_hz)
    energies = power @ fb.T
    values = np.log(np.maximum(energies, ENERGY_FLOOR))
    return LogMelFeatures(values, frame_hop_s=frame_hop_s,
                          frame_len_s=frame_len_s,
                          sample_rate_hz=signal.sample_rate_hz)


def crop_signal(signal: AudioSignal, onset_s: float, offset_s: float) -> AudioSignal:
    """Slice a waveform to [onset_s, offset_s), clamped to its extent."""
    if offset_s <= onset_s:
        raise ConfigError(f"empty crop [{onset_s}, {offset_s})")
    a = max(0, int(round(onset_s * signal.sample_rate_hz)))
    b = min(len(signal.samples), int(round(offset_s * signal.sample_rate_hz)))
    return AudioSignal(signal.samples[a:b], signal.sample_rate_hz)


def read_wav(path) -> AudioSignal:
    """Read a PCM 16-bit mono WAV file at 8 or 16 kHz."""
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if channels != 1:
        raise DataError(f"expected mono WAV, got {channels} channels: {path}")
    if width != 2:
        raise DataError(f"expected 16-bit PCM, got {8 * width}-bit: {path}")
    if rate not in (8000, 16000):
        raise DataError(f"unsupported sample rate {rate} Hz: {path}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, sample_rate_hz=rate)


def write_wav(path, signal: AudioSignal) -> None:
    """Write a waveform as PCM 16-bit mono, clipping to full scale."""
    pcm = np.clip(np.round(signal.samples * 32767.0), -32768, 32767)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate_hz)
        w.writeframes(pcm.astype("<i2").tobytes())
