"""Sliding-window inference, smoothing, and segment emission.

Long sessions are decoded in fixed-size chunks whose starts step by a
configurable shift; where windows overlap, per-frame probabilities are
averaged.  Probabilities are then median-filtered per speaker row and
thresholded into segments with minimum-duration and gap-merge rules on
the frame grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError
from .models import ActivityProbabilityMatrix, ModelBundle, SessionInputs
from .nn import Tensor, no_grad
from .rttm import DiarizationAnnotation, Turn

PredictFn = Callable[[int, int], np.ndarray]


@dataclass
class DecodeConfig:
    """Window, smoothing, and segmentation settings."""

    chunk_frames: int = 600
    shift_frames: int = 100
    median_kernel: int = 11
    threshold: float = 0.5
    min_segment_s: float = 0.2
    min_gap_s: float = 0.1

    def __post_init__(self):
        if not 1 <= self.shift_frames <= self.chunk_frames:
            raise ConfigError(
                f"need 1 <= shift_frames <= chunk_frames, got "
                f"{self.shift_frames} / {self.chunk_frames}")
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ConfigError(
                f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(
                f"threshold must be in (0, 1), got {self.threshold}")
        if self.min_segment_s < 0 or self.min_gap_s < 0:
            raise ConfigError("min_segment_s and min_gap_s must be >= 0")


def window_starts(num_frames: int, chunk: int, shift: int) -> list[int]:
    """Window start offsets: 0, shift, ..., plus an end-aligned window
    when the stepped windows stop short of the final frame."""
    if num_frames <= chunk:
        return [0]
    starts = list(range(0, num_frames - chunk + 1, shift))
    if starts[-1] + chunk < num_frames:
        starts.append(num_frames - chunk)
    return starts


def sliding_window_decode(predict: PredictFn, num_frames: int,
                          cfg: DecodeConfig) -> np.ndarray:
    """Average chunked predictions into one (S, T) probability matrix.

    ``predict(start, stop)`` must return an (S, stop - start) array.
    Sessions shorter than one chunk decode as a single window.
    """
    if num_frames <= 0:
        raise DataError(f"session has no frames ({num_frames})")
    mean = None
    counts = np.zeros(num_frames)
    for start in window_starts(num_frames, cfg.chunk_frames, cfg.shift_frames):
        stop = min(start + cfg.chunk_frames, num_frames)
        probs = np.asarray(predict(start, stop))
        if probs.ndim != 2 or probs.shape[1] != stop - start:
            raise DataError(
                f"window prediction shape {probs.shape} != "
                f"(S, {stop - start})")
        if mean is None:
            mean = np.zeros((probs.shape[0], num_frames))
        counts[start:stop] += 1.0
        # incremental mean: windows that agree leave the value untouched,
        # so redundant coverage aggregates bit-exactly
        mean[:, start:stop] += (probs - mean[:, start:stop]) / counts[start:stop]
    return mean


def median_filter(probs: np.ndarray, kernel: int) -> np.ndarray:
    """Row-wise median smoothing with replicate padding at the edges."""
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"median kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return probs.copy()
    probs = np.asarray(probs)
    pad = kernel // 2
    padded = np.pad(probs, ((0, 0), (pad, pad)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel, axis=1)
    return np.median(windows, axis=2)


def _frames(seconds: float, hop_s: float) -> int:
    return int(np.ceil(seconds / hop_s - 1e-9))


def threshold_to_segments(probs: ActivityProbabilityMatrix,
                          cfg: DecodeConfig,
                          speakers: list[str]) -> dict[str, list[tuple[float, float]]]:
    """Binarize probabilities into per-speaker (onset, offset) lists.

    Active runs separated by less than ``min_gap_s`` merge; merged
    segments shorter than ``min_segment_s`` are dropped.
    """
    if probs.probs.shape[0] != len(speakers):
        raise DataError(
            f"{probs.probs.shape[0]} rows for {len(speakers)} speakers")
    hop = probs.frame_hop_s
    min_gap = _frames(cfg.min_gap_s, hop)
    min_seg = _frames(cfg.min_segment_s, hop)
    out: dict[str, list[tuple[float, float]]] = {}
    for row, spk in zip(probs.probs, speakers):
        active = row >= cfg.threshold
        edges = np.flatnonzero(np.diff(np.r_[False, active, False]))
        runs = [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]
        merged: list[list[int]] = []
        for a, b in runs:
            if merged and a - merged[-1][1] < min_gap:
                merged[-1][1] = b
            else:
                merged.append([a, b])
        out[spk] = [(a * hop, b * hop) for a, b in merged if b - a >= min_seg]
    return out


def segments_to_annotation(segments: dict[str, list[tuple[float, float]]],
                           session_id: str) -> DiarizationAnnotation:
    turns = [Turn(spk, a, b - a)
             for spk, spans in segments.items() for a, b in spans]
    turns.sort(key=lambda t: (t.onset_s, t.speaker_id))
    return DiarizationAnnotation(session_id, turns)


def bundle_predictor(bundle: ModelBundle, inputs: SessionInputs) -> PredictFn:
    """Window-level forward pass over cached session inputs."""
    def predict(start: int, stop: int) -> np.ndarray:
        with no_grad():
            frame_emb = bundle.speaker_encoder(Tensor(inputs.feats[start:stop]))
            probs = bundle.decoder(
                [Tensor(inputs.lip_embeds[s, start:stop])
                 for s in range(len(inputs.speakers))],
                frame_emb,
                [Tensor(inputs.utt_embs[s])
                 for s in range(len(inputs.speakers))])
        return probs.data

    return predict


def decode_session(bundle: ModelBundle, inputs: SessionInputs,
                   cfg: DecodeConfig | None = None,
                   apply_median: bool = True
                   ) -> tuple[DiarizationAnnotation, ActivityProbabilityMatrix]:
    """Full pipeline for one session: window decode, smooth, segment."""
    cfg = cfg or DecodeConfig()
    raw = sliding_window_decode(bundle_predictor(bundle, inputs),
                                inputs.num_frames, cfg)
    if apply_median:
        raw = median_filter(raw, cfg.median_kernel)
    probs = ActivityProbabilityMatrix(raw, frame_hop_s=inputs.frame_hop_s)
    segments = threshold_to_segments(probs, cfg, inputs.speakers)
    return segments_to_annotation(segments, inputs.session_id), probs
