"""Secondary speaker verification: relabel doubtful single-speaker segments.

Decoded annotations sometimes carry the right speech regions under the
wrong speaker.  For every maximal region where exactly one speaker is
active, an utterance embedding is extracted and compared against per-
speaker centroids enrolled from each speaker's longest single-speaker
segments.  A segment moves to another speaker only when that speaker's
centroid beats its own by more than a cosine margin.  Overlapped
regions are never touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dsp import AudioSignal, crop_signal, log_mel
from .errors import ConfigError
from .models import UtteranceExtractor, speaker_extractor_utterance
from .rttm import DiarizationAnnotation, Turn

log = logging.getLogger(__name__)

_EPS = 1e-9
# shortest crop the feature front end can embed (>= one analysis window)
_MIN_CROP_S = 0.1


@dataclass
class SvConfig:
    """Knobs for the verification pass."""

    min_segment_s: float = 0.5
    reassign_margin: float = 0.1
    enrollment_k: int = 3

    def __post_init__(self):
        if self.min_segment_s <= 0:
            raise ConfigError(
                f"min_segment_s must be > 0, got {self.min_segment_s}")
        if self.reassign_margin < 0:
            raise ConfigError(
                f"reassign_margin must be >= 0, got {self.reassign_margin}")
        if self.enrollment_k < 1:
            raise ConfigError(f"enrollment_k must be >= 1, got {self.enrollment_k}")


def single_speaker_segments(ann: DiarizationAnnotation,
                            min_segment_s: float = 0.0
                            ) -> list[tuple[str, tuple[float, float]]]:
    """Maximal intervals where exactly one speaker is active.

    Returns (speaker, (onset, offset)) pairs sorted by onset, excluding
    intervals shorter than ``min_segment_s``.
    """
    ann = ann.normalized()
    bounds = sorted({t.onset_s for t in ann.turns}
                    | {t.offset_s for t in ann.turns})
    raw: list[tuple[str, list[float]]] = []
    for lo, hi in zip(bounds, bounds[1:]):
        if hi - lo <= _EPS:
            continue
        active = [t.speaker_id for t in ann.turns
                  if t.onset_s <= lo + _EPS and t.offset_s >= hi - _EPS]
        if len(active) != 1:
            continue
        spk = active[0]
        if raw and raw[-1][0] == spk and abs(raw[-1][1][1] - lo) <= _EPS:
            raw[-1][1][1] = hi
        else:
            raw.append((spk, [lo, hi]))
    return [(spk, (iv[0], iv[1])) for spk, iv in raw
            if iv[1] - iv[0] >= min_segment_s - _EPS]


def _segment_embedding(extractor: UtteranceExtractor, audio: AudioSignal,
                       onset_s: float, offset_s: float) -> np.ndarray | None:
    if offset_s - onset_s < _MIN_CROP_S:
        return None
    crop = crop_signal(audio, onset_s, offset_s)
    if len(crop.samples) < int(0.025 * audio.sample_rate_hz):
        return None
    feats = log_mel(crop, n_mels=extractor.n_mels)
    return speaker_extractor_utterance(extractor, feats).vector


def enrollment_embeddings(extractor: UtteranceExtractor, audio: AudioSignal,
                          ann: DiarizationAnnotation, speakers: list[str],
                          k: int = 3,
                          min_segment_s: float = 0.5) -> np.ndarray:
    """Per-speaker centroids from the k longest single-speaker segments.

    A speaker without usable single-speaker audio falls back to its k
    longest raw turns; with no speech at all it gets a zero vector and
    a warning.  Rows follow the ``speakers`` order.
    """
    solos = single_speaker_segments(ann, min_segment_s)
    dim = extractor.config.embed_dim
    out = np.zeros((len(speakers), dim))
    for i, spk in enumerate(speakers):
        spans = sorted((iv for s, iv in solos if s == spk),
                       key=lambda iv: iv[1] - iv[0], reverse=True)
        if not spans:
            spans = sorted(ann.speaker_intervals(spk),
                           key=lambda iv: iv[1] - iv[0], reverse=True)
            if spans:
                log.warning("speaker %s has no single-speaker segment; "
                            "enrolling from overlapped turns", spk)
        embs = []
        for a, b in spans[:k]:
            e = _segment_embedding(extractor, audio, a, b)
            if e is not None:
                embs.append(e)
        if not embs:
            log.warning("speaker %s has no usable enrollment audio", spk)
            continue
        centroid = np.mean(embs, axis=0)
        norm = np.linalg.norm(centroid)
        if norm > 0:
            out[i] = centroid / norm
    return out


def _subtract(intervals: list[tuple[float, float]],
              cut: tuple[float, float]) -> list[tuple[float, float]]:
    a, b = cut
    out = []
    for x, y in intervals:
        if y <= a + _EPS or x >= b - _EPS:
            out.append((x, y))
            continue
        if x < a - _EPS:
            out.append((x, a))
        if y > b + _EPS:
            out.append((b, y))
    return out


def correct_speakers(ann: DiarizationAnnotation, audio: AudioSignal,
                     extractor: UtteranceExtractor,
                     cfg: SvConfig | None = None) -> DiarizationAnnotation:
    """Re-verify single-speaker segments against enrolled centroids.

    A segment is relabeled when some other speaker's centroid exceeds
    its own by more than the reassign margin in cosine similarity.
    Speakers without a centroid neither gain nor lose segments.
    """
    cfg = cfg or SvConfig()
    ann = ann.normalized()
    speakers = ann.speakers()
    solos = single_speaker_segments(ann, cfg.min_segment_s)

    seg_embs: list[np.ndarray | None] = [
        _segment_embedding(extractor, audio, a, b) for _, (a, b) in solos]

    centroids: dict[str, np.ndarray] = {}
    for spk in speakers:
        owned = [(i, iv) for i, (s, iv) in enumerate(solos)
                 if s == spk and seg_embs[i] is not None]
        owned.sort(key=lambda p: p[1][1] - p[1][0], reverse=True)
        embs = [seg_embs[i] for i, _ in owned[:cfg.enrollment_k]]
        if not embs:
            log.warning("speaker %s has no single-speaker segment; "
                        "exempt from relabeling", spk)
            continue
        centroid = np.mean(embs, axis=0)
        norm = np.linalg.norm(centroid)
        if norm > 0:
            centroids[spk] = centroid / norm

    moves: list[tuple[str, tuple[float, float], str]] = []
    for (spk, span), emb in zip(solos, seg_embs):
        if emb is None or spk not in centroids:
            continue
        own = float(emb @ centroids[spk])
        best_spk, best = None, -np.inf
        for other, c in centroids.items():
            if other == spk:
                continue
            cos = float(emb @ c)
            if cos > best:
                best_spk, best = other, cos
        if best_spk is not None and best - own > cfg.reassign_margin:
            moves.append((spk, span, best_spk))

    if not moves:
        return ann
    timelines = {spk: ann.speaker_intervals(spk) for spk in speakers}
    for spk, span, target in moves:
        timelines[spk] = _subtract(timelines[spk], span)
        timelines[target].append(span)
    turns = [Turn(spk, a, b - a)
             for spk, ivs in timelines.items() for a, b in ivs if b - a > _EPS]
    return DiarizationAnnotation(ann.session_id, turns).normalized()
