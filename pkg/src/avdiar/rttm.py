"""RTTM segment lists and their frame-level label rasterization.

Annotations are lists of (speaker, onset, duration) turns per session.
Serialization uses the SPEAKER line layout with onsets and durations
fixed to two decimals (a 10 ms grid), so parse(write(x)) is closed for
grid-aligned times.  Rasterization marks a frame active when at least
half of it is covered; de-rasterization emits maximal active runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .validation import check_positive

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class Turn:
    """One speaker's contiguous speech segment."""

    speaker_id: str
    onset_s: float
    duration_s: float

    @property
    def offset_s(self) -> float:
        return self.onset_s + self.duration_s


@dataclass
class DiarizationAnnotation:
    """All turns of one session, normalized per speaker."""

    session_id: str
    turns: list[Turn] = field(default_factory=list)

    def __post_init__(self):
        for t in self.turns:
            if t.duration_s <= 0:
                raise DataError(
                    f"{self.session_id}: non-positive duration {t.duration_s}")
            if t.onset_s < 0:
                raise DataError(
                    f"{self.session_id}: negative onset {t.onset_s}")

    def speakers(self) -> list[str]:
        return sorted({t.speaker_id for t in self.turns})

    def speaker_intervals(self, speaker_id: str) -> list[tuple[float, float]]:
        """Sorted (onset, offset) pairs for one speaker."""
        ivs = sorted((t.onset_s, t.offset_s) for t in self.turns
                     if t.speaker_id == speaker_id)
        return ivs

    def total_speech_s(self) -> float:
        return sum(t.duration_s for t in self.turns)

    def duration_s(self) -> float:
        return max((t.offset_s for t in self.turns), default=0.0)

    def normalized(self) -> "DiarizationAnnotation":
        """Merge overlapping or touching same-speaker turns."""
        merged: list[Turn] = []
        for spk in self.speakers():
            run_start = run_end = None
            for onset, offset in self.speaker_intervals(spk):
                if run_end is not None and onset <= run_end + _TIME_EPS:
                    run_end = max(run_end, offset)
                else:
                    if run_end is not None:
                        merged.append(Turn(spk, run_start, run_end - run_start))
                    run_start, run_end = onset, offset
            if run_end is not None:
                merged.append(Turn(spk, run_start, run_end - run_start))
        merged.sort(key=lambda t: (t.onset_s, t.speaker_id))
        return DiarizationAnnotation(self.session_id, merged)


def parse_rttm(text: str, lenient: bool = False) -> dict[str, DiarizationAnnotation]:
    """Parse RTTM text into per-session annotations.

    Turns are kept exactly as listed (call ``normalized()`` to merge
    same-speaker overlap).  Unknown line types raise unless ``lenient``,
    which skips them.
    """
    turns: dict[str, list[Turn]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] != "SPEAKER":
            if lenient:
                continue
            raise DataError(f"line {lineno}: unsupported type {fields[0]!r}")
        if len(fields) < 8:
            raise DataError(f"line {lineno}: too few fields ({len(fields)})")
        session = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError as exc:
            raise DataError(f"line {lineno}: bad time field: {exc}") from exc
        if duration <= 0:
            raise DataError(f"line {lineno}: non-positive duration {duration}")
        if onset < 0:
            raise DataError(f"line {lineno}: negative onset {onset}")
        turns.setdefault(session, []).append(Turn(fields[7], onset, duration))
    return {sid: DiarizationAnnotation(sid, ts) for sid, ts in turns.items()}


def parse_rttm_file(path, lenient: bool = False) -> dict[str, DiarizationAnnotation]:
    return parse_rttm(Path(path).read_text(encoding="utf-8"), lenient=lenient)


def write_rttm(annotations) -> str:
    """Serialize annotations (a mapping or iterable) as RTTM text."""
    if isinstance(annotations, DiarizationAnnotation):
        annotations = [annotations]
    elif isinstance(annotations, dict):
        annotations = list(annotations.values())
    rows = []
    for ann in annotations:
        for t in ann.turns:
            rows.append((ann.session_id, t.onset_s, t.speaker_id, t.duration_s))
    rows.sort()
    lines = [f"SPEAKER {sid} 1 {onset:.2f} {dur:.2f} <NA> <NA> {spk} <NA> <NA>\n"
             for sid, onset, spk, dur in rows]
    return "".join(lines)


def write_rttm_file(path, annotations) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_rttm(annotations))


def annotation_to_labels(ann: DiarizationAnnotation, speakers: list[str],
                         frame_hop_s: float, num_frames: int) -> np.ndarray:
    """Rasterize turns to a (T, S) 0/1 matrix on the frame grid.

    A frame counts as active when the turn covers at least half of it.
    """
    check_positive(frame_hop_s, "frame_hop_s")
    index = {spk: i for i, spk in enumerate(speakers)}
    labels = np.zeros((num_frames, len(speakers)), dtype=np.float64)
    h = frame_hop_s
    for t in ann.turns:
        if t.speaker_id not in index:
            raise DataError(f"unknown speaker {t.speaker_id!r}; "
                            f"expected one of {speakers}")
        lo = max(0, int(np.floor(t.onset_s / h)))
        hi = min(num_frames, int(np.ceil(t.offset_s / h)) + 1)
        if lo >= hi:
            continue
        frames = np.arange(lo, hi)
        starts = frames * h
        overlap = np.minimum(t.offset_s, starts + h) - np.maximum(t.onset_s, starts)
        active = frames[overlap >= h / 2 - h * 1e-6]
        labels[active, index[t.speaker_id]] = 1.0
    return labels


def labels_to_annotation(labels: np.ndarray, speakers: list[str],
                         frame_hop_s: float,
                         session_id: str) -> DiarizationAnnotation:
    """Convert a (T, S) 0/1 matrix back to turns of maximal active runs."""
    check_positive(frame_hop_s, "frame_hop_s")
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != len(speakers):
        raise ValueError(
            f"labels shape {labels.shape} does not match {len(speakers)} speakers")
    turns = []
    for s, spk in enumerate(speakers):
        col = labels[:, s] > 0.5
        edges = np.flatnonzero(np.diff(np.r_[False, col, False]))
        for start, stop in zip(edges[::2], edges[1::2]):
            turns.append(Turn(spk, float(start * frame_hop_s),
                              float((stop - start) * frame_hop_s)))
    turns.sort(key=lambda t: (t.onset_s, t.speaker_id))
    return DiarizationAnnotation(session_id, turns)
