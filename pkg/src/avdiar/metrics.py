"""Diarization error rate: FA, MISS, SPKERR over reference speech time.

Scoring discretizes both annotations onto a fine instant grid (1 ms by
default) after snapping segment boundaries to it.  Per instant, with
reference speaker set R and mapped hypothesis set H:

    MISS   += max(0, |R| - |H|)
    FA     += max(0, |H| - |R|)
    SPKERR += min(|R|, |H|) - |R on H|

all normalized by total reference speech time.  A collar removes the
±collar_s neighbourhood of every reference turn boundary from scoring.
Overlapped speech is scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, DataError
from .rttm import DiarizationAnnotation


@dataclass
class DERReport:
    """DER and its components, as percentages of scored reference speech."""

    fa_pct: float
    miss_pct: float
    spkerr_pct: float
    der_pct: float
    scored_speech_s: float
    mapping: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "fa_pct": self.fa_pct,
            "miss_pct": self.miss_pct,
            "spkerr_pct": self.spkerr_pct,
            "der_pct": self.der_pct,
            "scored_speech_s": self.scored_speech_s,
            "mapping": dict(self.mapping),
        }


def der_from_components(fa: float, miss: float, spkerr: float) -> float:
    """Total DER as the plain sum of its three components."""
    if fa < 0 or miss < 0 or spkerr < 0:
        raise ConfigError(
            f"components must be >= 0, got {fa}, {miss}, {spkerr}")
    return fa + miss + spkerr


def _rasterize(ann: DiarizationAnnotation, speakers: list[str],
               num_instants: int, resolution_s: float) -> np.ndarray:
    """(T, S) activity grid; instant t covers [t*res, (t+1)*res)."""
    grid = np.zeros((num_instants, len(speakers)), dtype=bool)
    index = {spk: i for i, spk in enumerate(speakers)}
    for t in ann.turns:
        lo = int(round(t.onset_s / resolution_s))
        hi = int(round(t.offset_s / resolution_s))
        lo = max(0, min(lo, num_instants))
        hi = max(0, min(hi, num_instants))
        grid[lo:hi, index[t.speaker_id]] = True
    return grid


def _collar_mask(ref: DiarizationAnnotation, num_instants: int,
                 collar_s: float, resolution_s: float) -> np.ndarray:
    """Boolean mask of instants kept for scoring."""
    keep = np.ones(num_instants, dtype=bool)
    if collar_s <= 0:
        return keep
    w = int(round(collar_s / resolution_s))
    for t in ref.turns:
        for edge in (t.onset_s, t.offset_s):
            c = int(round(edge / resolution_s))
            keep[max(0, c - w):min(num_instants, c + w)] = False
    return keep


def _optimal_mapping(ref_grid: np.ndarray, hyp_grid: np.ndarray,
                     ref_speakers: list[str],
                     hyp_speakers: list[str]) -> dict[str, str]:
    """Hypothesis→reference assignment maximizing jointly-active time."""
    overlap = ref_grid.T.astype(np.int64) @ hyp_grid.astype(np.int64)
    rows, cols = linear_sum_assignment(-overlap)
    return {hyp_speakers[c]: ref_speakers[r] for r, c in zip(rows, cols)}


def score_der(ref: DiarizationAnnotation, hyp: DiarizationAnnotation,
              collar_s: float = 0.0, mapping: str = "identity",
              resolution_s: float = 0.001) -> DERReport:
    """Score a hypothesis against a reference for one session."""
    if resolution_s <= 0:
        raise ConfigError(f"resolution_s must be > 0, got {resolution_s}")
    if mapping not in ("identity", "optimal"):
        raise ConfigError(f"unknown mapping {mapping!r}")
    if ref.session_id != hyp.session_id:
        raise DataError(
            f"session mismatch: {ref.session_id!r} vs {hyp.session_id!r}")
    ref = ref.normalized()
    hyp = hyp.normalized()
    ref_speakers = ref.speakers()
    hyp_speakers = hyp.speakers()
    num_instants = int(round(max(ref.duration_s(), hyp.duration_s())
                             / resolution_s)) + 1
    ref_grid = _rasterize(ref, ref_speakers, num_instants, resolution_s)
    hyp_grid = _rasterize(hyp, hyp_speakers, num_instants, resolution_s)

    if mapping == "optimal" and ref_speakers and hyp_speakers:
        name_map = _optimal_mapping(ref_grid, hyp_grid,
                                    ref_speakers, hyp_speakers)
    else:
        name_map = {spk: spk for spk in hyp_speakers}

    # Project hypothesis channels onto the reference speaker axis; unmapped
    # hypothesis speakers keep private columns so they still count in |H|.
    unmapped = [spk for spk in hyp_speakers
                if name_map.get(spk) not in ref_speakers]
    axis = ref_speakers + unmapped
    col = {spk: i for i, spk in enumerate(axis)}
    hyp_mapped = np.zeros((num_instants, len(axis)), dtype=bool)
    for j, spk in enumerate(hyp_speakers):
        target = name_map.get(spk)
        hyp_mapped[:, col[target if target in ref_speakers else spk]] |= \
            hyp_grid[:, j]
    ref_full = np.zeros_like(hyp_mapped)
    ref_full[:, :len(ref_speakers)] = ref_grid

    keep = _collar_mask(ref, num_instants, collar_s, resolution_s)
    r = ref_full[keep]
    h = hyp_mapped[keep]
    nr = r.sum(axis=1).astype(np.int64)
    nh = h.sum(axis=1).astype(np.int64)
    nboth = (r & h).sum(axis=1).astype(np.int64)
    miss = np.maximum(0, nr - nh).sum() * resolution_s
    fa = np.maximum(0, nh - nr).sum() * resolution_s
    spkerr = (np.minimum(nr, nh) - nboth).sum() * resolution_s
    speech = nr.sum() * resolution_s

    if speech == 0:
        fa_pct = np.inf if fa > 0 else 0.0
        return DERReport(fa_pct, 0.0, 0.0, fa_pct, 0.0, name_map)
    return DERReport(
        fa_pct=100.0 * fa / speech,
        miss_pct=100.0 * miss / speech,
        spkerr_pct=100.0 * spkerr / speech,
        der_pct=100.0 * (fa + miss + spkerr) / speech,
        scored_speech_s=speech,
        mapping=name_map,
    )


def aggregate_reports(reports: list[DERReport]) -> DERReport:
    """Pool per-session reports, weighting by scored speech time."""
    if not reports:
        raise ConfigError("no reports to aggregate")
    speech = sum(r.scored_speech_s for r in reports)
    if speech == 0:
        return DERReport(0.0, 0.0, 0.0, 0.0, 0.0, {})
    fa = sum(r.fa_pct * r.scored_speech_s for r in reports) / speech
    miss = sum(r.miss_pct * r.scored_speech_s for r in reports) / speech
    err = sum(r.spkerr_pct * r.scored_speech_s for r in reports) / speech
    return DERReport(fa, miss, err, fa + miss + err, speech, {})
