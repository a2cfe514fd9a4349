"""Shared test utilities: brute-force oracles and a mini end-to-end system."""

from __future__ import annotations

import itertools
from dataclasses import replace
from pathlib import Path

import numpy as np

from avdiar.decoding import (DecodeConfig, bundle_predictor, median_filter,
                             segments_to_annotation, sliding_window_decode,
                             threshold_to_segments)
from avdiar.metrics import DERReport, aggregate_reports, score_der
from avdiar.models import (ActivityProbabilityMatrix, DecoderConfig,
                           EncoderConfig, LipEncoderConfig, ModelBundle)
from avdiar.rttm import DiarizationAnnotation, Turn, parse_rttm_file
from avdiar.simulate import MeetingSpec, generate_corpus
from avdiar.training import (TrainConfig, initialize_from_pretrained,
                             joint_train, load_manifest, load_session_inputs,
                             pretrain_extractor, pretrain_lip_encoder)

# ---------------------------------------------------------------------------
# Per-millisecond DER oracle
# ---------------------------------------------------------------------------


def _active_sets(ann: DiarizationAnnotation, num_instants: int,
                 res: float) -> list[set[str]]:
    active = [set() for _ in range(num_instants)]
    for t in ann.turns:
        lo = int(round(t.onset_s / res))
        hi = int(round((t.onset_s + t.duration_s) / res))
        for i in range(lo, min(hi, num_instants)):
            active[i].add(t.speaker_id)
    return active


def brute_force_der(ref: DiarizationAnnotation, hyp: DiarizationAnnotation,
                    collar_s: float = 0.0, mapping: str = "identity",
                    res: float = 0.001) -> DERReport:
    """Instant-by-instant DER with exhaustively optimal speaker mapping.

    Pure-python sets and loops; intentionally shares no code with
    avdiar.metrics.
    """
    ref = ref.normalized()
    hyp = hyp.normalized()
    dur = max(ref.duration_s(), hyp.duration_s())
    n = int(round(dur / res)) + 1
    ref_act = _active_sets(ref, n, res)
    hyp_act = _active_sets(hyp, n, res)

    scored = [True] * n
    if collar_s > 0:
        half = collar_s
        for t in ref.turns:
            for edge in (t.onset_s, t.onset_s + t.duration_s):
                lo = int(round((edge - half) / res))
                hi = int(round((edge + half) / res))
                for i in range(max(lo, 0), min(hi, n)):
                    scored[i] = False

    if mapping == "identity":
        pair_map = {s: s for s in hyp.speakers()}
    else:
        # FA and MISS are per-instant count differences, so the mapping only
        # moves speaker error; exhaustively pick the assignment with the
        # largest total ref/hyp co-activity.
        hyp_spk = hyp.speakers()
        overlap: dict[tuple[str, str], int] = {}
        for i in range(n):
            if not scored[i]:
                continue
            for r in ref_act[i]:
                for h in hyp_act[i]:
                    overlap[(r, h)] = overlap.get((r, h), 0) + 1
        # Pad the reference side so hypothesis speakers may stay unmapped.
        padded = ref.speakers() + [f"~{s}" for s in hyp_spk]
        best_combo, best_score = None, -1
        for combo in itertools.permutations(padded, len(hyp_spk)):
            score = sum(overlap.get((r, h), 0)
                        for h, r in zip(hyp_spk, combo))
            if score > best_score:
                best_combo, best_score = combo, score
        pair_map = dict(zip(hyp_spk, best_combo or ()))

    speech = fa = miss = err = 0
    for i in range(n):
        if not scored[i]:
            continue
        r = ref_act[i]
        h = {pair_map.get(s, f"~{s}") for s in hyp_act[i]}
        speech += len(r)
        nref, nhyp = len(r), len(h)
        miss += max(0, nref - nhyp)
        fa += max(0, nhyp - nref)
        err += min(nref, nhyp) - len(r & h)
    if speech == 0:
        to_pct = lambda x: float("inf") if x else 0.0  # noqa: E731
    else:
        to_pct = lambda x: 100.0 * x / speech  # noqa: E731
    return DERReport(to_pct(fa), to_pct(miss), to_pct(err),
                     to_pct(fa + miss + err), speech * res)


def random_annotation(rng: np.random.Generator, session_id: str,
                      speakers: list[str], duration_s: float = 10.0,
                      grid_s: float = 0.01,
                      max_turns: int = 6) -> DiarizationAnnotation:
    """Grid-aligned random annotation, possibly with overlap."""
    turns = []
    steps = int(round(duration_s / grid_s))
    for spk in speakers:
        for _ in range(int(rng.integers(1, max_turns + 1))):
            a = int(rng.integers(0, steps - 10))
            d = int(rng.integers(5, min(steps - a, 300)))
            turns.append(Turn(spk, round(a * grid_s, 2), round(d * grid_s, 2)))
    turns.sort(key=lambda t: (t.onset_s, t.speaker_id))
    return DiarizationAnnotation(session_id, turns)


# ---------------------------------------------------------------------------
# Mini end-to-end system (shared by acceptance and ablation tests)
# ---------------------------------------------------------------------------

MINI_PROFILE = {
    "num_meetings": 10,
    "duration_s": 30.0,
    "overlap_ratio": 0.2,
    "snr_db": 3.0,
    "n_mels": 24,
    "extractor_steps": 150,
    "lip_steps": 100,
    "joint_steps": 200,
}


class MiniSystem:
    """A trained toy diarizer plus its corpus, for property tests."""

    def __init__(self, bundle: ModelBundle, records, train_records,
                 dev_records, profile: dict):
        self.bundle = bundle
        self.records = records
        self.train_records = train_records
        self.dev_records = dev_records
        self.profile = profile

    def dev_inputs(self):
        return [load_session_inputs(self.bundle, r, with_labels=False)
                for r in self.dev_records]

    def dev_refs(self):
        return {r.session_id: parse_rttm_file(r.rttm)[r.session_id]
                for r in self.dev_records}


def train_mini_system(root, seed: int, decoder_kind: str = "transformer",
                      profile: dict | None = None,
                      joint_out_dir=None) -> MiniSystem:
    """Corpus + pretraining + joint training at the mini profile."""
    prof = dict(MINI_PROFILE)
    if profile:
        prof.update(profile)
    root = Path(root)
    template = MeetingSpec(num_speakers=2, duration_s=prof["duration_s"],
                           overlap_ratio=prof["overlap_ratio"],
                           snr_db=prof["snr_db"])
    manifest = generate_corpus(root / "corpus", prof["num_meetings"],
                               template, seed)
    records = load_manifest(manifest)
    train_records = [r for r in records if r.split == "train"]
    dev_records = [r for r in records if r.split == "dev"]
    cfg = TrainConfig(lr=1e-3, steps_per_epoch=prof["extractor_steps"],
                      batch_size=4, seed=seed)
    extractor_store = pretrain_extractor(
        train_records, cfg, n_mels=prof["n_mels"],
        encoder_config=EncoderConfig.toy("resnet_se"))
    lip_store = pretrain_lip_encoder(
        train_records, replace(cfg, steps_per_epoch=prof["lip_steps"]),
        LipEncoderConfig())
    bundle = ModelBundle(
        seed=seed, n_mels=prof["n_mels"],
        encoder_config=EncoderConfig.toy("resnet_se"),
        extractor_config=EncoderConfig.toy("resnet_se"),
        decoder_config=DecoderConfig(kind=decoder_kind, num_speakers=2))
    initialize_from_pretrained(bundle, extractor_store, lip_store)
    sessions = [load_session_inputs(bundle, r) for r in train_records]
    joint_train(bundle, sessions,
                TrainConfig(lr=1e-3, steps_per_epoch=prof["joint_steps"],
                            batch_size=2, seed=seed),
                out_dir=joint_out_dir)
    return MiniSystem(bundle, records, train_records, dev_records, prof)


def decode_matrices(system: MiniSystem, inputs_list
                    ) -> dict[str, tuple[object, np.ndarray, np.ndarray]]:
    """Per dev session: inputs, raw shift-100 probs, median-filtered probs."""
    narrow = DecodeConfig(shift_frames=100, median_kernel=1)
    out = {}
    for si in inputs_list:
        predict = bundle_predictor(system.bundle, si)
        raw = sliding_window_decode(predict, si.num_frames, narrow)
        out[si.session_id] = (si, raw, median_filter(raw, 11))
    return out


def score_matrices(mats, refs, pick: int) -> DERReport:
    seg_cfg = DecodeConfig()
    reports = []
    for sid, tup in mats.items():
        si = tup[0]
        probs = ActivityProbabilityMatrix(tup[pick], frame_hop_s=si.frame_hop_s)
        segments = threshold_to_segments(probs, seg_cfg, si.speakers)
        ann = segments_to_annotation(segments, sid)
        reports.append(score_der(refs[sid], ann, mapping="identity"))
    return aggregate_reports(reports)


# ---------------------------------------------------------------------------
# Label corruption for verification tests
# ---------------------------------------------------------------------------


def _flip_interval(turns, spk: str, wrong: str, a: float, b: float):
    out = []
    for t in turns:
        lo, hi = t.onset_s, t.onset_s + t.duration_s
        if t.speaker_id != spk or hi <= a + 1e-9 or lo >= b - 1e-9:
            out.append(t)
            continue
        if lo < a - 1e-9:
            out.append(Turn(spk, lo, a - lo))
        out.append(Turn(wrong, max(lo, a), min(hi, b) - max(lo, a)))
        if hi > b + 1e-9:
            out.append(Turn(spk, b, hi - b))
    out.sort(key=lambda t: (t.onset_s, t.speaker_id))
    return out


def corrupt_annotation(ann: DiarizationAnnotation, fraction: float,
                       rng: np.random.Generator,
                       min_segment_s: float = 0.6):
    """Flip the speaker on a fraction of single-speaker segments.

    Returns (corrupted annotation, flipped [(true, wrong, a, b)],
    untouched [(spk, a, b)]).
    """
    from avdiar.correction import single_speaker_segments

    ann = ann.normalized()
    solos = [(spk, a, b)
             for spk, (a, b) in single_speaker_segments(ann, min_segment_s)]
    k = max(1, int(round(fraction * len(solos))))
    order = rng.permutation(len(solos))
    chosen = {int(i) for i in order[:k]}
    speakers = ann.speakers()
    turns = list(ann.turns)
    flipped, untouched = [], []
    for i, (spk, a, b) in enumerate(solos):
        if i in chosen:
            others = [s for s in speakers if s != spk]
            wrong = others[int(rng.integers(len(others)))]
            turns = _flip_interval(turns, spk, wrong, a, b)
            flipped.append((spk, wrong, a, b))
        else:
            untouched.append((spk, a, b))
    corrupted = DiarizationAnnotation(ann.session_id, turns).normalized()
    return corrupted, flipped, untouched


def interval_owned_by(ann: DiarizationAnnotation, spk: str, a: float,
                      b: float, grid_s: float = 0.01) -> bool:
    """True when spk (and nobody else) is active over at least 99% of [a, b)."""
    lo = int(round(a / grid_s))
    hi = int(round(b / grid_s))
    if hi <= lo:
        return False
    own = np.zeros(hi - lo, dtype=bool)
    other = np.zeros(hi - lo, dtype=bool)
    for t in ann.turns:
        s = max(lo, int(round(t.onset_s / grid_s)))
        e = min(hi, int(round((t.onset_s + t.duration_s) / grid_s)))
        if e > s:
            (own if t.speaker_id == spk else other)[s - lo:e - lo] = True
    return own.mean() >= 0.99 and other.mean() <= 0.01
