"""Deterministic synthetic meetings: audio, lip features, ground truth.

Each speaker alternates talk/silence through a seeded renewal process.
The duty cycle is first solved so the expected overlap fraction (time
with 2+ active speakers over time with 1+) matches the requested target
under independence, then calibrated: short meetings realize that
expectation noisily, so activity is redrawn from derived seed streams
with a bisected duty until the measured overlap lands within 0.02 of
the target (best attempt kept).  Speakers get harmonic-comb audio
signatures (fundamental 120 + 40*s Hz) gated by their activity with
20 ms ramps, mixed with white noise at a controlled SNR.  Lip features
are a per-speaker unit direction vector scaled by activity plus
unit-variance noise, at 25 fps.  Ground truth sits on the 10 ms grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio
from .dsp import AudioSignal, write_wav
from .errors import ConfigError
from .rttm import DiarizationAnnotation, Turn, annotation_to_labels, write_rttm_file

GRID_S = 0.01
RAMP_S = 0.02
MEAN_TALK_S = 1.0
LIP_GAIN = 3.0
HARMONICS = 6
_OVERLAP_TOL = 0.02
_MAX_ATTEMPTS = 10


@dataclass
class MeetingSpec:
    """Parameters of one synthetic meeting."""

    num_speakers: int = 2
    duration_s: float = 60.0
    overlap_ratio: float = 0.2
    snr_db: float = 10.0
    seed: int = 0
    sample_rate_hz: int = 16000
    video_fps: int = 25
    lip_dim: int = 8

    def __post_init__(self):
        if self.num_speakers < 1:
            raise ConfigError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.duration_s <= 0:
            raise ConfigError(f"duration_s must be > 0, got {self.duration_s}")
        if not 0.0 <= self.overlap_ratio <= 0.5:
            raise ConfigError(
                f"overlap_ratio must be in [0, 0.5], got {self.overlap_ratio}")

    def speaker_ids(self) -> list[str]:
        return [f"spk{s}" for s in range(self.num_speakers)]


@dataclass
class LipFeatureSequence:
    """Per-speaker visual feature frames at the video rate."""

    values: np.ndarray
    fps: int = 25

    def save(self, path) -> None:
        binio.write_lip_features(path, self.values)

    @classmethod
    def load(cls, path, fps: int = 25) -> "LipFeatureSequence":
        return cls(binio.read_lip_features(path), fps=fps)


def _expected_overlap(duty: float, s: int) -> float:
    """Overlap fraction of independent speakers with the given duty cycle."""
    p_any = 1.0 - (1.0 - duty) ** s
    p_one = s * duty * (1.0 - duty) ** (s - 1)
    return (p_any - p_one) / p_any if p_any > 0 else 0.0


def _duty_for_overlap(target: float, s: int) -> float:
    """Invert the overlap curve by bisection; duty floored at 5%."""
    if s == 1:
        return 0.4
    if target <= 0:
        return 0.05
    lo, hi = 1e-4, 0.95
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _expected_overlap(mid, s) < target:
            lo = mid
        else:
            hi = mid
    return max(0.05, 0.5 * (lo + hi))


def _activity_turns(rng: np.random.Generator, speaker_id: str,
                    duration_s: float, duty: float) -> list[Turn]:
    """Alternating talk/silence turns snapped to the 10 ms grid."""
    mean_talk = MEAN_TALK_S
    mean_sil = mean_talk * (1.0 - duty) / duty
    talking = rng.random() < duty
    pos = 0.0
    first = True
    turns = []
    while pos < duration_s:
        mean = mean_talk if talking else mean_sil
        span = rng.uniform(0.5 * mean, 1.5 * mean)
        if first:
            # residual of the in-progress interval, for a stationary start
            span *= rng.random()
            first = False
        if talking:
            onset = round(pos / GRID_S) * GRID_S
            offset = round(min(pos + span, duration_s) / GRID_S) * GRID_S
            if offset - onset >= GRID_S / 2:
                turns.append(Turn(speaker_id, round(onset, 2),
                                  round(offset - onset, 2)))
        pos += span
        talking = not talking
    return turns


def _draw_activity(spec: "MeetingSpec") -> list[list[Turn]]:
    """Per-speaker turns whose measured overlap tracks the target."""
    speaker_ids = spec.speaker_ids()
    duty = _duty_for_overlap(spec.overlap_ratio, spec.num_speakers)
    lo, hi = 0.02, 0.95
    best, best_err = None, None
    for attempt in range(_MAX_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, attempt])
        per_speaker = [_activity_turns(rng, spk, spec.duration_s, duty)
                       for spk in speaker_ids]
        ann = DiarizationAnnotation(
            "draft", sorted((t for ts in per_speaker for t in ts),
                            key=lambda t: (t.onset_s, t.speaker_id)))
        measured = measured_overlap_ratio(ann, spec.duration_s)
        err = abs(measured - spec.overlap_ratio)
        if best is None or err < best_err:
            best, best_err = per_speaker, err
        if err <= _OVERLAP_TOL or spec.num_speakers == 1:
            break
        if measured < spec.overlap_ratio:
            lo = max(lo, duty)
        else:
            hi = min(hi, duty)
        duty = 0.5 * (lo + hi)
    return best


def _envelope(turns: list[Turn], num_samples: int, rate: int) -> np.ndarray:
    """Per-sample gate in [0, 1] with linear ramps at turn edges."""
    env = np.zeros(num_samples)
    for t in turns:
        a = int(round(t.onset_s * rate))
        b = min(int(round(t.offset_s * rate)), num_samples)
        if b <= a:
            continue
        env[a:b] = 1.0
        ramp = min(int(round(RAMP_S * rate)), (b - a) // 2)
        if ramp > 0:
            shape = np.linspace(0.0, 1.0, ramp, endpoint=False)
            env[a:a + ramp] = shape
            env[b - ramp:b] = shape[::-1]
    return env


def _harmonic_comb(rng: np.random.Generator, speaker_index: int,
                   num_samples: int, rate: int) -> np.ndarray:
    f0 = 120.0 + 40.0 * speaker_index
    t = np.arange(num_samples) / rate
    wave = np.zeros(num_samples)
    for h in range(1, HARMONICS + 1):
        if h * f0 >= rate / 2:
            break
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave += np.sin(2.0 * np.pi * h * f0 * t + phase) / h
    return 0.15 * wave / np.max(np.abs(wave))


def generate_meeting(spec: MeetingSpec) -> tuple[
        AudioSignal, list[LipFeatureSequence], DiarizationAnnotation]:
    """Build one meeting's audio, lip streams, and reference annotation."""
    speaker_ids = spec.speaker_ids()
    per_speaker = _draw_activity(spec)
    all_turns = sorted((t for ts in per_speaker for t in ts),
                       key=lambda t: (t.onset_s, t.speaker_id))
    ann = DiarizationAnnotation(f"meeting{spec.seed}", all_turns)

    rng_audio = np.random.default_rng([spec.seed, 100])
    num_samples = int(round(spec.duration_s * spec.sample_rate_hz))
    mixture = np.zeros(num_samples)
    for s, turns in enumerate(per_speaker):
        comb = _harmonic_comb(rng_audio, s, num_samples, spec.sample_rate_hz)
        mixture += comb * _envelope(turns, num_samples, spec.sample_rate_hz)

    active = mixture != 0.0
    signal_power = float(np.mean(mixture[active] ** 2)) if active.any() else 1e-6
    noise_power = signal_power / 10.0 ** (spec.snr_db / 10.0)
    mixture = mixture + rng_audio.normal(0.0, np.sqrt(noise_power), num_samples)
    peak = np.max(np.abs(mixture))
    if peak > 0.99:
        mixture *= 0.99 / peak

    rng_lip = np.random.default_rng([spec.seed, 101])
    num_video = int(round(spec.duration_s * spec.video_fps))
    video_hop = 1.0 / spec.video_fps
    video_labels = annotation_to_labels(ann, speaker_ids, video_hop, num_video)
    lips = []
    for s in range(spec.num_speakers):
        direction = rng_lip.standard_normal(spec.lip_dim)
        direction /= np.linalg.norm(direction)
        noise = rng_lip.standard_normal((num_video, spec.lip_dim))
        values = LIP_GAIN * video_labels[:, s:s + 1] * direction + noise
        lips.append(LipFeatureSequence(values, fps=spec.video_fps))

    return AudioSignal(mixture, spec.sample_rate_hz), lips, ann


def measured_overlap_ratio(ann: DiarizationAnnotation, duration_s: float) -> float:
    """Fraction of speech time (on the 10 ms grid) with 2+ active speakers."""
    t = int(round(duration_s / GRID_S))
    labels = annotation_to_labels(ann, ann.speakers(), GRID_S, t)
    counts = labels.sum(axis=1)
    speech = np.count_nonzero(counts >= 1)
    return float(np.count_nonzero(counts >= 2) / speech) if speech else 0.0


def generate_corpus(out_dir, num_meetings: int, template: MeetingSpec,
                    seed: int, train_fraction: float = 0.8) -> Path:
    """Write a corpus of meetings plus a JSON-lines manifest.

    Returns the manifest path.  Paths inside the manifest are relative
    to its directory.  The first round(n * train_fraction) meetings
    form the train split, the remainder dev.
    """
    if num_meetings < 1:
        raise ConfigError(f"num_meetings must be >= 1, got {num_meetings}")
    out_dir = Path(out_dir)
    for sub in ("wav", "lip", "rttm"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    num_train = int(round(num_meetings * train_fraction))
    records = []
    for i in range(num_meetings):
        spec_i = MeetingSpec(
            num_speakers=template.num_speakers,
            duration_s=template.duration_s,
            overlap_ratio=template.overlap_ratio,
            snr_db=template.snr_db,
            seed=seed * 1_000_003 + i,
            sample_rate_hz=template.sample_rate_hz,
            video_fps=template.video_fps,
            lip_dim=template.lip_dim,
        )
        sid = f"synth_{i:04d}"
        audio, lips, ann = generate_meeting(spec_i)
        ann = DiarizationAnnotation(sid, ann.turns)
        wav_path = out_dir / "wav" / f"{sid}.wav"
        write_wav(wav_path, audio)
        lip_paths = []
        for s, lip in enumerate(lips):
            lip_path = out_dir / "lip" / f"{sid}.spk{s}.lipf"
            lip.save(lip_path)
            lip_paths.append(lip_path)
        rttm_path = out_dir / "rttm" / f"{sid}.rttm"
        write_rttm_file(rttm_path, ann)
        records.append({
            "session_id": sid,
            "split": "train" if i < num_train else "dev",
            "audio": str(wav_path.relative_to(out_dir)),
            "lips": [str(p.relative_to(out_dir)) for p in lip_paths],
            "rttm": str(rttm_path.relative_to(out_dir)),
            "speakers": spec_i.speaker_ids(),
            "duration_s": spec_i.duration_s,
            "video_fps": spec_i.video_fps,
        })
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return manifest_path
