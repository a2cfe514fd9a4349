"""Synthetic meeting generator: determinism, targets, corpus layout."""

import json

import numpy as np
import pytest

from avdiar.binio import read_lip_features
from avdiar.dsp import read_wav
from avdiar.errors import ConfigError
from avdiar.rttm import annotation_to_labels, parse_rttm_file
from avdiar.simulate import (GRID_S, MeetingSpec, generate_corpus,
                             generate_meeting, measured_overlap_ratio)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ConfigError, match="num_speakers"):
            MeetingSpec(num_speakers=0)
        with pytest.raises(ConfigError, match="duration_s"):
            MeetingSpec(duration_s=0.0)
        with pytest.raises(ConfigError, match="overlap_ratio"):
            MeetingSpec(overlap_ratio=0.6)

    def test_speaker_ids(self):
        assert MeetingSpec(num_speakers=3).speaker_ids() == \
            ["spk0", "spk1", "spk2"]


class TestMeeting:
    def spec(self, **kw):
        base = dict(num_speakers=2, duration_s=20.0, overlap_ratio=0.2,
                    snr_db=10.0, seed=7)
        base.update(kw)
        return MeetingSpec(**base)

    def test_deterministic(self):
        a_audio, a_lips, a_ann = generate_meeting(self.spec())
        b_audio, b_lips, b_ann = generate_meeting(self.spec())
        np.testing.assert_array_equal(a_audio.samples, b_audio.samples)
        assert a_ann.turns == b_ann.turns
        for la, lb in zip(a_lips, b_lips):
            np.testing.assert_array_equal(la.values, lb.values)

    def test_seed_changes_content(self):
        a_audio, _, a_ann = generate_meeting(self.spec(seed=1))
        b_audio, _, b_ann = generate_meeting(self.spec(seed=2))
        assert a_ann.turns != b_ann.turns
        assert not np.array_equal(a_audio.samples, b_audio.samples)

    def test_turns_on_grid_and_in_range(self):
        _, _, ann = generate_meeting(self.spec())
        assert ann.turns
        for t in ann.turns:
            assert abs(t.onset_s * 100 - round(t.onset_s * 100)) < 1e-9
            assert abs(t.duration_s * 100 - round(t.duration_s * 100)) < 1e-9
            assert t.onset_s >= 0.0
            assert t.offset_s <= 20.0 + 1e-9

    @pytest.mark.parametrize("seed", [0, 1, 2, 7])
    def test_overlap_tracks_target(self, seed):
        spec = self.spec(duration_s=60.0, seed=seed)
        _, _, ann = generate_meeting(spec)
        measured = measured_overlap_ratio(ann, spec.duration_s)
        assert abs(measured - 0.2) <= 0.05

    def test_audio_extent_and_headroom(self):
        audio, _, _ = generate_meeting(self.spec())
        assert len(audio.samples) == 20 * 16000
        assert audio.sample_rate_hz == 16000
        assert np.max(np.abs(audio.samples)) <= 0.99 + 1e-12
        assert np.max(np.abs(audio.samples)) > 0.01

    def test_snr_scales_silence_noise(self):
        def silence_power(snr_db):
            spec = self.spec(snr_db=snr_db)
            audio, _, ann = generate_meeting(spec)
            frames = int(round(spec.duration_s / GRID_S))
            labels = annotation_to_labels(ann, spec.speaker_ids(), GRID_S,
                                          frames)
            quiet = np.repeat(labels.sum(axis=1) == 0, 160)
            return float(np.mean(audio.samples[quiet] ** 2))

        assert silence_power(30.0) < silence_power(0.0) / 10.0

    def test_lip_streams_separate_activity(self):
        spec = self.spec(duration_s=40.0)
        _, lips, ann = generate_meeting(spec)
        num_video = int(40.0 * 25)
        labels = annotation_to_labels(ann, spec.speaker_ids(), 1.0 / 25,
                                      num_video)
        for s, lip in enumerate(lips):
            assert lip.values.shape == (num_video, 8)
            active = labels[:, s] > 0.5
            assert active.sum() > 50 and (~active).sum() > 50
            on = lip.values[active].mean(axis=0)
            off = lip.values[~active].mean(axis=0)
            assert np.linalg.norm(on) > 2.0
            assert np.linalg.norm(off) < 1.0

    def test_single_speaker_has_no_overlap(self):
        spec = self.spec(num_speakers=1, overlap_ratio=0.0)
        _, lips, ann = generate_meeting(spec)
        assert len(lips) == 1
        assert measured_overlap_ratio(ann, spec.duration_s) == 0.0

    def test_empty_annotation_overlap_is_zero(self):
        from avdiar.rttm import DiarizationAnnotation
        assert measured_overlap_ratio(
            DiarizationAnnotation("x", []), 10.0) == 0.0


class TestCorpus:
    def test_layout_splits_and_files(self, tmp_path):
        template = MeetingSpec(num_speakers=2, duration_s=10.0,
                               overlap_ratio=0.2, snr_db=10.0)
        manifest = generate_corpus(tmp_path / "c", 5, template, seed=3)
        assert manifest == tmp_path / "c" / "manifest.jsonl"
        rows = [json.loads(line)
                for line in manifest.read_text().splitlines()]
        assert [r["session_id"] for r in rows] == \
            [f"synth_{i:04d}" for i in range(5)]
        assert [r["split"] for r in rows] == ["train"] * 4 + ["dev"]
        for row in rows:
            sid = row["session_id"]
            audio = read_wav(tmp_path / "c" / row["audio"])
            assert len(audio.samples) == 10 * 16000
            anns = parse_rttm_file(tmp_path / "c" / row["rttm"])
            assert set(anns) == {sid}
            assert row["speakers"] == ["spk0", "spk1"]
            for p in row["lips"]:
                lip = read_lip_features(tmp_path / "c" / p)
                assert lip.shape == (250, 8)

    def test_regeneration_is_byte_identical(self, tmp_path):
        template = MeetingSpec(duration_s=8.0, snr_db=10.0)
        m1 = generate_corpus(tmp_path / "a", 2, template, seed=5)
        m2 = generate_corpus(tmp_path / "b", 2, template, seed=5)
        assert m1.read_text() == m2.read_text()
        for rel in ("wav/synth_0001.wav", "lip/synth_0001.spk0.lipf",
                    "rttm/synth_0001.rttm"):
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes()

    def test_meeting_count_validated(self, tmp_path):
        with pytest.raises(ConfigError, match="num_meetings"):
            generate_corpus(tmp_path, 0, MeetingSpec(), seed=0)
