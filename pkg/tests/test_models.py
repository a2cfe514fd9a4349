"""Model architecture: configs, shapes, invariances, bundle round trips."""

import numpy as np
import pytest

from avdiar.dsp import LogMelFeatures
from avdiar.errors import ConfigError, DataError
from avdiar.models import (ActivityProbabilityMatrix, DecoderConfig,
                           EncoderConfig, LipEncoderConfig, ModelBundle,
                           SpeakerEmbedding, build_decoder,
                           prepare_session_inputs)
from avdiar.nn import ParameterStore, Tensor

DECODERS = ("transformer", "conformer", "cross_attention")


def toy_decoder(kind, num_speakers=2, seed=0):
    store = ParameterStore(seed)
    cfg = DecoderConfig(kind=kind, num_speakers=num_speakers)
    dec = build_decoder(store, "decoder", cfg, lip_dim=9, frame_dim=16,
                        utt_dim=16)
    return dec, store


def decoder_io(rng, t=20, s=2):
    lips = [Tensor(rng.standard_normal((t, 9))) for _ in range(s)]
    frame = Tensor(rng.standard_normal((t, 16)))
    utts = [Tensor(rng.standard_normal(16)) for _ in range(s)]
    return lips, frame, utts


class TestConfigs:
    def test_encoder_kind_checked(self):
        with pytest.raises(ConfigError, match="unknown encoder kind"):
            EncoderConfig(kind="wavlm")

    def test_toy_preset_caps_dims(self):
        with pytest.raises(ConfigError, match="toy preset"):
            EncoderConfig(channels=(64, 64))

    def test_full_presets_pin_production_dims(self):
        resnet = EncoderConfig.full("resnet_se")
        assert resnet.channels == (32, 64, 128, 256)
        assert resnet.embed_dim == 128
        ecapa = EncoderConfig.full("ecapa_tdnn")
        assert ecapa.channels == (1024, 1024, 1024)
        assert ecapa.embed_dim == 192
        with pytest.raises(ConfigError, match="full resnet_se preset"):
            EncoderConfig(kind="resnet_se", channels=(32, 64), preset="full")

    def test_lip_config_validation(self):
        with pytest.raises(ConfigError, match="divisible"):
            LipEncoderConfig(model_dim=10, heads=3)
        with pytest.raises(ConfigError, match="upsample"):
            LipEncoderConfig(upsample=0)

    def test_decoder_config_validation(self):
        with pytest.raises(ConfigError, match="unknown decoder kind"):
            DecoderConfig(kind="mamba")
        with pytest.raises(ConfigError, match="divisible"):
            DecoderConfig(model_dim=10, heads=3)
        with pytest.raises(ConfigError, match="num_speakers"):
            DecoderConfig(num_speakers=0)
        with pytest.raises(ConfigError, match="odd"):
            DecoderConfig(conv_kernel=4)


class TestDomainTypes:
    def test_speaker_embedding_must_be_unit_norm(self):
        v = np.ones(4) / 2.0
        emb = SpeakerEmbedding(v)
        assert emb.cosine(emb) == pytest.approx(1.0)
        with pytest.raises(DataError, match="norm"):
            SpeakerEmbedding(np.ones(4))

    def test_probability_matrix_validation(self):
        with pytest.raises(DataError, match="2-D"):
            ActivityProbabilityMatrix(np.zeros(5))
        with pytest.raises(DataError, match="outside"):
            ActivityProbabilityMatrix(np.full((1, 4), 1.5))

    def test_probability_matrix_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        probs = ActivityProbabilityMatrix(rng.random((3, 50)),
                                          frame_hop_s=0.01)
        probs.save(tmp_path / "p.prob")
        back = ActivityProbabilityMatrix.load(tmp_path / "p.prob")
        assert back.frame_hop_s == 0.01
        np.testing.assert_allclose(back.probs, probs.probs, atol=1e-6)


class TestEncoders:
    def test_frame_encoder_preserves_length(self, toy_bundle):
        feats = Tensor(np.random.default_rng(1).standard_normal((30, 24)))
        out = toy_bundle.speaker_encoder(feats)
        assert out.shape == (30, 16)

    def test_extractor_emits_unit_vector(self, toy_bundle):
        feats = Tensor(np.random.default_rng(2).standard_normal((30, 24)))
        out = toy_bundle.speaker_extractor(feats)
        assert out.shape == (16,)
        assert np.linalg.norm(out.data) == pytest.approx(1.0, abs=1e-9)

    def test_lip_encoder_upsamples(self, toy_bundle):
        lip = Tensor(np.random.default_rng(3).standard_normal((10, 8)))
        out = toy_bundle.lip_encoder(lip)
        assert out.shape == (40, 16)
        # upsampling repeats each video frame, so rows come in blocks of 4
        np.testing.assert_array_equal(out.data[0], out.data[3])
        np.testing.assert_array_equal(out.data[4], out.data[7])

    def test_empty_inputs_rejected(self, toy_bundle):
        with pytest.raises(DataError, match="empty"):
            toy_bundle.speaker_encoder(Tensor(np.zeros((0, 24))))
        with pytest.raises(DataError, match="empty"):
            toy_bundle.lip_encoder(Tensor(np.zeros((0, 8))))


class TestDecoders:
    @pytest.mark.parametrize("kind", DECODERS)
    def test_output_shape_and_range(self, kind):
        dec, _ = toy_decoder(kind)
        rng = np.random.default_rng(4)
        probs = dec(*decoder_io(rng))
        assert probs.shape == (2, 20)
        assert probs.data.min() > 0.0
        assert probs.data.max() < 1.0

    @pytest.mark.parametrize("kind", DECODERS)
    def test_rows_permute_with_speaker_inputs(self, kind):
        dec, _ = toy_decoder(kind, num_speakers=3)
        rng = np.random.default_rng(5)
        lips, frame, utts = decoder_io(rng, s=3)
        base = dec(lips, frame, utts).data
        for perm in ((2, 0, 1), (1, 0, 2), (2, 1, 0)):
            out = dec([lips[i] for i in perm], frame,
                      [utts[i] for i in perm]).data
            assert np.array_equal(out, base[list(perm)]), (kind, perm)

    @pytest.mark.parametrize("kind", DECODERS)
    def test_speaker_rows_independent(self, kind):
        # changing one speaker's inputs must not touch other rows
        dec, _ = toy_decoder(kind)
        rng = np.random.default_rng(6)
        lips, frame, utts = decoder_io(rng)
        base = dec(lips, frame, utts).data
        lips2 = [lips[0], Tensor(rng.standard_normal((20, 9)))]
        out = dec(lips2, frame, utts).data
        assert np.array_equal(out[0], base[0])
        assert not np.array_equal(out[1], base[1])

    def test_stream_count_mismatch_rejected(self):
        dec, _ = toy_decoder("transformer")
        rng = np.random.default_rng(7)
        lips, frame, utts = decoder_io(rng)
        with pytest.raises(DataError, match="lip streams"):
            dec(lips[:1], frame, utts)

    def test_stream_length_mismatch_rejected(self):
        dec, _ = toy_decoder("transformer")
        rng = np.random.default_rng(8)
        lips, frame, utts = decoder_io(rng)
        lips[0] = Tensor(rng.standard_normal((19, 9)))
        with pytest.raises(DataError, match="length"):
            dec(lips, frame, utts)

    def test_cross_attention_single_key_weights_are_one(self):
        # stage 1 attends to a length-1 key sequence: softmax over one
        # key is exactly 1, so every query receives the same value row
        dec, _ = toy_decoder("cross_attention")
        rng = np.random.default_rng(9)
        x = Tensor(rng.standard_normal((12, 16)))
        u = Tensor(rng.standard_normal((1, 16)))
        out = dec.mha1(x, u, u).data
        for row in out[1:]:
            np.testing.assert_allclose(row, out[0], atol=1e-12)


class TestSessionPreparation:
    def lip_feats(self, rng, frames=25):
        return rng.standard_normal((frames, 8))

    def feats(self, rng, t=100):
        return LogMelFeatures(rng.standard_normal((t, 24)))

    def unit_rows(self, rng, s=2):
        v = rng.standard_normal((s, 16))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def test_aligns_to_shortest_stream(self, toy_bundle):
        rng = np.random.default_rng(10)
        si = prepare_session_inputs(
            toy_bundle, self.feats(rng, 100),
            [self.lip_feats(rng, 20), self.lip_feats(rng, 25)],
            self.unit_rows(rng), "s", ["a", "b"])
        assert si.num_frames == 80  # 20 video frames * 4
        assert si.lip_embeds.shape == (2, 80, 17)
        assert si.feats.shape == (80, 24)

    def test_occluded_speaker_gets_zero_stream_and_flag(self, toy_bundle):
        rng = np.random.default_rng(11)
        si = prepare_session_inputs(
            toy_bundle, self.feats(rng, 100),
            [None, self.lip_feats(rng)],
            self.unit_rows(rng), "s", ["a", "b"])
        assert np.all(si.lip_embeds[0] == 0.0)
        assert np.all(si.lip_embeds[1, :, -1] == 1.0)
        assert np.any(si.lip_embeds[1, :, :-1] != 0.0)

    def test_labels_cropped_with_session(self, toy_bundle):
        rng = np.random.default_rng(12)
        labels = np.ones((2, 100))
        si = prepare_session_inputs(
            toy_bundle, self.feats(rng, 100),
            [self.lip_feats(rng, 20), self.lip_feats(rng, 20)],
            self.unit_rows(rng), "s", ["a", "b"], labels=labels)
        assert si.labels.shape == (2, 80)

    def test_rate_mismatch_rejected(self, toy_bundle):
        rng = np.random.default_rng(13)
        with pytest.raises(DataError, match="integer multiple"):
            prepare_session_inputs(
                toy_bundle, self.feats(rng), [self.lip_feats(rng)] * 2,
                self.unit_rows(rng), "s", ["a", "b"], video_fps=30)
        with pytest.raises(DataError, match="upsample"):
            prepare_session_inputs(
                toy_bundle, self.feats(rng), [self.lip_feats(rng)] * 2,
                self.unit_rows(rng), "s", ["a", "b"], video_fps=50)

    def test_stream_and_embedding_counts_checked(self, toy_bundle):
        rng = np.random.default_rng(14)
        with pytest.raises(DataError, match="lip streams"):
            prepare_session_inputs(
                toy_bundle, self.feats(rng), [self.lip_feats(rng)],
                self.unit_rows(rng), "s", ["a", "b"])
        with pytest.raises(DataError, match="utterance embeddings"):
            prepare_session_inputs(
                toy_bundle, self.feats(rng), [self.lip_feats(rng)] * 2,
                self.unit_rows(rng, s=3), "s", ["a", "b"])


class TestBundle:
    def test_same_seed_reproduces_parameters(self):
        a = ModelBundle(seed=5, n_mels=24)
        b = ModelBundle(seed=5, n_mels=24)
        for (name, ta), (_, tb) in zip(a.store.items(), b.store.items()):
            assert np.array_equal(ta.data, tb.data), name

    def test_different_seeds_differ(self):
        a = ModelBundle(seed=5, n_mels=24)
        b = ModelBundle(seed=6, n_mels=24)
        assert any(not np.array_equal(ta.data, tb.data)
                   for (_, ta), (_, tb) in zip(a.store.items(), b.store.items()))

    def test_save_load_round_trip(self, tmp_path, toy_bundle):
        toy_bundle.save(tmp_path / "model")
        back = ModelBundle.load(tmp_path / "model")
        assert back.decoder_config == toy_bundle.decoder_config
        assert back.encoder_config == toy_bundle.encoder_config
        assert back.lip_config == toy_bundle.lip_config
        assert back.n_mels == toy_bundle.n_mels
        for (name, t1), (_, t2) in zip(toy_bundle.store.items(),
                                       back.store.items()):
            assert np.array_equal(t1.data, t2.data), name

    def test_missing_files_raise(self, tmp_path):
        with pytest.raises(DataError, match="missing model files"):
            ModelBundle.load(tmp_path / "nope")

    def test_corrupt_config_raises(self, tmp_path, toy_bundle):
        toy_bundle.save(tmp_path / "model")
        ini = tmp_path / "model.ini"
        ini.write_text(ini.read_text().replace("layers = 2", "layers = many"))
        with pytest.raises(ConfigError, match="bad model config"):
            ModelBundle.load(tmp_path / "model")
        ini.write_text("[decoder]\nlayers = 1\nlayers = 2\n")
        with pytest.raises(ConfigError, match="bad model config"):
            ModelBundle.load(tmp_path / "model")
