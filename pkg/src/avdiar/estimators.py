"""Scikit-learn style front doors for the pipeline.

`LogMelExtractor` is a stateless transformer over waveforms.
`AudioVisualDiarizer` wraps the whole system: ``fit`` trains on a
corpus manifest, ``predict`` turns (audio, lip streams, enrollment)
sessions into annotations.  Hyperparameters follow the sklearn
convention of being stored verbatim in ``__init__`` and validated at
fit time, so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .decoding import DecodeConfig, decode_session
from .dsp import AudioSignal, log_mel
from .errors import DataError
from .models import DecoderConfig, EncoderConfig, ModelBundle
from .rttm import DiarizationAnnotation
from .training import (TrainConfig, initialize_from_pretrained, joint_train,
                       load_manifest, load_session_inputs, pretrain_extractor,
                       pretrain_lip_encoder)


class LogMelExtractor(BaseEstimator, TransformerMixin):
    """Waveforms to log-Mel feature matrices."""

    def __init__(self, n_mels=80, sample_rate_hz=16000,
                 frame_len_s=0.025, frame_hop_s=0.010):
        self.n_mels = n_mels
        self.sample_rate_hz = sample_rate_hz
        self.frame_len_s = frame_len_s
        self.frame_hop_s = frame_hop_s

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        """X: one waveform array or a list of them."""
        single = isinstance(X, np.ndarray) and np.ndim(X) == 1
        waveforms = [X] if single else list(X)
        feats = [log_mel(AudioSignal(w, self.sample_rate_hz),
                         n_mels=self.n_mels,
                         frame_len_s=self.frame_len_s,
                         frame_hop_s=self.frame_hop_s).values
                 for w in waveforms]
        return feats[0] if single else feats


class AudioVisualDiarizer(BaseEstimator):
    """End-to-end diarizer: pretrain, joint-train, then decode sessions.

    ``fit`` consumes a corpus manifest path; ``predict`` consumes
    manifest session records (or a manifest path) and returns one
    :class:`DiarizationAnnotation` per session.
    """

    def __init__(self, decoder_kind="transformer", encoder_kind="resnet_se",
                 n_mels=80, seed=0, lr=1e-3,
                 pretrain_steps=150, lip_pretrain_steps=100,
                 joint_steps=300, batch_size=2, chunk_frames=600,
                 shift_frames=100, median_kernel=11, threshold=0.5):
        self.decoder_kind = decoder_kind
        self.encoder_kind = encoder_kind
        self.n_mels = n_mels
        self.seed = seed
        self.lr = lr
        self.pretrain_steps = pretrain_steps
        self.lip_pretrain_steps = lip_pretrain_steps
        self.joint_steps = joint_steps
        self.batch_size = batch_size
        self.chunk_frames = chunk_frames
        self.shift_frames = shift_frames
        self.median_kernel = median_kernel
        self.threshold = threshold

    def _decode_config(self) -> DecodeConfig:
        return DecodeConfig(chunk_frames=self.chunk_frames,
                            shift_frames=self.shift_frames,
                            median_kernel=self.median_kernel,
                            threshold=self.threshold)

    def fit(self, X, y=None):
        """X: path to a corpus manifest; trains on its train split."""
        records = [r for r in load_manifest(X) if r.split == "train"]
        if not records:
            raise DataError(f"manifest {X} has no train sessions")
        encoder_config = EncoderConfig.toy(self.encoder_kind)
        extractor_config = EncoderConfig.toy()
        bundle = ModelBundle(
            seed=self.seed, n_mels=self.n_mels,
            encoder_config=encoder_config,
            extractor_config=extractor_config,
            decoder_config=DecoderConfig(kind=self.decoder_kind))
        base = TrainConfig(lr=self.lr, batch_size=self.batch_size,
                           chunk_frames=self.chunk_frames, seed=self.seed)
        with tempfile.TemporaryDirectory() as tmp:
            ext_cfg = TrainConfig(
                lr=self.lr, epochs=1, steps_per_epoch=self.pretrain_steps,
                batch_size=max(2, self.batch_size), seed=self.seed)
            extractor_store = pretrain_extractor(
                records, ext_cfg, n_mels=self.n_mels,
                encoder_config=extractor_config, out_dir=tmp)
            lip_cfg = TrainConfig(
                lr=self.lr, epochs=1, steps_per_epoch=self.lip_pretrain_steps,
                batch_size=self.batch_size, chunk_frames=self.chunk_frames,
                seed=self.seed)
            lip_store = pretrain_lip_encoder(records, lip_cfg,
                                             lip_config=bundle.lip_config,
                                             out_dir=tmp)
        initialize_from_pretrained(bundle, extractor_store, lip_store)
        sessions = [load_session_inputs(bundle, r) for r in records]
        joint_cfg = TrainConfig(lr=base.lr, epochs=1,
                                steps_per_epoch=self.joint_steps,
                                batch_size=self.batch_size,
                                chunk_frames=self.chunk_frames,
                                seed=self.seed)
        joint_train(bundle, sessions, joint_cfg)
        self.bundle_ = bundle
        return self

    def predict(self, X) -> list[DiarizationAnnotation]:
        """X: manifest path or a list of manifest records."""
        if not hasattr(self, "bundle_"):
            raise DataError("estimator is not fitted; call fit first")
        records = load_manifest(X) if isinstance(X, (str, Path)) else list(X)
        cfg = self._decode_config()
        out = []
        for rec in records:
            inputs = load_session_inputs(self.bundle_, rec, with_labels=False)
            ann, _ = decode_session(self.bundle_, inputs, cfg)
            out.append(ann)
        return out
