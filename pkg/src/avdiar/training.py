"""Training loops: extractor/lip pretraining and joint decoder training.

Frozen modules (by default the lip encoder and the utterance extractor)
run outside the tape, so no gradient can reach them structurally; their
cached outputs live in :class:`SessionInputs`.  Batch composition is
derived from (seed, epoch, step) through a counter-based stream, which
makes a resumed run reproduce the original batch order bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .correction import enrollment_embeddings, single_speaker_segments
from .dsp import LogMelFeatures, crop_signal, log_mel, read_wav
from .errors import ConfigError, DataError
from .models import (ActivityProbabilityMatrix, EncoderConfig, LipEncoder,
                     LipEncoderConfig, ModelBundle, SessionInputs,
                     UtteranceExtractor, prepare_session_inputs)
from .nn import ParameterStore, Tape, Tensor, no_grad
from .nn import tensor as tt
from .nn.layers import Linear
from .nn.params import load_checkpoint, parameter_key, save_arrays, splitmix64_uniform
from .rttm import DiarizationAnnotation, annotation_to_labels, parse_rttm_file

FREEZABLE_MODULES = ("lip_encoder", "speaker_extractor", "speaker_encoder")

_PROB_FLOOR = 1e-7


@dataclass
class TrainConfig:
    """Optimization settings shared by all training loops."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 1
    steps_per_epoch: int = 50
    batch_size: int = 2
    chunk_frames: int = 600
    seed: int = 0
    frozen_modules: tuple[str, ...] = ("lip_encoder", "speaker_extractor")

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        self.frozen_modules = tuple(self.frozen_modules)
        unknown = set(self.frozen_modules) - set(FREEZABLE_MODULES)
        if unknown:
            raise ConfigError(
                f"frozen_modules {sorted(unknown)} not in {FREEZABLE_MODULES}")


@dataclass
class LabelMatrix:
    """S x T binary speaker-activity targets."""

    values: np.ndarray
    frame_hop_s: float = 0.01

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.isin(self.values, (0.0, 1.0)).all():
            raise DataError("labels must be 0/1")


def bce_loss_tensor(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all cells, probabilities clamped."""
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise DataError(
            f"probs shape {probs.shape} != labels shape {labels.shape}")
    p = tt.clamp(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    y = Tensor(labels)
    pos = tt.mul(y, tt.log(p))
    neg = tt.mul(Tensor(1.0 - labels),
                 tt.log(tt.add_const(tt.neg(p), 1.0)))
    return tt.neg(tt.reduce_mean(tt.add(pos, neg)))


def bce_loss(probs: ActivityProbabilityMatrix, labels: LabelMatrix) -> float:
    with no_grad():
        return float(bce_loss_tensor(Tensor(probs.probs), labels.values).data)


class Adam:
    """Adam over an explicit (name, tensor) list, with state round-trips."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = grads.get_or_zeros(p)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def save_state(self, path) -> None:
        items = {"step": np.array(float(self.t))}
        for name in self.m:
            items[f"m.{name}"] = self.m[name]
            items[f"v.{name}"] = self.v[name]
        save_arrays(path, items)

    def load_state(self, path) -> None:
        items = load_checkpoint(path)
        self.t = int(items.pop("step"))
        for name in self.m:
            self.m[name] = items[f"m.{name}"]
            self.v[name] = items[f"v.{name}"]


def make_batch(seed: int, epoch: int, step: int, num_items: int,
               item_spans: list[int], batch_size: int,
               chunk: int) -> list[tuple[int, int]]:
    """Deterministic (item, window start) picks for one step."""
    key = parameter_key(seed, f"batch/e{epoch}/s{step}")
    draws = splitmix64_uniform(key, 2 * batch_size)
    picks = []
    for b in range(batch_size):
        idx = min(int(draws[2 * b] * num_items), num_items - 1)
        max_start = max(0, item_spans[idx] - chunk)
        start = min(int(draws[2 * b + 1] * (max_start + 1)), max_start)
        picks.append((idx, start))
    return picks


def _transfer_arrays(arrays: dict[str, np.ndarray], dst: ParameterStore,
                     prefix_map: dict[str, str]) -> list[str]:
    copied = []
    for src_prefix, dst_prefix in prefix_map.items():
        dot = src_prefix + "."
        for name in sorted(arrays):
            if name != src_prefix and not name.startswith(dot):
                continue
            dst_name = dst_prefix + name[len(src_prefix):]
            if dst_name in dst and dst[dst_name].shape == arrays[name].shape:
                dst[dst_name].data = arrays[name].copy()
                copied.append(dst_name)
    return copied


def transfer_parameters(src: ParameterStore, dst: ParameterStore,
                        prefix_map: dict[str, str]) -> list[str]:
    """Copy shape-matching parameters across stores by prefix rewrite.

    Returns the destination names that received values; mismatched or
    missing names are skipped silently (fresh init is the fallback).
    """
    return _transfer_arrays({name: t.data for name, t in src.items()},
                            dst, prefix_map)


class _MetricsLog:
    """CSV metrics writer: step, loss, lr."""

    def __init__(self, path, resume: bool):
        self.path = Path(path) if path else None
        if self.path and not resume:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(["step", "loss", "lr"])

    def write(self, step: int, loss: float, lr: float) -> None:
        if self.path:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([step, f"{loss:.10f}", f"{lr:g}"])


# ---------------------------------------------------------------------------
# Manifest handling
# ---------------------------------------------------------------------------


@dataclass
class SessionRecord:
    """One manifest row with paths resolved."""

    session_id: str
    split: str
    audio: Path | None
    features: Path | None
    lips: list[Path]
    rttm: Path
    speakers: list[str]
    video_fps: int = 25


def load_manifest(path) -> list[SessionRecord]:
    """Read a JSON-lines manifest; paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    root = path.parent
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                  start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        try:
            record = SessionRecord(
                session_id=rec["session_id"],
                split=rec.get("split", "train"),
                audio=root / rec["audio"] if "audio" in rec else None,
                features=root / rec["features"] if "features" in rec else None,
                lips=[root / p for p in rec["lips"]],
                rttm=root / rec["rttm"],
                speakers=list(rec["speakers"]),
                video_fps=int(rec.get("video_fps", 25)),
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc}") from exc
        if record.audio is None and record.features is None:
            raise DataError(f"{path}:{lineno}: needs 'audio' or 'features'")
        for p in [record.audio, record.features, record.rttm, *record.lips]:
            if p is not None and not p.exists():
                raise DataError(f"{path}:{lineno}: missing file {p}")
        records.append(record)
    return records


def load_session_inputs(bundle: ModelBundle, record: SessionRecord,
                        with_labels: bool = True,
                        enrollment_k: int = 3) -> SessionInputs:
    """Build decoder-ready inputs for one session.

    Utterance embeddings are enrolled from the reference annotation's
    single-speaker regions (the system binds output channels to known
    speakers; the reference supplies who they are).
    """
    if record.features is not None:
        feats = LogMelFeatures.load(record.features)
    else:
        feats = log_mel(read_wav(record.audio), n_mels=bundle.n_mels)
    lips = [binio.read_lip_features(p) for p in record.lips]
    ann = parse_rttm_file(record.rttm).get(record.session_id)
    if ann is None:
        raise DataError(
            f"{record.rttm} has no session {record.session_id!r}")
    if record.audio is not None:
        audio = read_wav(record.audio)
        utt_embs = enrollment_embeddings(bundle.speaker_extractor, audio, ann,
                                         record.speakers, k=enrollment_k)
    else:
        raise DataError(
            f"{record.session_id}: enrollment needs the 'audio' path")
    labels = None
    if with_labels:
        labels = annotation_to_labels(ann, record.speakers,
                                      feats.frame_hop_s, feats.num_frames).T
    return prepare_session_inputs(bundle, feats, lips, utt_embs,
                                  record.session_id, record.speakers,
                                  labels=labels, video_fps=record.video_fps)


# ---------------------------------------------------------------------------
# Extractor pretraining
# ---------------------------------------------------------------------------


def extractor_training_crops(records: list[SessionRecord], n_mels: int,
                             min_segment_s: float = 0.5,
                             max_crop_s: float = 2.0
                             ) -> tuple[list[np.ndarray], list[int], list[str]]:
    """Single-speaker feature crops with integer identity labels.

    Identities are session-position speaker names (synthetic voices are
    tied to their position), sorted for stable numbering.
    """
    feats_list: list[np.ndarray] = []
    labels: list[int] = []
    names = sorted({spk for r in records for spk in r.speakers})
    index = {spk: i for i, spk in enumerate(names)}
    for rec in records:
        if rec.audio is None:
            raise DataError(f"{rec.session_id}: pretraining needs audio")
        audio = read_wav(rec.audio)
        ann = parse_rttm_file(rec.rttm)[rec.session_id]
        for spk, (a, b) in single_speaker_segments(ann, min_segment_s):
            b = min(b, a + max_crop_s)
            crop = crop_signal(audio, a, b)
            feats_list.append(log_mel(crop, n_mels=n_mels).values)
            labels.append(index[spk])
    used = sorted({names[i] for i in labels})
    if len(used) < 2:
        raise DataError(
            f"need >= 2 speaker identities for pretraining, found {used}")
    return feats_list, labels, names


def pretrain_extractor(records: list[SessionRecord], config: TrainConfig,
                       n_mels: int = 80,
                       encoder_config: EncoderConfig | None = None,
                       out_dir=None) -> ParameterStore:
    """Train the utterance extractor as a speaker classifier.

    The classification head lives under its own prefix and is simply
    not transferred afterwards.
    """
    encoder_config = encoder_config or EncoderConfig.toy()
    crops, ids, names = extractor_training_crops(records, n_mels)
    store = ParameterStore(config.seed)
    extractor = UtteranceExtractor(store, "speaker_extractor", n_mels,
                                   encoder_config)
    head = Linear(store, "pretrain_head", encoder_config.embed_dim, len(names))
    opt = Adam(store.items(), config.lr, config.beta1, config.beta2, config.eps)
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    metrics = _MetricsLog(out_dir / "extractor_metrics.csv" if out_dir else None,
                          resume=False)
    spans = [1] * len(crops)
    step = 0
    for epoch in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            picks = make_batch(config.seed, epoch, step, len(crops), spans,
                               config.batch_size, 1)
            with Tape() as tape:
                rows = [tt.reshape(extractor(Tensor(crops[i])),
                                   (1, encoder_config.embed_dim))
                        for i, _ in picks]
                logits = head(tt.concat(rows, axis=0))
                loss = tt.cross_entropy(logits,
                                        np.array([ids[i] for i, _ in picks]))
                grads = tape.backward(loss)
            opt.step(grads)
            metrics.write(step, float(loss.data), config.lr)
            step += 1
    if out_dir:
        store.save(out_dir / "extractor.ckpt")
    return store


# ---------------------------------------------------------------------------
# Lip encoder pretraining
# ---------------------------------------------------------------------------


def _sum_tensors(tensors: list[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = tt.add(total, t)
    return total


def lip_training_streams(records: list[SessionRecord], hop_s: float = 0.01
                         ) -> list[tuple[np.ndarray, np.ndarray]]:
    """(lip features, per-acoustic-frame activity) pairs per speaker."""
    streams = []
    for rec in records:
        ann = parse_rttm_file(rec.rttm)[rec.session_id]
        factor = int(round(1.0 / hop_s / rec.video_fps))
        for s, spk in enumerate(rec.speakers):
            lip = binio.read_lip_features(rec.lips[s])
            t = lip.shape[0] * factor
            own = DiarizationAnnotation(
                ann.session_id,
                [turn for turn in ann.turns if turn.speaker_id == spk])
            labels = annotation_to_labels(own, [spk], hop_s, t)[:, 0]
            streams.append((lip, labels))
    return streams


def pretrain_lip_encoder(records: list[SessionRecord], config: TrainConfig,
                         lip_config: LipEncoderConfig | None = None,
                         out_dir=None) -> ParameterStore:
    """Train the lip encoder to predict its speaker's frame activity."""
    lip_config = lip_config or LipEncoderConfig()
    streams = lip_training_streams(records)
    store = ParameterStore(config.seed)
    encoder = LipEncoder(store, "lip_encoder", lip_config)
    head = Linear(store, "pretrain_head", lip_config.embed_dim, 1)
    opt = Adam(store.items(), config.lr, config.beta1, config.beta2, config.eps)
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    metrics = _MetricsLog(out_dir / "lip_metrics.csv" if out_dir else None,
                          resume=False)
    chunk_v = max(1, config.chunk_frames // lip_config.upsample)
    spans = [lip.shape[0] for lip, _ in streams]
    step = 0
    for epoch in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            picks = make_batch(config.seed, epoch, step, len(streams), spans,
                               config.batch_size, chunk_v)
            with Tape() as tape:
                losses = []
                for idx, start in picks:
                    lip, labels = streams[idx]
                    stop = min(start + chunk_v, lip.shape[0])
                    emb = encoder(Tensor(lip[start:stop]))
                    t = emb.shape[0]
                    probs = tt.reshape(tt.sigmoid(head(emb)), (1, t))
                    target = labels[start * lip_config.upsample:
                                    start * lip_config.upsample + t]
                    losses.append(bce_loss_tensor(probs,
                                                  target.reshape(1, t)))
                loss = (losses[0] if len(losses) == 1
                        else tt.mul_const(_sum_tensors(losses),
                                          1.0 / len(losses)))
                grads = tape.backward(loss)
            opt.step(grads)
            metrics.write(step, float(loss.data), config.lr)
            step += 1
    if out_dir:
        store.save(out_dir / "lip_encoder.ckpt")
    return store


# ---------------------------------------------------------------------------
# Joint training
# ---------------------------------------------------------------------------


def initialize_from_pretrained(bundle: ModelBundle,
                               extractor_store: ParameterStore | None = None,
                               lip_store: ParameterStore | None = None
                               ) -> list[str]:
    """Seed bundle modules from pretrained stores.

    The extractor copies verbatim; the frame-level speaker encoder
    takes every shape-compatible body layer and keeps its fresh head.
    """
    copied = []
    if extractor_store is not None:
        copied += transfer_parameters(extractor_store, bundle.store, {
            "speaker_extractor": "speaker_extractor"})
        copied += transfer_parameters(extractor_store, bundle.store, {
            "speaker_extractor.body": "speaker_encoder.body"})
    if lip_store is not None:
        copied += transfer_parameters(lip_store, bundle.store, {
            "lip_encoder": "lip_encoder"})
    return copied


def initialize_from_checkpoints(bundle: ModelBundle,
                                extractor_ckpt=None,
                                lip_ckpt=None) -> list[str]:
    """`initialize_from_pretrained` over checkpoint files."""
    copied = []
    if extractor_ckpt is not None:
        arrays = load_checkpoint(extractor_ckpt)
        copied += _transfer_arrays(arrays, bundle.store, {
            "speaker_extractor": "speaker_extractor"})
        copied += _transfer_arrays(arrays, bundle.store, {
            "speaker_extractor.body": "speaker_encoder.body"})
    if lip_ckpt is not None:
        copied += _transfer_arrays(load_checkpoint(lip_ckpt), bundle.store, {
            "lip_encoder": "lip_encoder"})
    return copied


def joint_train(bundle: ModelBundle, sessions: list[SessionInputs],
                config: TrainConfig, out_dir=None,
                start_epoch: int = 0) -> list[tuple[int, float]]:
    """Train speaker encoder + decoder with frozen modules untouched.

    Emits per-epoch checkpoints (epochNNN.ckpt + .adam) and a metrics
    CSV when ``out_dir`` is given.  With ``start_epoch > 0`` the run
    resumes from the previous epoch's files and reproduces the
    uninterrupted run bit-exactly.
    """
    if not sessions:
        raise DataError("no training sessions")
    frozen = set(config.frozen_modules)
    trainable = tuple(p for p in ("speaker_encoder", "decoder")
                      if p not in frozen)
    if not trainable:
        raise ConfigError("nothing left to train: decoder cannot be frozen")
    params = bundle.store.subset(trainable)
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    if start_epoch > 0:
        if not out_dir:
            raise ConfigError("resume requires out_dir")
        prev = start_epoch - 1
        bundle.store.load(out_dir / f"epoch{prev:03d}.ckpt")
        opt.load_state(out_dir / f"epoch{prev:03d}.adam")
    metrics = _MetricsLog(out_dir / "metrics.csv" if out_dir else None,
                          resume=start_epoch > 0)

    frozen_snapshot = {name: t.data.copy()
                       for name, t in bundle.store.subset(tuple(frozen))}
    spans = [s.num_frames for s in sessions]
    encoder_frozen = "speaker_encoder" in frozen
    history = []
    step = start_epoch * config.steps_per_epoch
    for epoch in range(start_epoch, config.epochs):
        for _ in range(config.steps_per_epoch):
            picks = make_batch(config.seed, epoch, step, len(sessions), spans,
                               config.batch_size, config.chunk_frames)
            with Tape() as tape:
                losses = []
                for idx, start in picks:
                    si = sessions[idx]
                    stop = min(start + config.chunk_frames, si.num_frames)
                    feats = Tensor(si.feats[start:stop])
                    if encoder_frozen:
                        with no_grad():
                            frame_emb = bundle.speaker_encoder(feats)
                    else:
                        frame_emb = bundle.speaker_encoder(feats)
                    lips = [Tensor(si.lip_embeds[s, start:stop])
                            for s in range(len(si.speakers))]
                    utts = [Tensor(si.utt_embs[s])
                            for s in range(len(si.speakers))]
                    probs = bundle.decoder(lips, frame_emb, utts)
                    losses.append(bce_loss_tensor(probs,
                                                  si.labels[:, start:stop]))
                loss = (losses[0] if len(losses) == 1
                        else tt.mul_const(_sum_tensors(losses),
                                          1.0 / len(losses)))
                grads = tape.backward(loss)
            for name, t in bundle.store.subset(tuple(frozen)):
                g = grads.get(t)
                if g is not None and np.any(g):
                    raise RuntimeError(
                        f"gradient reached frozen parameter {name}")
            opt.step(grads)
            metrics.write(step, float(loss.data), config.lr)
            history.append((step, float(loss.data)))
            step += 1
        for name, t in bundle.store.subset(tuple(frozen)):
            if not np.array_equal(t.data, frozen_snapshot[name]):
                raise RuntimeError(f"frozen parameter {name} changed")
        if out_dir:
            bundle.store.save(out_dir / f"epoch{epoch:03d}.ckpt")
            opt.save_state(out_dir / f"epoch{epoch:03d}.adam")
    return history
