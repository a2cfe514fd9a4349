"""Networks: lip encoder, speaker encoders, extractor, activity decoders.

All modules register parameters in one :class:`ParameterStore` under
dotted prefixes (``lip_encoder``, ``speaker_encoder``,
``speaker_extractor``, ``decoder``) so training can freeze or transfer
whole subsystems by prefix.  Module ``__call__`` takes and returns
Tensors so gradients flow when a tape is active; the ``*_forward``
wrappers expose the same computations on plain arrays.

Decoding is per speaker with shared weights: each speaker's stream is
run through the same decoder, which makes the output rows exactly
permutation-equivariant in the (lip stream, utterance embedding) pairs.
A missing lip stream enters as zeros with its validity flag column
(appended to every lip embedding) set to 0.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio
from .dsp import LogMelFeatures
from .errors import ConfigError, DataError
from .nn import ParameterStore, Tensor, no_grad
from .nn import tensor as tt
from .nn.layers import (ConformerBlock, LayerNorm, Linear, MultiHeadAttention,
                        SqueezeExcite, TransformerBlock)

ENCODER_KINDS = ("resnet_se", "ecapa_tdnn")
DECODER_KINDS = ("transformer", "conformer", "cross_attention")

_KIND_KERNEL = {"resnet_se": 3, "ecapa_tdnn": 5}
_KIND_ACT = {"resnet_se": tt.relu, "ecapa_tdnn": tt.swish}


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass
class EncoderConfig:
    """Speaker encoder / extractor architecture parameters."""

    kind: str = "resnet_se"
    channels: tuple[int, ...] = (12, 16)
    se_channels: int = 8
    embed_dim: int = 16
    preset: str = "toy"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.preset == "full":
            if self.kind == "resnet_se":
                if (self.channels != (32, 64, 128, 256)
                        or self.se_channels != 256 or self.embed_dim != 128):
                    raise ConfigError(
                        "full resnet_se preset requires channels "
                        "(32, 64, 128, 256), se 256, embed 128")
            elif any(c != 1024 for c in self.channels):
                raise ConfigError("full ecapa_tdnn preset requires 1024 channels")
        elif self.preset == "toy":
            dims = self.channels + (self.se_channels, self.embed_dim)
            if max(dims) > 32:
                raise ConfigError(f"toy preset dims must be <= 32, got {dims}")
        else:
            raise ConfigError(f"unknown preset {self.preset!r}")

    @classmethod
    def toy(cls, kind: str = "resnet_se") -> "EncoderConfig":
        if kind == "ecapa_tdnn":
            return cls(kind=kind, channels=(16, 16), se_channels=8, embed_dim=16)
        return cls(kind=kind, channels=(12, 16), se_channels=8, embed_dim=16)

    @classmethod
    def full(cls, kind: str = "resnet_se") -> "EncoderConfig":
        if kind == "ecapa_tdnn":
            return cls(kind=kind, channels=(1024, 1024, 1024), se_channels=128,
                       embed_dim=192, preset="full")
        return cls(kind=kind, channels=(32, 64, 128, 256), se_channels=256,
                   embed_dim=128, preset="full")


@dataclass
class LipEncoderConfig:
    """Lip encoder dims and the video-to-acoustic upsampling factor."""

    lip_dim: int = 8
    model_dim: int = 16
    heads: int = 2
    ffn_dim: int = 32
    embed_dim: int = 16
    upsample: int = 4

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        if self.upsample < 1:
            raise ConfigError(f"upsample must be >= 1, got {self.upsample}")


@dataclass
class DecoderConfig:
    """Audio-visual decoder variant and dims."""

    kind: str = "transformer"
    layers: int = 2
    heads: int = 2
    model_dim: int = 16
    ffn_dim: int = 32
    conv_kernel: int = 3
    num_speakers: int = 2

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ConfigError(f"unknown decoder kind {self.kind!r}")
        if self.model_dim % self.heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        if self.num_speakers < 1:
            raise ConfigError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be odd, got {self.conv_kernel}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class SpeakerEmbedding:
    """Unit-norm utterance-level speaker vector."""

    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-9:
            raise DataError(f"embedding norm {norm} not within 1e-9 of 1")

    def cosine(self, other: "SpeakerEmbedding") -> float:
        return float(self.vector @ other.vector)


@dataclass
class FrameEmbeddingSequence:
    values: np.ndarray
    frame_hop_s: float = 0.01


@dataclass
class LipEmbeddingSequence:
    """Lip embeddings aligned to the acoustic frame rate."""

    values: np.ndarray


@dataclass
class ActivityProbabilityMatrix:
    """Per-speaker frame activity probabilities, S x T in [0, 1]."""

    probs: np.ndarray
    frame_hop_s: float = 0.01

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise DataError(f"probs must be 2-D, got shape {self.probs.shape}")
        if self.probs.size and (self.probs.min() < 0 or self.probs.max() > 1):
            raise DataError("probabilities outside [0, 1]")

    def save(self, path) -> None:
        binio.write_framed_matrix(path, binio.PROB_MAGIC, self.probs.T,
                                  self.frame_hop_s, 0.0)

    @classmethod
    def load(cls, path) -> "ActivityProbabilityMatrix":
        values, hop, _ = binio.read_framed_matrix(path, binio.PROB_MAGIC)
        return cls(np.clip(values.T, 0.0, 1.0), frame_hop_s=hop)


# ---------------------------------------------------------------------------
# Encoder stacks
# ---------------------------------------------------------------------------


class ResSEBlock:
    """Separable temporal conv block with squeeze-excitation and residual."""

    def __init__(self, store: ParameterStore, prefix: str, d_in: int, d_out: int,
                 se_channels: int, kernel: int, activation):
        self.proj = Linear(store, f"{prefix}.proj", d_in, d_out)
        self.depthwise = store.add(f"{prefix}.depthwise", (kernel, d_out),
                                   fan_in=kernel, fan_out=kernel)
        self.pw = Linear(store, f"{prefix}.pw", d_out, d_out)
        self.se = SqueezeExcite(store, f"{prefix}.se", d_out, se_channels)
        self.skip = (Linear(store, f"{prefix}.skip", d_in, d_out)
                     if d_in != d_out else None)
        self.ln = LayerNorm(store, f"{prefix}.ln", d_out)
        self.act = activation

    def __call__(self, x: Tensor) -> Tensor:
        h = self.act(self.proj(x))
        h = self.act(tt.depthwise_conv1d(h, self.depthwise))
        h = self.se(self.pw(h))
        s = x if self.skip is None else self.skip(x)
        return self.ln(tt.add(h, s))


class EncoderBody:
    """Stack of ResSEBlocks; preserves the frame rate."""

    def __init__(self, store: ParameterStore, prefix: str, in_dim: int,
                 config: EncoderConfig):
        kernel = _KIND_KERNEL[config.kind]
        act = _KIND_ACT[config.kind]
        self.blocks = []
        d = in_dim
        for i, c in enumerate(config.channels):
            self.blocks.append(ResSEBlock(store, f"{prefix}.block{i}", d, c,
                                          config.se_channels, kernel, act))
            d = c
        self.out_dim = d

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class FrameSpeakerEncoder:
    """Per-frame speaker embeddings at the acoustic rate, no pooling."""

    def __init__(self, store: ParameterStore, prefix: str, n_mels: int,
                 config: EncoderConfig):
        self.config = config
        self.n_mels = n_mels
        self.body = EncoderBody(store, f"{prefix}.body", n_mels, config)
        self.head = Linear(store, f"{prefix}.head", self.body.out_dim,
                           config.embed_dim)

    def __call__(self, feats: Tensor) -> Tensor:
        if feats.shape[0] == 0:
            raise DataError("empty feature sequence")
        return self.head(self.body(feats))


class UtteranceExtractor:
    """One unit-norm embedding per utterance via mean/std pooling."""

    def __init__(self, store: ParameterStore, prefix: str, n_mels: int,
                 config: EncoderConfig):
        self.config = config
        self.n_mels = n_mels
        self.body = EncoderBody(store, f"{prefix}.body", n_mels, config)
        self.head = Linear(store, f"{prefix}.head", 2 * self.body.out_dim,
                           config.embed_dim)

    def __call__(self, feats: Tensor) -> Tensor:
        if feats.shape[0] == 0:
            raise DataError("empty feature sequence")
        return tt.l2_normalize(self.head(tt.mean_std_pool(self.body(feats))))


class LipEncoder:
    """Conv plus self-attention over video frames, upsampled to 100 fps."""

    def __init__(self, store: ParameterStore, prefix: str,
                 config: LipEncoderConfig):
        self.config = config
        self.proj = Linear(store, f"{prefix}.proj", config.lip_dim,
                           config.model_dim)
        self.depthwise = store.add(f"{prefix}.depthwise", (3, config.model_dim),
                                   fan_in=3, fan_out=3)
        self.blocks = [TransformerBlock(store, f"{prefix}.block{i}",
                                        config.model_dim, config.heads,
                                        config.ffn_dim)
                       for i in range(2)]
        self.out = Linear(store, f"{prefix}.out", config.model_dim,
                          config.embed_dim)

    def __call__(self, lip: Tensor) -> Tensor:
        if lip.shape[0] == 0:
            raise DataError("empty lip feature sequence")
        h = tt.relu(tt.depthwise_conv1d(self.proj(lip), self.depthwise))
        for block in self.blocks:
            h = block(h)
        return tt.repeat_frames(self.out(h), self.config.upsample)


# ---------------------------------------------------------------------------
# Decoders
# ---------------------------------------------------------------------------


class BinaryHead:
    """Two-layer per-frame binary classifier, shared across speakers."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int):
        self.fc1 = Linear(store, f"{prefix}.fc1", dim, dim)
        self.fc2 = Linear(store, f"{prefix}.fc2", dim, 1)

    def __call__(self, x: Tensor) -> Tensor:
        return tt.reshape(tt.sigmoid(self.fc2(tt.relu(self.fc1(x)))),
                          (x.shape[0],))


class _DecoderBase:
    """Shared per-speaker decode loop over a speaker-wise core."""

    config: DecoderConfig

    def __call__(self, lip_streams: list[Tensor], frame_emb: Tensor,
                 utt_embs: list[Tensor]) -> Tensor:
        if len(lip_streams) != len(utt_embs):
            raise DataError(
                f"{len(lip_streams)} lip streams vs {len(utt_embs)} "
                "utterance embeddings")
        t = frame_emb.shape[0]
        for lip in lip_streams:
            if lip.shape[0] != t:
                raise DataError(
                    f"lip stream length {lip.shape[0]} != frame count {t}")
        rows = [tt.reshape(self._speaker(lip, frame_emb, utt), (1, t))
                for lip, utt in zip(lip_streams, utt_embs)]
        return tt.concat(rows, axis=0)


class SequenceDecoder(_DecoderBase):
    """Transformer or conformer over concatenated per-frame fusion vectors.

    Per speaker the frame input is concat(lip_t, frame_emb_t, utt_emb),
    the utterance embedding tiled over time.
    """

    def __init__(self, store: ParameterStore, prefix: str, config: DecoderConfig,
                 lip_dim: int, frame_dim: int, utt_dim: int):
        self.config = config
        self.utt_dim = utt_dim
        d = config.model_dim
        self.in_proj = Linear(store, f"{prefix}.in_proj",
                              lip_dim + frame_dim + utt_dim, d)
        if config.kind == "conformer":
            self.blocks = [ConformerBlock(store, f"{prefix}.block{i}", d,
                                          config.heads, config.ffn_dim,
                                          config.conv_kernel)
                           for i in range(config.layers)]
        else:
            self.blocks = [TransformerBlock(store, f"{prefix}.block{i}", d,
                                            config.heads, config.ffn_dim)
                           for i in range(config.layers)]
        self.head = BinaryHead(store, f"{prefix}.head", d)

    def _speaker(self, lip: Tensor, frame_emb: Tensor, utt: Tensor) -> Tensor:
        t = frame_emb.shape[0]
        x = tt.concat([lip, frame_emb, tt.tile_rows(utt, t)], axis=1)
        h = self.in_proj(x)
        for block in self.blocks:
            h = block(h)
        return self.head(h)


class CrossAttentionDecoder(_DecoderBase):
    """Two chained cross-attentions: lip over utterance, then over frames.

    Stage 1 queries the (length-1) utterance embedding from the lip
    stream; with a single key the attention weights are exactly 1, so
    the attended value is a linear map of the utterance embedding and
    lip information survives through the residual.  Stage 2 queries the
    frame-level embedding sequence from the stage-1 output.
    """

    def __init__(self, store: ParameterStore, prefix: str, config: DecoderConfig,
                 lip_dim: int, frame_dim: int, utt_dim: int):
        self.config = config
        d = config.model_dim
        self.lip_proj = Linear(store, f"{prefix}.lip_proj", lip_dim, d)
        self.utt_proj = Linear(store, f"{prefix}.utt_proj", utt_dim, d)
        self.frame_proj = Linear(store, f"{prefix}.frame_proj", frame_dim, d)
        self.mha1 = MultiHeadAttention(store, f"{prefix}.mha1", d, config.heads)
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", d)
        self.mha2 = MultiHeadAttention(store, f"{prefix}.mha2", d, config.heads)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", d)
        self.head = BinaryHead(store, f"{prefix}.head", d)

    def _speaker(self, lip: Tensor, frame_emb: Tensor, utt: Tensor) -> Tensor:
        x = self.lip_proj(lip)
        u = tt.reshape(self.utt_proj(utt), (1, self.config.model_dim))
        x = self.ln1(tt.add(x, self.mha1(x, u, u)))
        m = self.frame_proj(frame_emb)
        x = self.ln2(tt.add(x, self.mha2(x, m, m)))
        return self.head(x)


def build_decoder(store: ParameterStore, prefix: str, config: DecoderConfig,
                  lip_dim: int, frame_dim: int, utt_dim: int) -> _DecoderBase:
    cls = (CrossAttentionDecoder if config.kind == "cross_attention"
           else SequenceDecoder)
    return cls(store, prefix, config, lip_dim, frame_dim, utt_dim)


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------

LIP_PREFIX = "lip_encoder"
ENCODER_PREFIX = "speaker_encoder"
EXTRACTOR_PREFIX = "speaker_extractor"
DECODER_PREFIX = "decoder"


class ModelBundle:
    """All four modules over one parameter store, with config I/O."""

    def __init__(self, seed: int, n_mels: int = 80,
                 encoder_config: EncoderConfig | None = None,
                 extractor_config: EncoderConfig | None = None,
                 lip_config: LipEncoderConfig | None = None,
                 decoder_config: DecoderConfig | None = None):
        self.seed = seed
        self.n_mels = n_mels
        self.encoder_config = encoder_config or EncoderConfig.toy()
        self.extractor_config = extractor_config or EncoderConfig.toy()
        self.lip_config = lip_config or LipEncoderConfig()
        self.decoder_config = decoder_config or DecoderConfig()
        self.store = ParameterStore(seed)
        self.lip_encoder = LipEncoder(self.store, LIP_PREFIX, self.lip_config)
        self.speaker_encoder = FrameSpeakerEncoder(
            self.store, ENCODER_PREFIX, n_mels, self.encoder_config)
        self.speaker_extractor = UtteranceExtractor(
            self.store, EXTRACTOR_PREFIX, n_mels, self.extractor_config)
        self.decoder = build_decoder(
            self.store, DECODER_PREFIX, self.decoder_config,
            lip_dim=self.lip_config.embed_dim + 1,
            frame_dim=self.encoder_config.embed_dim,
            utt_dim=self.extractor_config.embed_dim)

    def save(self, base_path) -> None:
        """Write <base>.ini (configs) and <base>.ckpt (parameters)."""
        base = Path(base_path)
        base.parent.mkdir(parents=True, exist_ok=True)
        cp = configparser.ConfigParser()
        cp["model"] = {"seed": str(self.seed), "n_mels": str(self.n_mels)}
        for section, cfg in (("speaker_encoder", self.encoder_config),
                             ("speaker_extractor", self.extractor_config)):
            cp[section] = {
                "kind": cfg.kind,
                "channels": ",".join(str(c) for c in cfg.channels),
                "se_channels": str(cfg.se_channels),
                "embed_dim": str(cfg.embed_dim),
                "preset": cfg.preset,
            }
        lc = self.lip_config
        cp["lip_encoder"] = {k: str(v) for k, v in (
            ("lip_dim", lc.lip_dim), ("model_dim", lc.model_dim),
            ("heads", lc.heads), ("ffn_dim", lc.ffn_dim),
            ("embed_dim", lc.embed_dim), ("upsample", lc.upsample))}
        dc = self.decoder_config
        cp["decoder"] = {k: str(v) for k, v in (
            ("kind", dc.kind), ("layers", dc.layers), ("heads", dc.heads),
            ("model_dim", dc.model_dim), ("ffn_dim", dc.ffn_dim),
            ("conv_kernel", dc.conv_kernel),
            ("num_speakers", dc.num_speakers))}
        with open(f"{base}.ini", "w", encoding="utf-8") as fh:
            cp.write(fh)
        self.store.save(f"{base}.ckpt")

    @classmethod
    def load(cls, base_path) -> "ModelBundle":
        base = Path(base_path)
        ini = Path(f"{base}.ini")
        ckpt = Path(f"{base}.ckpt")
        if not ini.exists() or not ckpt.exists():
            raise DataError(f"missing model files {ini} / {ckpt}")
        cp = configparser.ConfigParser()
        try:
            cp.read(ini, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"bad model config {ini}: {exc}") from exc
        try:
            def enc(section):
                s = cp[section]
                return EncoderConfig(
                    kind=s["kind"],
                    channels=tuple(int(c) for c in s["channels"].split(",")),
                    se_channels=int(s["se_channels"]),
                    embed_dim=int(s["embed_dim"]),
                    preset=s["preset"])

            lip = cp["lip_encoder"]
            dec = cp["decoder"]
            bundle = cls(
                seed=int(cp["model"]["seed"]),
                n_mels=int(cp["model"]["n_mels"]),
                encoder_config=enc("speaker_encoder"),
                extractor_config=enc("speaker_extractor"),
                lip_config=LipEncoderConfig(
                    lip_dim=int(lip["lip_dim"]),
                    model_dim=int(lip["model_dim"]),
                    heads=int(lip["heads"]),
                    ffn_dim=int(lip["ffn_dim"]),
                    embed_dim=int(lip["embed_dim"]),
                    upsample=int(lip["upsample"])),
                decoder_config=DecoderConfig(
                    kind=dec["kind"],
                    layers=int(dec["layers"]),
                    heads=int(dec["heads"]),
                    model_dim=int(dec["model_dim"]),
                    ffn_dim=int(dec["ffn_dim"]),
                    conv_kernel=int(dec["conv_kernel"]),
                    num_speakers=int(dec["num_speakers"])))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad model config {ini}: {exc}") from exc
        bundle.store.load(ckpt)
        return bundle


# ---------------------------------------------------------------------------
# Array-level wrappers and session preparation
# ---------------------------------------------------------------------------


def lip_encoder_forward(encoder: LipEncoder,
                        lip_features: np.ndarray) -> LipEmbeddingSequence:
    """Encode raw per-speaker lip features to acoustic-rate embeddings."""
    with no_grad():
        out = encoder(Tensor(lip_features))
    return LipEmbeddingSequence(out.data)


def speaker_encoder_frame(encoder: FrameSpeakerEncoder,
                          feats: LogMelFeatures) -> FrameEmbeddingSequence:
    with no_grad():
        out = encoder(Tensor(feats.values))
    return FrameEmbeddingSequence(out.data, frame_hop_s=feats.frame_hop_s)


def speaker_extractor_utterance(extractor: UtteranceExtractor,
                                feats: LogMelFeatures) -> SpeakerEmbedding:
    with no_grad():
        out = extractor(Tensor(feats.values))
    return SpeakerEmbedding(out.data)


def decoder_forward(decoder: _DecoderBase, lip_streams: np.ndarray,
                    frame_emb: np.ndarray, utt_embs: np.ndarray,
                    frame_hop_s: float = 0.01) -> ActivityProbabilityMatrix:
    """Run a decoder on arrays: (S,T,D_l+1), (T,D), (S,D) -> (S,T) probs."""
    with no_grad():
        out = decoder([Tensor(lip) for lip in lip_streams],
                      Tensor(frame_emb),
                      [Tensor(u) for u in utt_embs])
    return ActivityProbabilityMatrix(out.data, frame_hop_s=frame_hop_s)


@dataclass
class SessionInputs:
    """Cached per-session inputs with frozen-module outputs precomputed."""

    session_id: str
    speakers: list[str]
    feats: np.ndarray
    lip_embeds: np.ndarray
    utt_embs: np.ndarray
    frame_hop_s: float
    labels: np.ndarray | None = None

    @property
    def num_frames(self) -> int:
        return self.feats.shape[0]


def prepare_session_inputs(bundle: ModelBundle, feats: LogMelFeatures,
                           lip_features: list[np.ndarray | None],
                           utt_embs: np.ndarray, session_id: str,
                           speakers: list[str],
                           labels: np.ndarray | None = None,
                           video_fps: int = 25) -> SessionInputs:
    """Align streams and run the frozen lip encoder once per speaker.

    ``lip_features`` holds one (T_v, D_v) array per speaker, or None for
    an occluded speaker; occluded streams become zero embeddings.  Every
    lip embedding gets a validity flag column appended.  The session
    length is the minimum of the acoustic and upsampled video lengths.
    """
    acoustic_fps = 1.0 / feats.frame_hop_s
    factor = acoustic_fps / video_fps
    if abs(factor - round(factor)) > 1e-9:
        raise DataError(
            f"acoustic rate {acoustic_fps} not an integer multiple of "
            f"video rate {video_fps}")
    if int(round(factor)) != bundle.lip_config.upsample:
        raise DataError(
            f"rate factor {int(round(factor))} != lip encoder upsample "
            f"{bundle.lip_config.upsample}")
    if len(lip_features) != len(speakers):
        raise DataError(
            f"{len(lip_features)} lip streams for {len(speakers)} speakers")
    utt_embs = np.asarray(utt_embs, dtype=np.float64)
    if utt_embs.shape[0] != len(speakers):
        raise DataError(
            f"{utt_embs.shape[0]} utterance embeddings for "
            f"{len(speakers)} speakers")

    t = feats.num_frames
    for lip in lip_features:
        if lip is not None:
            t = min(t, lip.shape[0] * bundle.lip_config.upsample)
    d_l = bundle.lip_config.embed_dim
    lip_embeds = np.zeros((len(speakers), t, d_l + 1))
    for s, lip in enumerate(lip_features):
        if lip is None:
            continue
        emb = lip_encoder_forward(bundle.lip_encoder, lip).values
        lip_embeds[s, :, :d_l] = emb[:t]
        lip_embeds[s, :, d_l] = 1.0
    return SessionInputs(
        session_id=session_id,
        speakers=list(speakers),
        feats=feats.values[:t],
        lip_embeds=lip_embeds,
        utt_embs=utt_embs,
        frame_hop_s=feats.frame_hop_s,
        labels=None if labels is None else np.asarray(labels)[:, :t],
    )
