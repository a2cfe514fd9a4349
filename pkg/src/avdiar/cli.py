"""Command-line pipeline: synth, pretrain, train, decode, score, sv-correct, demo.

One executable with a subcommand per pipeline stage plus a self-contained
``demo`` that chains them on a synthetic corpus.  Every option can also be
supplied through an INI config file (one section per subcommand, keys named
like the long flags); explicit command-line flags win.  Unknown config keys
are rejected and referenced paths are checked before any work starts.

Exit codes: 0 success, 1 configuration error, 2 missing or malformed data,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

from .correction import SvConfig, correct_speakers
from .decoding import (DecodeConfig, bundle_predictor, decode_session,
                       median_filter, segments_to_annotation,
                       sliding_window_decode, threshold_to_segments)
from .dsp import read_wav
from .errors import AvdiarError, ConfigError, DataError
from .metrics import DERReport, aggregate_reports, score_der
from .models import (DECODER_KINDS, ENCODER_KINDS, ActivityProbabilityMatrix,
                     DecoderConfig, EncoderConfig, LipEncoderConfig,
                     ModelBundle)
from .rttm import DiarizationAnnotation, parse_rttm_file, write_rttm_file
from .simulate import MeetingSpec, generate_corpus
from .training import (TrainConfig, initialize_from_checkpoints,
                       initialize_from_pretrained, joint_train, load_manifest,
                       load_session_inputs, pretrain_extractor,
                       pretrain_lip_encoder)

# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


@dataclass
class _Opt:
    """One subcommand option: CLI flag, config-file key, and default."""

    name: str
    typ: type
    default: object = None
    required: bool = False
    choices: tuple[str, ...] | None = None
    help: str = ""


_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _coerce(raw: str, opt: _Opt):
    """Convert a config-file string to the option's type."""
    if opt.typ is bool:
        low = raw.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{opt.name}: not a boolean: {raw!r}")
    try:
        value = opt.typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{opt.name}: {exc}") from exc
    if opt.choices and value not in opt.choices:
        raise ConfigError(
            f"{opt.name}: {value!r} not one of {list(opt.choices)}")
    return value


def _add_option(parser: argparse.ArgumentParser, opt: _Opt) -> None:
    flag = "--" + opt.name.replace("_", "-")
    # Defaults stay None here so _resolve can tell flag from file from default.
    if opt.typ is bool:
        parser.add_argument(flag, dest=opt.name, default=None,
                            action=argparse.BooleanOptionalAction,
                            help=opt.help)
    else:
        parser.add_argument(flag, dest=opt.name, type=opt.typ, default=None,
                            choices=opt.choices or None, help=opt.help)


def _read_section(path, section: str, known: set[str]) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    cp = configparser.ConfigParser()
    try:
        cp.read(p, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"bad config file {p}: {exc}") from exc
    if not cp.has_section(section):
        return {}
    values = dict(cp.items(section))
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}] has unknown keys: {', '.join(unknown)}")
    return values


def _resolve(args: argparse.Namespace, section: str,
             opts: list[_Opt]) -> argparse.Namespace:
    """Merge CLI flags over config-file values over defaults."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_section(args.config, section,
                                    {o.name for o in opts})
    merged = argparse.Namespace()
    for opt in opts:
        value = getattr(args, opt.name)
        if value is None and opt.name in file_values:
            value = _coerce(file_values[opt.name], opt)
        if value is None:
            value = opt.default
        if value is None and opt.required:
            flag = "--" + opt.name.replace("_", "-")
            raise ConfigError(f"{section}: {flag} is required")
        setattr(merged, opt.name, value)
    return merged


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise DataError(f"missing path: {p}")


def _model_base(path) -> str:
    """Accept `dir/model`, `dir/model.ini`, or `dir/model.ckpt`."""
    s = str(path)
    for suffix in (".ini", ".ckpt"):
        if s.endswith(suffix):
            return s[:-len(suffix)]
    return s


def _split_records(records, split: str):
    if split != "all":
        records = [r for r in records if r.split == split]
    if not records:
        raise DataError(f"manifest has no sessions in split {split!r}")
    return records


def _parse_frozen(spec: str) -> tuple[str, ...]:
    if spec.strip().lower() in ("", "none"):
        return ()
    return tuple(p.strip() for p in spec.split(",") if p.strip())


def _print_der_table(label: str, rows: list[tuple[str, DERReport]]) -> None:
    print(f"{label:<24} {'FA%':>7} {'MISS%':>8} {'SPKERR%':>8} "
          f"{'DER%':>8} {'scored_s':>10}")
    for name, r in rows:
        print(f"{name:<24} {r.fa_pct:>7.2f} {r.miss_pct:>8.2f} "
              f"{r.spkerr_pct:>8.2f} {r.der_pct:>8.2f} "
              f"{r.scored_speech_s:>10.2f}")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

_SYNTH_OPTS = [
    _Opt("out", str, required=True, help="corpus output directory"),
    _Opt("num_meetings", int, 10),
    _Opt("speakers", int, 2, help="speakers per meeting"),
    _Opt("duration", float, 60.0, help="seconds per meeting"),
    _Opt("overlap", float, 0.2, help="target overlap ratio"),
    _Opt("snr", float, 10.0, help="speech-to-noise ratio in dB"),
    _Opt("sample_rate", int, 16000),
    _Opt("video_fps", int, 25),
    _Opt("lip_dim", int, 8),
    _Opt("train_fraction", float, 0.8),
    _Opt("seed", int, 0),
]


def cmd_synth(ns: argparse.Namespace) -> int:
    template = MeetingSpec(num_speakers=ns.speakers, duration_s=ns.duration,
                           overlap_ratio=ns.overlap, snr_db=ns.snr,
                           sample_rate_hz=ns.sample_rate,
                           video_fps=ns.video_fps, lip_dim=ns.lip_dim)
    manifest = generate_corpus(ns.out, ns.num_meetings, template, ns.seed,
                               ns.train_fraction)
    print(f"wrote {ns.num_meetings} meeting(s) under {ns.out}")
    print(f"manifest: {manifest}")
    return 0


# ---------------------------------------------------------------------------
# pretrain
# ---------------------------------------------------------------------------

_PRETRAIN_OPTS = [
    _Opt("manifest", str, required=True),
    _Opt("out", str, required=True, help="checkpoint output directory"),
    _Opt("split", str, "train", choices=("train", "dev", "all")),
    _Opt("extractor_kind", str, "ecapa_tdnn", choices=ENCODER_KINDS),
    _Opt("steps", int, 200, help="extractor optimizer steps"),
    _Opt("lip_steps", int, 150, help="lip-encoder optimizer steps"),
    _Opt("batch_size", int, 4),
    _Opt("lr", float, 1e-3),
    _Opt("n_mels", int, 24),
    _Opt("lip_dim", int, 8),
    _Opt("chunk_frames", int, 600),
    _Opt("seed", int, 0),
]


def cmd_pretrain(ns: argparse.Namespace) -> int:
    _require(ns.manifest)
    records = _split_records(load_manifest(ns.manifest), ns.split)
    out = Path(ns.out)
    cfg = TrainConfig(lr=ns.lr, epochs=1, steps_per_epoch=ns.steps,
                      batch_size=ns.batch_size, chunk_frames=ns.chunk_frames,
                      seed=ns.seed)
    pretrain_extractor(records, cfg, n_mels=ns.n_mels,
                       encoder_config=EncoderConfig.toy(ns.extractor_kind),
                       out_dir=out)
    print(f"extractor checkpoint: {out / 'extractor.ckpt'}")
    pretrain_lip_encoder(records, replace(cfg, steps_per_epoch=ns.lip_steps),
                         LipEncoderConfig(lip_dim=ns.lip_dim), out_dir=out)
    print(f"lip encoder checkpoint: {out / 'lip_encoder.ckpt'}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_OPTS = [
    _Opt("manifest", str, required=True),
    _Opt("out", str, required=True, help="model output directory"),
    _Opt("split", str, "train", choices=("train", "dev", "all")),
    _Opt("decoder", str, "transformer", choices=DECODER_KINDS),
    _Opt("encoder", str, "resnet_se", choices=ENCODER_KINDS),
    _Opt("extractor_kind", str, "ecapa_tdnn", choices=ENCODER_KINDS),
    _Opt("extractor_ckpt", str, help="pretrained extractor checkpoint"),
    _Opt("lip_ckpt", str, help="pretrained lip-encoder checkpoint"),
    _Opt("epochs", int, 1),
    _Opt("steps", int, 300, help="steps per epoch"),
    _Opt("batch_size", int, 2),
    _Opt("chunk_frames", int, 600),
    _Opt("lr", float, 1e-3),
    _Opt("n_mels", int, 24),
    _Opt("lip_dim", int, 8),
    _Opt("num_speakers", int, help="default: widest session in the manifest"),
    _Opt("frozen", str, "lip_encoder,speaker_extractor",
         help='comma-separated module list, or "none"'),
    _Opt("enroll_k", int, 3),
    _Opt("start_epoch", int, 0, help="resume after this many finished epochs"),
    _Opt("seed", int, 0),
]


def cmd_train(ns: argparse.Namespace) -> int:
    _require(ns.manifest, ns.extractor_ckpt, ns.lip_ckpt)
    records = _split_records(load_manifest(ns.manifest), ns.split)
    num_speakers = ns.num_speakers or max(len(r.speakers) for r in records)
    cfg = TrainConfig(lr=ns.lr, epochs=ns.epochs, steps_per_epoch=ns.steps,
                      batch_size=ns.batch_size, chunk_frames=ns.chunk_frames,
                      seed=ns.seed, frozen_modules=_parse_frozen(ns.frozen))
    bundle = ModelBundle(
        seed=ns.seed, n_mels=ns.n_mels,
        encoder_config=EncoderConfig.toy(ns.encoder),
        extractor_config=EncoderConfig.toy(ns.extractor_kind),
        lip_config=LipEncoderConfig(lip_dim=ns.lip_dim),
        decoder_config=DecoderConfig(kind=ns.decoder,
                                     num_speakers=num_speakers))
    copied = initialize_from_checkpoints(bundle, ns.extractor_ckpt,
                                         ns.lip_ckpt)
    if ns.extractor_ckpt or ns.lip_ckpt:
        print(f"transferred {len(copied)} pretrained parameter(s)")
    sessions = [load_session_inputs(bundle, r, enrollment_k=ns.enroll_k)
                for r in records]
    out = Path(ns.out)
    history = joint_train(bundle, sessions, cfg, out_dir=out,
                          start_epoch=ns.start_epoch)
    bundle.save(out / "model")
    if history:
        step, loss = history[-1]
        print(f"final loss {loss:.4f} at step {step}")
    print(f"model: {out / 'model'}.ini / .ckpt")
    return 0


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

_DECODE_OPTS = [
    _Opt("manifest", str, required=True),
    _Opt("model", str, required=True, help="model base path (or .ini/.ckpt)"),
    _Opt("out", str, required=True, help="RTTM output directory"),
    _Opt("split", str, "dev", choices=("train", "dev", "all")),
    _Opt("decoder", str, choices=DECODER_KINDS,
         help="assert the model's decoder variant"),
    _Opt("chunk", int, 600, help="window length in frames"),
    _Opt("shift", int, 100, help="window shift in frames"),
    _Opt("median", int, 11, help="median filter kernel (1 disables)"),
    _Opt("threshold", float, 0.5),
    _Opt("min_segment", float, 0.2, help="drop segments shorter than this"),
    _Opt("min_gap", float, 0.1, help="merge gaps shorter than this"),
    _Opt("enroll_k", int, 3),
    _Opt("dump_probs", bool, False, help="also write .prob matrices"),
    _Opt("jobs", int, 1, help="parallel sessions"),
]


def cmd_decode(ns: argparse.Namespace) -> int:
    base = _model_base(ns.model)
    _require(ns.manifest, f"{base}.ini", f"{base}.ckpt")
    cfg = DecodeConfig(chunk_frames=ns.chunk, shift_frames=ns.shift,
                       median_kernel=ns.median, threshold=ns.threshold,
                       min_segment_s=ns.min_segment, min_gap_s=ns.min_gap)
    bundle = ModelBundle.load(base)
    if ns.decoder and ns.decoder != bundle.decoder_config.kind:
        raise ConfigError(f"model decoder is {bundle.decoder_config.kind!r}, "
                          f"not {ns.decoder!r}")
    records = _split_records(load_manifest(ns.manifest), ns.split)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)

    def decode_one(rec):
        inputs = load_session_inputs(bundle, rec, with_labels=False,
                                     enrollment_k=ns.enroll_k)
        ann, probs = decode_session(bundle, inputs, cfg)
        write_rttm_file(out / f"{rec.session_id}.rttm", ann)
        if ns.dump_probs:
            probs.save(out / f"{rec.session_id}.prob")
        return ann

    if ns.jobs > 1:
        with ThreadPoolExecutor(max_workers=ns.jobs) as pool:
            annotations = list(pool.map(decode_one, records))
    else:
        annotations = [decode_one(r) for r in records]
    write_rttm_file(out / "all.rttm", annotations)
    for rec in records:
        print(f"decoded {rec.session_id} -> {out / (rec.session_id + '.rttm')}")
    print(f"combined: {out / 'all.rttm'}")
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

_SCORE_OPTS = [
    _Opt("ref", str, required=True, help="reference RTTM"),
    _Opt("hyp", str, required=True, help="hypothesis RTTM"),
    _Opt("collar", float, 0.0, help="no-score zone around boundaries (s)"),
    _Opt("mapping", str, "optimal", choices=("identity", "optimal")),
    _Opt("resolution", float, 0.001, help="scoring grid (s)"),
    _Opt("json", str, help="write the JSON report to this path"),
]


def cmd_score(ns: argparse.Namespace) -> int:
    _require(ns.ref, ns.hyp)
    refs = parse_rttm_file(ns.ref)
    hyps = parse_rttm_file(ns.hyp)
    if not refs:
        raise DataError(f"no sessions in {ns.ref}")
    extra = sorted(set(hyps) - set(refs))
    if extra:
        print("warning: hypothesis-only sessions ignored: "
              + ", ".join(extra), file=sys.stderr)
    reports = {}
    for sid in sorted(refs):
        hyp = hyps.get(sid, DiarizationAnnotation(sid, []))
        reports[sid] = score_der(refs[sid], hyp, collar_s=ns.collar,
                                 mapping=ns.mapping,
                                 resolution_s=ns.resolution)
    total = aggregate_reports(list(reports.values()))
    rows = [(sid, reports[sid]) for sid in sorted(reports)]
    _print_der_table("session", rows + [("TOTAL", total)])
    payload = {
        "collar_s": ns.collar,
        "mapping": ns.mapping,
        "sessions": {sid: r.as_dict() for sid, r in reports.items()},
        "total": total.as_dict(),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if ns.json:
        Path(ns.json).write_text(text + "\n", encoding="utf-8")
        print(f"json report: {ns.json}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# sv-correct
# ---------------------------------------------------------------------------

_SV_OPTS = [
    _Opt("rttm", str, required=True, help="input RTTM to correct"),
    _Opt("audio", str, required=True,
         help="wav file, or directory of <session>.wav"),
    _Opt("model", str, required=True, help="model base path (or .ini/.ckpt)"),
    _Opt("out", str, required=True, help="corrected RTTM path"),
    _Opt("margin", float, 0.1, help="cosine margin before relabeling"),
    _Opt("min_segment", float, 0.5, help="shortest segment to verify"),
    _Opt("enroll_k", int, 3),
]


def cmd_sv_correct(ns: argparse.Namespace) -> int:
    base = _model_base(ns.model)
    _require(ns.rttm, ns.audio, f"{base}.ini", f"{base}.ckpt")
    cfg = SvConfig(min_segment_s=ns.min_segment, reassign_margin=ns.margin,
                   enrollment_k=ns.enroll_k)
    bundle = ModelBundle.load(base)
    annotations = parse_rttm_file(ns.rttm)
    if not annotations:
        raise DataError(f"no sessions in {ns.rttm}")
    audio_path = Path(ns.audio)
    wavs = {sid: audio_path / f"{sid}.wav" if audio_path.is_dir()
            else audio_path for sid in annotations}
    _require(*wavs.values())
    corrected = [correct_speakers(annotations[sid], read_wav(wavs[sid]),
                                  bundle.speaker_extractor, cfg)
                 for sid in sorted(annotations)]
    out = Path(ns.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_rttm_file(out, corrected)
    print(f"corrected {len(corrected)} session(s) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

# Desk-scale profile: small enough to finish in minutes on a laptop core,
# large enough that training visibly beats an untrained model and noisy
# enough that the post-processing rows have work to do.
_DEMO_PROFILE = {
    "num_meetings": 10,
    "speakers": 2,
    "duration_s": 60.0,
    "overlap_ratio": 0.2,
    "snr_db": 3.0,
    "n_mels": 24,
    "lip_dim": 8,
    "extractor_steps": 250,
    "lip_steps": 150,
    "joint_steps": 200,
    "batch_size": 2,
    "chunk_frames": 600,
    "lr": 1e-3,
}

_DEMO_OPTS = [
    _Opt("out", str, required=True, help="working directory for all artifacts"),
    _Opt("seed", int, 0),
    _Opt("decoder", str, "transformer", choices=DECODER_KINDS),
    _Opt("jobs", int, 1, help="parallel sessions during decode"),
]


@contextmanager
def _stage(name: str):
    """Prefix any stage failure with the stage name."""
    print(f"[demo] {name}", flush=True)
    try:
        yield
    except AvdiarError as exc:
        raise type(exc)(f"stage {name!r} failed: {exc}") from exc
    except Exception as exc:
        raise RuntimeError(f"stage {name!r} failed: {exc}") from exc


def _demo_bundle(seed: int, decoder_kind: str, num_speakers: int
                 ) -> ModelBundle:
    prof = _DEMO_PROFILE
    return ModelBundle(
        seed=seed, n_mels=prof["n_mels"],
        encoder_config=EncoderConfig.toy("resnet_se"),
        extractor_config=EncoderConfig.toy("resnet_se"),
        lip_config=LipEncoderConfig(lip_dim=prof["lip_dim"]),
        decoder_config=DecoderConfig(kind=decoder_kind,
                                     num_speakers=num_speakers))


def _session_probs(bundle, inputs_list, jobs: int
                   ) -> list[tuple[object, object]]:
    """Per session: raw probability matrices at shift=chunk and shift=100."""
    prof = _DEMO_PROFILE
    wide = DecodeConfig(chunk_frames=prof["chunk_frames"],
                        shift_frames=prof["chunk_frames"], median_kernel=1)
    narrow = DecodeConfig(chunk_frames=prof["chunk_frames"],
                          shift_frames=100, median_kernel=1)

    def run(si):
        predict = bundle_predictor(bundle, si)
        return (sliding_window_decode(predict, si.num_frames, wide),
                sliding_window_decode(predict, si.num_frames, narrow))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, inputs_list))
    return [run(si) for si in inputs_list]


def _segment_and_score(raw_list, inputs_list, refs, audios=None,
                       extractor=None) -> DERReport:
    """Threshold raw matrices, optionally SV-correct, and score (identity)."""
    seg_cfg = DecodeConfig()
    reports = []
    for raw, si in zip(raw_list, inputs_list):
        probs = ActivityProbabilityMatrix(raw, frame_hop_s=si.frame_hop_s)
        segments = threshold_to_segments(probs, seg_cfg, si.speakers)
        ann = segments_to_annotation(segments, si.session_id)
        if extractor is not None:
            ann = correct_speakers(ann, audios[si.session_id], extractor,
                                   SvConfig())
        reports.append(score_der(refs[si.session_id], ann,
                                 mapping="identity"))
    return aggregate_reports(reports)


def cmd_demo(ns: argparse.Namespace) -> int:
    t0 = time.monotonic()
    prof = _DEMO_PROFILE
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("synthesize corpus"):
        template = MeetingSpec(num_speakers=prof["speakers"],
                               duration_s=prof["duration_s"],
                               overlap_ratio=prof["overlap_ratio"],
                               snr_db=prof["snr_db"],
                               lip_dim=prof["lip_dim"])
        manifest = generate_corpus(out / "corpus", prof["num_meetings"],
                                   template, ns.seed)
        records = load_manifest(manifest)
        train_recs = [r for r in records if r.split == "train"]
        dev_recs = [r for r in records if r.split == "dev"]

    with _stage("pretrain extractor and lip encoder"):
        cfg = TrainConfig(lr=prof["lr"],
                          steps_per_epoch=prof["extractor_steps"],
                          batch_size=4, chunk_frames=prof["chunk_frames"],
                          seed=ns.seed)
        extractor_store = pretrain_extractor(
            train_recs, cfg, n_mels=prof["n_mels"],
            encoder_config=EncoderConfig.toy("resnet_se"),
            out_dir=out / "pretrain")
        lip_store = pretrain_lip_encoder(
            train_recs, replace(cfg, steps_per_epoch=prof["lip_steps"]),
            LipEncoderConfig(lip_dim=prof["lip_dim"]),
            out_dir=out / "pretrain")

    num_speakers = max(len(r.speakers) for r in records)
    with _stage("joint training"):
        bundle = _demo_bundle(ns.seed, ns.decoder, num_speakers)
        initialize_from_pretrained(bundle, extractor_store, lip_store)
        sessions = [load_session_inputs(bundle, r) for r in train_recs]
        tcfg = TrainConfig(lr=prof["lr"], epochs=1,
                           steps_per_epoch=prof["joint_steps"],
                           batch_size=prof["batch_size"],
                           chunk_frames=prof["chunk_frames"], seed=ns.seed)
        joint_train(bundle, sessions, tcfg, out_dir=out / "model")
        bundle.save(out / "model" / "model")

    with _stage("decode and score ablation"):
        refs = {r.session_id: parse_rttm_file(r.rttm)[r.session_id]
                for r in dev_recs}
        audios = {r.session_id: read_wav(r.audio) for r in dev_recs}
        dev_inputs = [load_session_inputs(bundle, r, with_labels=False)
                      for r in dev_recs]
        pairs = _session_probs(bundle, dev_inputs, ns.jobs)
        wide_raw = [p[0] for p in pairs]
        narrow_raw = [p[1] for p in pairs]
        smoothed = [median_filter(r, 11) for r in narrow_raw]
        rows = [
            ("base", _segment_and_score(wide_raw, dev_inputs, refs)),
            ("+ shift 100", _segment_and_score(narrow_raw, dev_inputs, refs)),
            ("+ median filter", _segment_and_score(smoothed, dev_inputs,
                                                   refs)),
            ("+ secondary sv", _segment_and_score(
                smoothed, dev_inputs, refs, audios=audios,
                extractor=bundle.speaker_extractor)),
        ]

    with _stage("untrained reference"):
        fresh = _demo_bundle(ns.seed, ns.decoder, num_speakers)
        fresh_inputs = [load_session_inputs(fresh, r, with_labels=False)
                        for r in dev_recs]
        fresh_pairs = _session_probs(fresh, fresh_inputs, ns.jobs)
        fresh_smoothed = [median_filter(p[1], 11) for p in fresh_pairs]
        untrained = _segment_and_score(fresh_smoothed, fresh_inputs, refs)

    print()
    _print_der_table("system", rows + [("untrained reference", untrained)])
    report = {
        "seed": ns.seed,
        "decoder": ns.decoder,
        "profile": prof,
        "rows": [{"system": name, **rep.as_dict()} for name, rep in rows],
        "untrained": untrained.as_dict(),
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    print(f"\nreport: {report_path}")
    print(f"runtime: {time.monotonic() - t0:.1f}s")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

_COMMANDS = [
    ("synth", "generate a synthetic meeting corpus", _SYNTH_OPTS, cmd_synth),
    ("pretrain", "pretrain the utterance extractor and lip encoder",
     _PRETRAIN_OPTS, cmd_pretrain),
    ("train", "jointly train speaker encoder and decoder", _TRAIN_OPTS,
     cmd_train),
    ("decode", "emit per-session hypothesis RTTM files", _DECODE_OPTS,
     cmd_decode),
    ("score", "score hypothesis RTTM against a reference", _SCORE_OPTS,
     cmd_score),
    ("sv-correct", "relabel single-speaker segments by verification",
     _SV_OPTS, cmd_sv_correct),
    ("demo", "end-to-end pipeline on a synthetic corpus", _DEMO_OPTS,
     cmd_demo),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avdiar",
        description="Audio-visual speaker diarization pipeline.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    for name, help_text, opts, handler in _COMMANDS:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None,
                       help=f"INI file; section [{name}] supplies defaults")
        for opt in opts:
            _add_option(p, opt)
        p.set_defaults(_section=name, _opts=opts, _handler=handler)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; fold that into the config code.
        return 0 if not exc.code else 1
    try:
        ns = _resolve(args, args._section, args._opts)
        return args._handler(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
