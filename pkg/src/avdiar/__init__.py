"""Audio-visual speaker diarization at desk scale.

Synthetic meetings in, RTTM out: feature extraction, per-speaker
activity decoding with visual cues, post-processing, and DER scoring.
"""

__version__ = "0.1.0"

from .correction import SvConfig, correct_speakers, enrollment_embeddings
from .decoding import DecodeConfig, decode_session, median_filter
from .dsp import AudioSignal, LogMelFeatures, log_mel, read_wav, write_wav
from .errors import AvdiarError, ConfigError, DataError
from .estimators import AudioVisualDiarizer, LogMelExtractor
from .metrics import (DERReport, aggregate_reports, der_from_components,
                      score_der)
from .models import (ActivityProbabilityMatrix, DecoderConfig, EncoderConfig,
                     LipEncoderConfig, ModelBundle)
from .rttm import (DiarizationAnnotation, Turn, parse_rttm, parse_rttm_file,
                   write_rttm, write_rttm_file)
from .simulate import MeetingSpec, generate_corpus, generate_meeting
from .training import TrainConfig, joint_train, load_manifest

__all__ = [
    "ActivityProbabilityMatrix",
    "AudioSignal",
    "AudioVisualDiarizer",
    "AvdiarError",
    "ConfigError",
    "DERReport",
    "DataError",
    "DecodeConfig",
    "DecoderConfig",
    "DiarizationAnnotation",
    "EncoderConfig",
    "LipEncoderConfig",
    "LogMelExtractor",
    "LogMelFeatures",
    "MeetingSpec",
    "ModelBundle",
    "SvConfig",
    "TrainConfig",
    "Turn",
    "__version__",
    "aggregate_reports",
    "correct_speakers",
    "decode_session",
    "der_from_components",
    "enrollment_embeddings",
    "generate_corpus",
    "generate_meeting",
    "joint_train",
    "load_manifest",
    "log_mel",
    "median_filter",
    "parse_rttm",
    "parse_rttm_file",
    "read_wav",
    "score_der",
    "write_rttm",
    "write_rttm_file",
    "write_wav",
]
