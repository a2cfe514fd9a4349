"""Shared fixtures: a tiny synthetic corpus and a toy model bundle."""

import pytest

from avdiar.models import DecoderConfig, EncoderConfig, ModelBundle
from avdiar.simulate import MeetingSpec, generate_corpus
from avdiar.training import load_manifest


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Four 15-second two-speaker meetings: 3 train + 1 dev."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    template = MeetingSpec(num_speakers=2, duration_s=15.0,
                           overlap_ratio=0.2, snr_db=10.0)
    manifest = generate_corpus(root, 4, template, seed=11)
    return manifest


@pytest.fixture(scope="session")
def tiny_records(tiny_corpus):
    return load_manifest(tiny_corpus)


@pytest.fixture()
def toy_bundle():
    return ModelBundle(
        seed=3, n_mels=24,
        encoder_config=EncoderConfig.toy("resnet_se"),
        extractor_config=EncoderConfig.toy("resnet_se"),
        decoder_config=DecoderConfig(kind="transformer", num_speakers=2))
