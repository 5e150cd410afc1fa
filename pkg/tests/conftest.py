import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def retrieval_dir() -> Path:
    return FIXTURES / "retrieval"


@pytest.fixture(scope="session")
def retrieval_corpus(retrieval_dir):
    from promptbank.corpus import load_captions
    return load_captions(retrieval_dir / "captions.jsonl")


@pytest.fixture(scope="session")
def clip_np(retrieval_dir):
    from promptbank.corpus import load_embedding_bank
    return load_embedding_bank(retrieval_dir / "clip_np.mgpb", retrieval_dir / "clip_np.keys")


@pytest.fixture(scope="session")
def clip_sg(retrieval_dir):
    from promptbank.corpus import load_embedding_bank
    return load_embedding_bank(retrieval_dir / "clip_sg.mgpb", retrieval_dir / "clip_sg.keys")


@pytest.fixture(scope="session")
def clip_ec(retrieval_dir):
    from promptbank.corpus import load_embedding_bank
    return load_embedding_bank(retrieval_dir / "clip_ec.mgpb", retrieval_dir / "clip_ec.keys")


@pytest.fixture(scope="session")
def bge_bank(retrieval_dir):
    from promptbank.corpus import load_embedding_bank
    return load_embedding_bank(retrieval_dir / "bge.mgpb", retrieval_dir / "bge.keys")


@pytest.fixture(scope="session")
def video_store(retrieval_dir):
    from promptbank.corpus import load_video_features
    return load_video_features(retrieval_dir / "video_feats.mgpv")
