import json
from pathlib import Path

import pytest

from engine.semiring import SEMIRINGS

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def load_corpus(name: str):
    return json.loads((CORPUS / name).read_text())


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(params=list(SEMIRINGS))
def semiring(request):
    return SEMIRINGS[request.param]
