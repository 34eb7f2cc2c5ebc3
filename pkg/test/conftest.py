import json

import pytest
import torch

from intactre.data import CorpusPaths


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def double_precision():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


RELATIONS = ["NA", "/people/person/place_of_birth", "/location/location/contains"]

TRAIN_SENTENCES = [
    {"head": "m.obama", "tail": "m.honolulu", "relation": "/people/person/place_of_birth",
     "tokens": ["barack", "obama", "was", "born", "in", "honolulu", "."], "head_pos": 1, "tail_pos": 5},
    {"head": "m.obama", "tail": "m.honolulu", "relation": "/people/person/place_of_birth",
     "tokens": ["obama", "returned", "to", "honolulu", "."], "head_pos": 0, "tail_pos": 3},
    {"head": "m.hawaii", "tail": "m.honolulu", "relation": "/location/location/contains",
     "tokens": ["hawaii", "'s", "capital", "honolulu", "is", "on", "oahu", "."], "head_pos": 0, "tail_pos": 3},
    {"head": "m.obama", "tail": "m.hawaii", "relation": "NA",
     "tokens": ["obama", "visited", "hawaii", "."], "head_pos": 0, "tail_pos": 2},
    {"head": "m.hawaii", "tail": "m.oahu", "relation": "/location/location/contains",
     "tokens": ["oahu", "is", "an", "island", "of", "hawaii", "."], "head_pos": 5, "tail_pos": 0},
]

TEST_SENTENCES = [
    {"head": "m.obama", "tail": "m.honolulu", "relation": "/people/person/place_of_birth",
     "tokens": ["obama", "grew", "up", "in", "honolulu"], "head_pos": 0, "tail_pos": 4},
    {"head": "m.obama", "tail": "m.honolulu", "relation": "NA",
     "tokens": ["obama", "spoke", "in", "honolulu", "today"], "head_pos": 0, "tail_pos": 3},
    {"head": "m.hawaii", "tail": "m.maui", "relation": "/location/location/contains",
     "tokens": ["maui", "lies", "in", "hawaii"], "head_pos": 3, "tail_pos": 0},
]

DESCRIPTIONS = [
    {"entity": "m.obama", "tokens": ["barack", "obama", "is", "an", "american", "politician"]},
    {"entity": "m.honolulu", "tokens": ["honolulu", "is", "the", "capital", "of", "hawaii"]},
]

TYPES = [
    {"entity": "m.obama", "types": ["/people/person", "/government/politician"]},
    {"entity": "m.honolulu", "types": ["/location/location", "/location/citytown"]},
    {"entity": "m.hawaii", "types": ["/location/location"]},
]


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def corpus_dir(tmp_path):
    directory = tmp_path / "corpus"
    directory.mkdir()
    (directory / "relations.txt").write_text("\n".join(RELATIONS) + "\n", encoding="utf-8")
    write_jsonl(directory / "train.jsonl", TRAIN_SENTENCES)
    write_jsonl(directory / "test.jsonl", TEST_SENTENCES)
    write_jsonl(directory / "descriptions.jsonl", DESCRIPTIONS)
    write_jsonl(directory / "types.jsonl", TYPES)
    return directory


@pytest.fixture
def train_paths(corpus_dir):
    return CorpusPaths(corpus_dir / "train.jsonl", corpus_dir / "relations.txt",
                       corpus_dir / "descriptions.jsonl", corpus_dir / "types.jsonl")


@pytest.fixture
def heldout_paths(corpus_dir):
    return CorpusPaths(corpus_dir / "test.jsonl", corpus_dir / "relations.txt",
                       corpus_dir / "descriptions.jsonl", corpus_dir / "types.jsonl")
