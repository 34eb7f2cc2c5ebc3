"""
Some utilities.
"""

from io import BytesIO
import os
import random
from typing import List, Union, BinaryIO

import numpy as np
import torch
from multiformats import CID, multihash
from typing_extensions import TypeGuard

StreamLike = Union[BinaryIO, bytes]
PathLike = Union[str, "os.PathLike[str]"]

_SHA256 = multihash.get("sha2-256")


def ensure_stream(stream_or_bytes: StreamLike) -> BinaryIO:
    if isinstance(stream_or_bytes, bytes):
        return BytesIO(stream_or_bytes)
    return stream_or_bytes


def is_cid_list(os_: List[object]) -> TypeGuard[List[CID]]:
    return all(isinstance(o, CID) for o in os_)


def content_id(data: bytes) -> CID:
    """
    Raw-codec CIDv1 of some bytes, the way blocks are addressed in an ``ArtifactStore``.
    """
    return CID("base32", 1, "raw", _SHA256.digest(data))


def file_content_id(path: PathLike) -> str:
    with open(path, "rb") as stream:
        return str(content_id(stream.read()))


def seed_everything(seed: int) -> np.random.Generator:
    """
    Seed python, numpy and torch and switch torch to deterministic kernels.

    Returns a fresh numpy generator derived from the same seed, which is what
    data-side code should draw from.
    """
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    return np.random.default_rng(seed)
