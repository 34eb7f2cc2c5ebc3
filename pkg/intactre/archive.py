"""
Named-array archives: zarr groups inside an ``ArtifactStore``, persisted as CAR files.

Both parameter checkpoints and encoded datasets go through here, so there is
one on-disk format for every tensor the project writes.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np
import numcodecs
import zarr

from .artifactstore import ArtifactStore
from .utils import PathLike

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

Arrays = Dict[str, np.ndarray]
Attrs = Dict[str, Any]


def write_groups(path: PathLike, groups: Mapping[str, Tuple[Mapping[str, np.ndarray], Mapping[str, Any]]],
                 attrs: Mapping[str, Any], compress: bool = False) -> str:
    """
    Write ``{group: (arrays, attrs)}`` plus root ``attrs`` to a CAR file.

    Floating point arrays are always written uncompressed, integer arrays are
    zlib-compressed when ``compress`` is set; both round-trip bit-exactly.
    Returns the root CID as string.
    """
    store = ArtifactStore()
    root = zarr.group(store=store)
    root.attrs.update({"format_version": FORMAT_VERSION, **attrs})
    for group_name, (arrays, group_attrs) in groups.items():
        group = root.require_group(group_name) if group_name else root
        group.attrs.update(dict(group_attrs))
        for name, array in arrays.items():
            array = np.ascontiguousarray(array)
            compressor = numcodecs.Zlib(level=5) if compress and array.dtype.kind in "iub" else None
            # zarr needs at least one element per chunk dimension
            chunks = tuple(max(1, s) for s in array.shape) or True
            group.array(name, array, chunks=chunks, compressor=compressor)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "wb") as stream:
        size = store.to_car(stream)
    cid = str(store.freeze())
    logger.debug("wrote %s (%d bytes, root %s)", target, size, cid)
    return cid


def _open(path: PathLike) -> "zarr.hierarchy.Group":
    with open(path, "rb") as stream:
        store = ArtifactStore.from_car(stream)
    root = zarr.open_group(store=store, mode="r")
    version = root.attrs.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported archive format version {version!r} (expected {FORMAT_VERSION})")
    return root


def read_attrs(path: PathLike) -> Attrs:
    return dict(_open(path).attrs)


def read_groups(path: PathLike) -> Tuple[Dict[str, Tuple[Arrays, Attrs]], Attrs]:
    """
    Inverse of :func:`write_groups`. Arrays of the root group are returned under ``""``.
    """
    root = _open(path)
    attrs = dict(root.attrs)

    def load(group: "zarr.hierarchy.Group") -> Tuple[Arrays, Attrs]:
        return {name: array[...] for name, array in group.arrays()}, dict(group.attrs)

    groups = {name: load(group) for name, group in root.groups()}
    groups[""] = load(root)
    return groups, attrs
