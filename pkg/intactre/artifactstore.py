"""
A MutableMapping for zarr hierarchies, backed by content-addressed blocks.

Checkpoints and encoded datasets are written through zarr into an
``ArtifactStore``. Metadata documents are kept inline (decoded) in one
DAG-CBOR root object, array chunks become raw blocks linked from it, and the
whole tree can be shipped as a single-rooted CAR.
"""

from collections.abc import MutableMapping
from dataclasses import dataclass
from io import BufferedIOBase
import json
from typing import Any, Callable, Dict, Iterator, List, Optional, Union, overload

from cbor2 import CBORTag
from multiformats import CID
from numcodecs.compat import ensure_bytes  # type: ignore

from .contentstore import ContentAddressableStore, MappingCAStore
from .utils import StreamLike


@dataclass
class InlineCodec:
    decoder: Callable[[bytes], Any]
    encoder: Callable[[Any], bytes]


def json_dumps_bytes(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


json_inline_codec = InlineCodec(json.loads, json_dumps_bytes)

inline_objects = {
    ".zarray": json_inline_codec,
    ".zgroup": json_inline_codec,
    ".zmetadata": json_inline_codec,
    ".zattrs": json_inline_codec,
}

Tree = Dict[str, Any]


def _as_cid(value: Any) -> CID:
    if isinstance(value, CBORTag):
        value = CID.decode(bytes(value.value[1:])).set(base="base32")
    if not isinstance(value, CID):
        raise KeyError("key does not refer to a stored block")
    return value


def set_recursive(obj: Tree, path: List[str], value: Any) -> None:
    if len(path) == 1:
        obj[path[0]] = value
    else:
        child = obj.setdefault(path[0], {})
        if not isinstance(child, dict):
            raise KeyError(f"'{path[0]}' is a leaf, cannot nest below it")
        set_recursive(child, path[1:], value)


def get_recursive(obj: Tree, path: List[str]) -> Any:
    if len(path) == 1:
        return obj[path[0]]
    child = obj[path[0]]
    if path[0] in inline_objects or not isinstance(child, dict):
        raise KeyError(path[0])
    return get_recursive(child, path[1:])


def del_recursive(obj: Tree, path: List[str]) -> None:
    if len(path) == 1:
        del obj[path[0]]
        return
    child = obj[path[0]]
    if not isinstance(child, dict):
        raise KeyError(path[0])
    del_recursive(child, path[1:])
    if not child:
        del obj[path[0]]


class ArtifactStore(MutableMapping):  # type: ignore [type-arg]
    def __init__(self, castore: Optional[ContentAddressableStore] = None, sep: str = "/"):
        self._mapping: Tree = {}
        self._store = castore or MappingCAStore()
        self.sep = sep
        self.root_cid: Optional[CID] = None

    def __getitem__(self, key: str) -> bytes:
        key_parts = key.split(self.sep)
        value = get_recursive(self._mapping, key_parts)
        try:
            inline_codec = inline_objects[key_parts[-1]]
        except KeyError:
            res = self._store.get(_as_cid(value))
            assert isinstance(res, bytes)
            return res
        return inline_codec.encoder(value)

    def __setitem__(self, key: str, value: bytes) -> None:
        value = ensure_bytes(value)
        key_parts = key.split(self.sep)
        try:
            inline_codec = inline_objects[key_parts[-1]]
        except KeyError:
            set_value: Any = self._store.put(bytes(value))
        else:
            set_value = inline_codec.decoder(bytes(value))
        set_recursive(self._mapping, key_parts, set_value)
        self.root_cid = None

    def __delitem__(self, key: str) -> None:
        del_recursive(self._mapping, key.split(self.sep))
        self.root_cid = None

    def __iter__(self) -> Iterator[str]:
        return self._iter_nested("", self._mapping)

    def __len__(self) -> int:
        return sum(1 for _ in self)

    def _iter_nested(self, prefix: str, mapping: Tree) -> Iterator[str]:
        for key, value in mapping.items():
            if key in inline_objects or not isinstance(value, dict):
                yield prefix + key
            else:
                yield from self._iter_nested(prefix + key + self.sep, value)

    def freeze(self) -> CID:
        """
        Store current version and return the corresponding root cid.
        """
        if self.root_cid is None:
            self.root_cid = self._store.put(self._mapping)
        return self.root_cid

    def clear(self) -> None:
        self.root_cid = None
        self._mapping = {}

    @overload
    def to_car(self, stream: BufferedIOBase) -> int:
        ...

    @overload
    def to_car(self, stream: None = None) -> bytes:
        ...

    def to_car(self, stream: Optional[BufferedIOBase] = None) -> Union[int, bytes]:
        return self._store.to_car(self.freeze(), stream)

    def import_car(self, stream: StreamLike) -> None:
        roots = self._store.import_car(stream)
        if len(roots) != 1:
            raise ValueError(f"CAR must have a single root, the given CAR has {len(roots)} roots!")
        self.set_root(roots[0])

    @classmethod
    def from_car(cls, stream: StreamLike) -> "ArtifactStore":
        instance = cls()
        instance.import_car(stream)
        return instance

    def set_root(self, cid: Union[CID, str]) -> None:
        if isinstance(cid, str):
            cid = CID.decode(cid)
        if cid not in self._store:
            raise KeyError(f"root '{cid}' is not in the store")
        whole_mapping = self._store.get(cid)
        if not isinstance(whole_mapping, dict):
            raise ValueError(f"root '{cid}' is not a mapping")
        self.root_cid = cid
        self._mapping = whole_mapping
