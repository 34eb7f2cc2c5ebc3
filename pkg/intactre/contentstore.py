"""
Content-addressed block storage backing artifact archives.
"""

from abc import ABC, abstractmethod
from io import BufferedIOBase, BytesIO
from typing import Dict, Iterator, List, MutableMapping, Optional, Set, Union, overload

import cbor2
from multiformats import CID, multicodec, multibase, multihash
from typing_validation import validate

from .car import read_car, write_car
from .utils import StreamLike

RawCodec = multicodec.get("raw")
DagCborCodec = multicodec.get("dag-cbor")

# tag 42 is the DAG-CBOR link tag, its payload is the binary CID behind a 0x00 prefix
CID_TAG = 42


def default_encoder(encoder: cbor2.CBOREncoder, value: object) -> None:
    if not isinstance(value, CID):
        raise TypeError(f"cannot encode {type(value).__name__} into an artifact")
    encoder.encode(cbor2.CBORTag(CID_TAG, b"\x00" + bytes(value)))


def tag_hook(decoder: cbor2.CBORDecoder, tag: cbor2.CBORTag) -> object:
    if tag.tag == CID_TAG:
        return CID.decode(bytes(tag.value[1:])).set(base="base32")
    return tag


def decode_object(raw: bytes) -> object:
    return cbor2.loads(raw, tag_hook=tag_hook)


def encode_object(value: object) -> bytes:
    return cbor2.dumps(value, default=default_encoder, canonical=True)


ValueType = Union[bytes, Dict[str, object], List[object]]


class ContentAddressableStore(ABC):
    @abstractmethod
    def get_raw(self, cid: CID) -> bytes:
        ...

    @abstractmethod
    def put_raw(self, raw_value: bytes, codec: Union[str, int, multicodec.Multicodec]) -> CID:
        ...

    def get(self, cid: CID) -> object:
        value = self.get_raw(cid)
        if cid.codec == RawCodec:
            return value
        if cid.codec == DagCborCodec:
            return decode_object(value)
        raise ValueError(f"can't decode CID's codec '{cid.codec.name}'")

    def __contains__(self, cid: object) -> bool:
        if not isinstance(cid, CID):
            return False
        try:
            self.get_raw(cid)
        except KeyError:
            return False
        return True

    def put(self, value: ValueType) -> CID:
        if isinstance(value, bytes):
            return self.put_raw(value, RawCodec)
        return self.put_raw(encode_object(value), DagCborCodec)

    def normalize_cid(self, cid: CID) -> CID:  # pylint: disable=no-self-use
        return cid

    def reachable(self, root: CID) -> List[CID]:
        """
        All CIDs reachable from ``root`` (root first), each listed once.
        """
        seen: Set[CID] = set()
        order: List[CID] = []
        pending = [root]
        while pending:
            cid = self.normalize_cid(pending.pop())
            if cid in seen:
                continue
            seen.add(cid)
            order.append(cid)
            if cid.codec == DagCborCodec:
                pending.extend(reversed(list(iter_links(self.get(cid)))))
        return order

    @overload
    def to_car(self, root: CID, stream: BufferedIOBase) -> int:
        ...

    @overload
    def to_car(self, root: CID, stream: None = None) -> bytes:
        ...

    def to_car(self, root: CID, stream: Optional[BufferedIOBase] = None) -> Union[int, bytes]:
        blocks = ((cid, self.get_raw(cid)) for cid in self.reachable(root))
        if stream is None:
            buffer = BytesIO()
            write_car([root], blocks, buffer)
            return buffer.getvalue()
        return write_car([root], blocks, stream)  # type: ignore [arg-type]

    def import_car(self, stream_or_bytes: StreamLike) -> List[CID]:
        roots, blocks = read_car(stream_or_bytes)
        for cid, data in blocks:
            stored = self.put_raw(data, cid.codec)
            if stored.digest != cid.digest:
                raise ValueError(f"block '{cid}' changed its address on import")
        return roots


class MappingCAStore(ContentAddressableStore):
    def __init__(self,
                 mapping: Optional[MutableMapping[str, bytes]] = None,
                 default_hash: Union[str, int, multicodec.Multicodec, multihash.Multihash] = "sha2-256",
                 default_base: Union[str, multibase.Multibase] = "base32",
                 ):
        validate(mapping, Optional[MutableMapping[str, bytes]])
        validate(default_hash, Union[str, int, multicodec.Multicodec, multihash.Multihash])
        validate(default_base, Union[str, multibase.Multibase])

        self._mapping: MutableMapping[str, bytes] = mapping if mapping is not None else {}

        if isinstance(default_hash, multihash.Multihash):
            self._default_hash = default_hash
        else:
            self._default_hash = multihash.Multihash(codec=default_hash)

        if isinstance(default_base, multibase.Multibase):
            self._default_base = default_base
        else:
            self._default_base = multibase.get(default_base)

    def normalize_cid(self, cid: CID) -> CID:
        return cid.set(base=self._default_base, version=1)

    def get_raw(self, cid: CID) -> bytes:
        validate(cid, CID)
        return self._mapping[str(self.normalize_cid(cid))]

    def put_raw(self, raw_value: bytes, codec: Union[str, int, multicodec.Multicodec]) -> CID:
        validate(raw_value, bytes)
        validate(codec, Union[str, int, multicodec.Multicodec])

        h = self._default_hash.digest(raw_value)
        cid = CID(self._default_base, 1, codec, h)
        self._mapping[str(cid)] = raw_value
        return cid


def iter_links(o: object) -> Iterator[CID]:
    if isinstance(o, dict):
        for v in o.values():
            yield from iter_links(v)
    elif isinstance(o, list):
        for v in o:
            yield from iter_links(v)
    elif isinstance(o, CID):
        yield o


__all__ = ["ContentAddressableStore", "MappingCAStore", "iter_links", "encode_object", "decode_object"]
