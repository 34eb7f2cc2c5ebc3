"""
CARv1 archives, the on-disk form of every artifact.

An archive is ``varint(len) | dag-cbor header`` followed by blocks framed as
``varint(len) | binary CIDv1 | payload``. Blocks are verified against their
CID while reading.
"""

from typing import BinaryIO, Iterable, Iterator, List, Tuple
import dataclasses

import dag_cbor
from multiformats import CID, varint, multicodec

from .utils import is_cid_list, StreamLike, ensure_stream

CAR_VERSION = 1

Block = Tuple[CID, bytes]


@dataclasses.dataclass(frozen=True)
class CARHeader:
    roots: List[CID]
    version: int = CAR_VERSION

    def encode(self) -> bytes:
        header = dag_cbor.encode({"version": self.version, "roots": self.roots})
        return varint.encode(len(header)) + header

    @classmethod
    def decode(cls, stream: BinaryIO) -> "CARHeader":
        size, _, _ = varint.decode_raw(stream)  # type: ignore [call-overload]
        header = dag_cbor.decode(stream.read(size))
        if not isinstance(header, dict):
            raise ValueError("no valid CAR header found")
        if header.get("version") != CAR_VERSION:
            raise ValueError(f"only CARv{CAR_VERSION} archives can be read, got version {header.get('version')}")
        roots = header.get("roots")
        if not isinstance(roots, list) or not is_cid_list(roots):
            raise ValueError("CAR header must list its roots as CIDs")
        return cls(roots)


def _decode_block(frame: memoryview) -> Block:
    # a binary CIDv1 is varint(version) varint(codec) varint(hash) varint(size) digest
    version, _, rest = varint.decode_raw(frame)
    if version != 1:
        raise ValueError(f"CIDv{version} blocks are not used in artifacts")
    codec, _, rest = multicodec.unwrap_raw(rest)
    hash_code, _, rest = varint.decode_raw(rest)
    digest_size, _, rest = varint.decode_raw(rest)
    cid = CID("base32", 1, codec, (hash_code, bytes(rest[:digest_size])))
    payload = bytes(rest[digest_size:])
    if cid.hashfun.digest(payload) != cid.digest:
        raise ValueError(f"CAR is corrupted. Entry '{cid}' could not be verified")
    return cid, payload


def iter_blocks(stream: BinaryIO) -> Iterator[Block]:
    while True:
        try:
            size, _, _ = varint.decode_raw(stream)  # type: ignore [call-overload]
        except ValueError:
            return  # end of stream
        frame = stream.read(size)
        if len(frame) != size:
            raise ValueError(f"CAR is truncated: block of {size} bytes has only {len(frame)}")
        yield _decode_block(memoryview(frame))


def read_car(stream_or_bytes: StreamLike) -> Tuple[List[CID], Iterator[Block]]:
    """
    Reads a CAR.

    Parameters
    ----------
    stream_or_bytes: StreamLike
        Stream (or bytes) holding the archive

    Returns
    -------
    roots : List[CID]
        Roots as given by the CAR header
    blocks : Iterator[Tuple[CID, bytes]]
        Lazily verified blocks, in archive order
    """
    stream = ensure_stream(stream_or_bytes)
    header = CARHeader.decode(stream)
    return header.roots, iter_blocks(stream)


def write_car(roots: List[CID], blocks: Iterable[Block], stream: BinaryIO) -> int:
    """
    Writes a CARv1 to ``stream`` and returns the number of bytes written.
    """
    written = stream.write(CARHeader(roots).encode())
    for cid, payload in blocks:
        raw_cid = bytes(cid)
        written += stream.write(varint.encode(len(raw_cid) + len(payload)) + raw_cid + payload)
    return written
