"""Versioned binary checkpoints.

Layout (all integers little-endian):

    magic        8 bytes   b"PATCKPT\\0"
    version      uint32    FORMAT_VERSION
    header_len   uint32
    header       JSON      CheckpointHeader
    payload      float32   every store entry, in store order, row-major
    mask         uint64    packed mask words (only when header.mask is set)
    crc32        uint32    over every preceding byte
"""
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError

from app.core.errors import CheckpointFormatError, CheckpointVersionError, DataIOError, MaskError
from app.domain.masks import Granularity, MaskScope, PruneMask, prunable_set
from app.nn.layers import ParameterRole
from app.nn.network import NetworkGraph, ParameterEntry, ParameterStore

logger = logging.getLogger(__name__)

MAGIC = b"PATCKPT\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")
_CRC = struct.Struct("<I")


class EntryHeader(BaseModel):
    name: str
    shape: List[int]
    role: ParameterRole
    layer: str


class MaskHeader(BaseModel):
    bit_length: int
    word_count: int
    scope: MaskScope
    granularity: Granularity
    include_output_layer: bool
    include_biases: bool


class CheckpointHeader(BaseModel):
    architecture: Dict[str, Any]
    entries: List[EntryHeader]
    seed: int
    mask: Optional[MaskHeader] = None
    extra: Dict[str, Any] = {}


@dataclass
class Checkpoint:
    net: NetworkGraph
    seed: int
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def mask(self) -> Optional[PruneMask]:
        return self.net.mask


def encode_checkpoint(net: NetworkGraph, seed: int, extra: Optional[Dict[str, Any]] = None) -> bytes:
    mask = net.mask
    words = mask.to_words() if mask is not None else np.zeros(0, dtype="<u8")
    header = CheckpointHeader(
        architecture=net.describe(),
        entries=[EntryHeader(name=e.name, shape=list(e.tensor.shape), role=e.role, layer=e.layer)
                 for e in net.parameters],
        seed=int(seed),
        mask=None if mask is None else MaskHeader(
            bit_length=len(mask),
            word_count=int(words.size),
            scope=mask.scope,
            granularity=mask.granularity,
            include_output_layer=mask.prunable.include_output_layer,
            include_biases=mask.prunable.include_biases,
        ),
        extra=extra or {},
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    body = b"".join(
        [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)), header_bytes]
        + [np.ascontiguousarray(e.tensor, dtype="<f4").tobytes() for e in net.parameters]
        + [words.astype("<u8").tobytes()]
    )
    return body + _CRC.pack(zlib.crc32(body))


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(raw) < _PREFIX.size + _CRC.size:
        raise CheckpointFormatError(f"{source}: {len(raw)} bytes is too short for a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{source}: bad magic {magic!r}, not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{source}: format version {version}, this build reads {FORMAT_VERSION}")
    body, (crc,) = raw[:-_CRC.size], _CRC.unpack_from(raw, len(raw) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise CheckpointFormatError(f"{source}: checksum mismatch (corrupt or truncated file)")

    cursor = _PREFIX.size
    try:
        header = CheckpointHeader.model_validate(json.loads(body[cursor:cursor + header_len]))
    except (ValueError, ValidationError) as e:
        raise CheckpointFormatError(f"{source}: unreadable header: {e}") from e
    cursor += header_len

    entries = []
    for entry in header.entries:
        count = int(np.prod(entry.shape, dtype=np.int64))
        end = cursor + 4 * count
        if end > len(body):
            raise CheckpointFormatError(f"{source}: payload ends inside entry {entry.name}")
        tensor = np.frombuffer(body, dtype="<f4", count=count, offset=cursor).astype(np.float32)
        entries.append(ParameterEntry(entry.name, tensor.reshape(entry.shape), entry.role, entry.layer))
        cursor = end
    net = NetworkGraph.from_description(header.architecture, ParameterStore(entries))

    if header.mask is not None:
        mask_header = header.mask
        end = cursor + 8 * mask_header.word_count
        if end != len(body):
            raise CheckpointFormatError(f"{source}: expected {end} bytes before checksum, found {len(body)}")
        words = np.frombuffer(body, dtype="<u8", count=mask_header.word_count, offset=cursor)
        prunable = prunable_set(net, mask_header.include_output_layer, mask_header.include_biases)
        try:
            net.mask = PruneMask.from_words(words, mask_header.bit_length, prunable, mask_header.scope, mask_header.granularity)
        except MaskError as e:
            raise CheckpointFormatError(f"{source}: stored mask does not fit the network: {e}") from e
    elif cursor != len(body):
        raise CheckpointFormatError(f"{source}: {len(body) - cursor} unexpected trailing bytes")
    return Checkpoint(net, header.seed, header.extra)


def save_checkpoint(path, net: NetworkGraph, seed: int, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(net, seed, extra))
    except OSError as e:
        logger.error(f"Failed to write checkpoint {path}: {e}")
        raise DataIOError(f"{path}: cannot write checkpoint: {e}") from e
    logger.info(f"Saved checkpoint {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataIOError(f"{path}: cannot read checkpoint: {e}") from e
    return decode_checkpoint(raw, str(path))
