"""Files a database is started from: the message store, the common
randomness blocks handed out by the dealer, and parameter files.

Store file:

    magic "SPST" | version u8 | p u32 | K u32 | K x length u32 |
    per message: symbols packed at ceil(log2 p) bits, zero padded to a byte

Randomness file:

    magic "SPSR" | version u8 | p u32 | block count u32 |
    per block: session id u64 | symbol count u32 | packed symbols
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import toml

from spirkit import core, exceptions, utils, wire
from spirkit.core import CommonRandomness, FieldPrime, MessageStore, ProtocolParams

logger = logging.getLogger(__name__)

STORE_MAGIC = b"SPST"
RANDOMNESS_MAGIC = b"SPSR"
FORMAT_VERSION = 1
FILE_HEADER = struct.Struct(">4sBII")
U32 = struct.Struct(">I")
BLOCK_HEADER = struct.Struct(">QI")


class StoreFormatError(exceptions.UserError):
    """File is not a valid store, randomness or parameter file."""


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.position = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.position + size > len(self.data):
            raise StoreFormatError(f"{self.path} is truncated")
        chunk = self.data[self.position : self.position + size]
        self.position += size
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:
        return layout.unpack(self.take(layout.size))

    def finish(self) -> None:
        if self.position != len(self.data):
            raise StoreFormatError(f"{self.path} has trailing bytes")


def _read_header(reader: _Reader, magic: bytes) -> tuple[FieldPrime, int]:
    found, version, p, count = reader.unpack(FILE_HEADER)
    if found != magic:
        raise StoreFormatError(f"{reader.path} does not start with {magic!r}")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{reader.path} has unsupported version {version}")
    try:
        return FieldPrime(p), count
    except core.FieldError as err:
        raise StoreFormatError(f"{reader.path}: {err}") from err


def _read_symbols(reader: _Reader, field_prime: FieldPrime, count: int):
    data = reader.take(wire.packed_size(count, field_prime.symbol_bits))
    try:
        symbols = wire.unpack_symbols(data, count, field_prime.symbol_bits)
        return field_prime.vector(symbols)
    except (wire.FrameError, core.FieldError) as err:
        raise StoreFormatError(f"{reader.path}: {err}") from err


def encode_store(store: MessageStore) -> bytes:
    bits = store.field.symbol_bits
    parts = [FILE_HEADER.pack(STORE_MAGIC, FORMAT_VERSION, store.field.p, store.k)]
    parts.extend(U32.pack(length) for length in store.lengths)
    parts.extend(wire.pack_symbols(message, bits) for message in store.to_lists())
    return b"".join(parts)


def write_store(path: Path | str, store: MessageStore) -> None:
    path = utils.expanded_path(path)
    path.write_bytes(encode_store(store))
    logger.debug("Wrote store of %d messages to %s", store.k, path)


def read_store(path: Path | str) -> MessageStore:
    """Read a store file.

    Args:
        path (Path | str): Store file

    Raises:
        StoreFormatError: Invalid file

    Returns:
        MessageStore: Messages
    """

    path = utils.expanded_path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except FileNotFoundError as err:
        raise StoreFormatError(f"Store file {path} not found") from err

    field_prime, k = _read_header(reader, STORE_MAGIC)
    if k == 0:
        raise StoreFormatError(f"{path} holds no messages")
    lengths = [reader.unpack(U32)[0] for _ in range(k)]
    messages = tuple(_read_symbols(reader, field_prime, length) for length in lengths)
    reader.finish()

    try:
        return MessageStore(field_prime, messages)
    except core.ParameterError as err:
        raise StoreFormatError(f"{path}: {err}") from err


def encode_randomness(
    field_prime: FieldPrime, blocks: dict[int, CommonRandomness]
) -> bytes:
    bits = field_prime.symbol_bits
    parts = [
        FILE_HEADER.pack(RANDOMNESS_MAGIC, FORMAT_VERSION, field_prime.p, len(blocks))
    ]
    for session_id in sorted(blocks):
        symbols = blocks[session_id].symbols
        parts.append(BLOCK_HEADER.pack(session_id, symbols.size))
        parts.append(wire.pack_symbols(symbols.tolist(), bits))
    return b"".join(parts)


def write_randomness(
    path: Path | str, field_prime: FieldPrime, blocks: dict[int, CommonRandomness]
) -> None:
    path = utils.expanded_path(path)
    path.write_bytes(encode_randomness(field_prime, blocks))
    logger.debug("Wrote %d randomness blocks to %s", len(blocks), path)


def read_randomness(path: Path | str) -> tuple[FieldPrime, dict[int, CommonRandomness]]:
    """Read a randomness file.

    Args:
        path (Path | str): Randomness file

    Raises:
        StoreFormatError: Invalid file

    Returns:
        tuple[FieldPrime, dict[int, CommonRandomness]]: Field, and blocks keyed
        by session id
    """

    path = utils.expanded_path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except FileNotFoundError as err:
        raise StoreFormatError(f"Randomness file {path} not found") from err

    field_prime, count = _read_header(reader, RANDOMNESS_MAGIC)
    blocks: dict[int, CommonRandomness] = {}
    for _ in range(count):
        session_id, size = reader.unpack(BLOCK_HEADER)
        if session_id in blocks:
            raise StoreFormatError(f"{path} repeats session {session_id}")
        blocks[session_id] = CommonRandomness(
            _read_symbols(reader, field_prime, size)
        )
    reader.finish()
    return field_prime, blocks


def read_params(path: Path | str) -> tuple[ProtocolParams, str]:
    """Read a TOML parameter file shared by the user and the databases.

    Example:
        n = 3
        k = 2
        lengths = [2, 2]
        p = 2
        plan = "base"

    Args:
        path (Path | str): Parameter file

    Raises:
        StoreFormatError: Missing or invalid file

    Returns:
        tuple[ProtocolParams, str]: Parameters and plan kind
    """

    path = utils.expanded_path(path)
    try:
        data = toml.load(path)
    except FileNotFoundError as err:
        raise StoreFormatError(f"Parameter file {path} not found") from err
    except toml.TomlDecodeError as err:
        raise StoreFormatError(f"Parameter file {path} is not valid TOML") from err

    return ProtocolParams.from_dict(data), data.get("plan", "base")


def write_params(path: Path | str, params: ProtocolParams, plan_kind: str) -> None:
    path = utils.expanded_path(path)
    with open(path, "w") as f:
        toml.dump({**params.to_dict(), "plan": plan_kind}, f)
