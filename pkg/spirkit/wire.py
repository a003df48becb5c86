"""Binary framing between users and databases.

Every frame is a fixed header followed by a payload:

    magic "SPIR" | version u8 | frame type u8 | session id u64 | round u32 |
    payload length u32 | payload

All integers are big-endian. Symbols are packed at ceil(log2 p) bits each,
most significant bit first, and the last byte is zero padded.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from spirkit import exceptions, utils

logger = logging.getLogger(__name__)

MAGIC = b"SPIR"
VERSION = 0x01
HEADER = struct.Struct(">4sBBQII")
HEADER_SIZE = HEADER.size
QUERY_PREFIX = struct.Struct(">IH")
COUNT_PREFIX = struct.Struct(">I")
MAX_PAYLOAD = 1 << 20


class FrameType(enum.IntEnum):
    SETUP = 1
    QUERY = 2
    ANSWER = 3
    ERROR = 4


class ErrorCode(enum.IntEnum):
    MALFORMED = 1
    UNKNOWN_TYPE = 2
    NO_SETUP = 3
    BAD_ROUND = 4
    BAD_VERSION = 5
    REFUSED = 6


class FrameError(exceptions.AppError):
    """A frame could not be decoded."""

    def __init__(self, code: ErrorCode, message: str) -> None:
        super().__init__(message)
        self.code = code


def packed_size(count: int, bits: int) -> int:
    """Bytes taken by count packed symbols."""

    return utils.ceil_div(count * bits, 8)


def pack_symbols(symbols: Sequence[int] | np.ndarray, bits: int) -> bytes:
    """Pack symbols at a fixed bit width.

    Args:
        symbols (Sequence[int] | np.ndarray): Symbols below 2**bits
        bits (int): Bits per symbol

    Returns:
        bytes: Packed symbols
    """

    values = np.asarray(symbols, dtype=np.int64).reshape(-1)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int64)
    bit_matrix = (values[:, np.newaxis] >> shifts) & 1
    return np.packbits(bit_matrix.astype(np.uint8).reshape(-1)).tobytes()


def unpack_symbols(data: bytes, count: int, bits: int) -> np.ndarray:
    """Unpack symbols packed by pack_symbols.

    Args:
        data (bytes): Packed symbols
        count (int): Number of symbols
        bits (int): Bits per symbol

    Raises:
        FrameError: Wrong size or non-zero padding

    Returns:
        np.ndarray: Symbols
    """

    if len(data) != packed_size(count, bits):
        raise FrameError(
            ErrorCode.MALFORMED,
            f"{count} symbols need {packed_size(count, bits)} bytes, got {len(data)}",
        )

    unpacked = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if unpacked[count * bits :].any():
        raise FrameError(ErrorCode.MALFORMED, "Padding bits are not zero")

    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.int64)
    return unpacked[: count * bits].reshape(count, bits).astype(np.int64) @ weights


@dataclass(frozen=True)
class WireFrame:
    frame_type: FrameType
    session_id: int
    round: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return (
            HEADER.pack(
                MAGIC,
                VERSION,
                self.frame_type,
                self.session_id,
                self.round,
                len(self.payload),
            )
            + self.payload
        )

    @property
    def size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def parse_header(header: bytes) -> tuple[FrameType, int, int, int]:
    """Check a frame header.

    Args:
        header (bytes): HEADER_SIZE bytes

    Raises:
        FrameError: Bad magic, version, type or length

    Returns:
        tuple[FrameType, int, int, int]: Type, session id, round, payload length
    """

    if len(header) != HEADER_SIZE:
        raise FrameError(ErrorCode.MALFORMED, "Truncated frame header")

    magic, version, frame_type, session_id, round_index, length = HEADER.unpack(
        header
    )
    if magic != MAGIC:
        raise FrameError(ErrorCode.MALFORMED, f"Bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(ErrorCode.BAD_VERSION, f"Unsupported version {version}")
    try:
        frame_type = FrameType(frame_type)
    except ValueError as err:
        raise FrameError(
            ErrorCode.UNKNOWN_TYPE, f"Unknown frame type {frame_type}"
        ) from err
    if length > MAX_PAYLOAD:
        raise FrameError(ErrorCode.MALFORMED, f"Payload of {length} bytes is too big")
    return frame_type, session_id, round_index, length


def decode_frame(data: bytes) -> WireFrame:
    """Decode exactly one frame.

    Raises:
        FrameError: Malformed frame

    Returns:
        WireFrame: Frame
    """

    frame_type, session_id, round_index, length = parse_header(data[:HEADER_SIZE])
    payload = data[HEADER_SIZE:]
    if len(payload) != length:
        raise FrameError(
            ErrorCode.MALFORMED,
            f"Payload length field says {length}, got {len(payload)} bytes",
        )
    return WireFrame(frame_type, session_id, round_index, payload)


def read_frame(read_exactly: Callable[[int], bytes]) -> bytes:
    """Read one raw frame from a stream.

    Args:
        read_exactly (Callable[[int], bytes]): Returns exactly n bytes, or fewer
        at end of stream

    Raises:
        EOFError: Stream ended before a header
        FrameError: Malformed header or truncated payload

    Returns:
        bytes: Frame bytes
    """

    header = read_exactly(HEADER_SIZE)
    if not header:
        raise EOFError
    *_, length = parse_header(header)
    payload = read_exactly(length)
    if len(payload) != length:
        raise FrameError(ErrorCode.MALFORMED, "Stream ended inside a payload")
    return header + payload


def query_frame(
    session_id: int,
    round_index: int,
    offset: int,
    width: int,
    coeffs: Sequence[int] | np.ndarray,
    bits: int,
) -> WireFrame:
    payload = QUERY_PREFIX.pack(offset, width) + pack_symbols(coeffs, bits)
    return WireFrame(FrameType.QUERY, session_id, round_index, payload)


def parse_query(frame: WireFrame, k: int, bits: int) -> tuple[int, int, np.ndarray]:
    """Read a query for a store of K messages.

    Raises:
        FrameError: Payload does not hold width * K symbols

    Returns:
        tuple[int, int, np.ndarray]: Offset, width, coefficients
    """

    if len(frame.payload) < QUERY_PREFIX.size:
        raise FrameError(ErrorCode.MALFORMED, "Truncated query payload")
    offset, width = QUERY_PREFIX.unpack(frame.payload[: QUERY_PREFIX.size])
    if width == 0:
        raise FrameError(ErrorCode.MALFORMED, "Query window is empty")
    coeffs = unpack_symbols(frame.payload[QUERY_PREFIX.size :], width * k, bits)
    return offset, width, coeffs


def answer_frame(session_id: int, round_index: int, value: int, bits: int) -> WireFrame:
    return WireFrame(
        FrameType.ANSWER, session_id, round_index, pack_symbols([value], bits)
    )


def parse_answer(frame: WireFrame, bits: int) -> int:
    return int(unpack_symbols(frame.payload, 1, bits)[0])


def setup_frame(
    session_id: int, symbols: Sequence[int] | np.ndarray, bits: int
) -> WireFrame:
    """Frame the dealer sends to load common randomness for a session."""

    count = np.asarray(symbols).size
    payload = COUNT_PREFIX.pack(count) + pack_symbols(symbols, bits)
    return WireFrame(FrameType.SETUP, session_id, 0, payload)


def parse_setup(frame: WireFrame, bits: int) -> np.ndarray:
    if len(frame.payload) < COUNT_PREFIX.size:
        raise FrameError(ErrorCode.MALFORMED, "Truncated setup payload")
    (count,) = COUNT_PREFIX.unpack(frame.payload[: COUNT_PREFIX.size])
    if count == 0:
        raise FrameError(ErrorCode.MALFORMED, "Setup carries no symbols")
    return unpack_symbols(frame.payload[COUNT_PREFIX.size :], count, bits)


def error_frame(
    session_id: int, round_index: int, code: ErrorCode, message: str
) -> WireFrame:
    payload = bytes([code]) + message.encode("utf-8")
    return WireFrame(FrameType.ERROR, session_id, round_index, payload)


def parse_error(frame: WireFrame) -> tuple[ErrorCode | int, str]:
    if not frame.payload:
        return ErrorCode.MALFORMED, ""
    code = frame.payload[0]
    message = frame.payload[1:].decode("utf-8", errors="replace")
    try:
        return ErrorCode(code), message
    except ValueError:
        return code, message
