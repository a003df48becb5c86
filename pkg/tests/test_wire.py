import pytest
from hypothesis import given
from hypothesis import strategies as st

from spirkit import wire
from spirkit.wire import ErrorCode, FrameError, FrameType, WireFrame


class TestPackSymbols:
    @pytest.mark.parametrize(
        "symbols,bits,expected",
        [
            [[1, 0, 1], 1, bytes([0b10100000])],
            [[2, 1, 0, 2], 2, bytes([0b10010010])],
            [[4, 3], 3, bytes([0b10001100])],
        ],
    )
    def test_msb_first_with_zero_padding(self, symbols, bits, expected):
        assert wire.pack_symbols(symbols, bits) == expected

    @given(st.integers(1, 9), st.data())
    def test_unpack_inverts_pack(self, bits, data):
        symbols = data.draw(st.lists(st.integers(0, 2**bits - 1), max_size=40))

        packed = wire.pack_symbols(symbols, bits)

        assert len(packed) == wire.packed_size(len(symbols), bits)
        assert wire.unpack_symbols(packed, len(symbols), bits).tolist() == symbols

    def test_non_zero_padding_raises_frame_error(self):
        with pytest.raises(FrameError) as excinfo:
            wire.unpack_symbols(bytes([0b10100001]), 3, 1)

        assert excinfo.value.code == ErrorCode.MALFORMED

    def test_wrong_size_raises_frame_error(self):
        with pytest.raises(FrameError):
            wire.unpack_symbols(bytes(2), 3, 1)


class TestFrame:
    def test_header_is_22_bytes_big_endian(self):
        frame = WireFrame(FrameType.ANSWER, 258, 3, b"\x80")

        data = frame.encode()

        assert wire.HEADER_SIZE == 22 and frame.size == 23
        assert data[:6] == b"SPIR\x01\x03"
        assert data[6:14] == (258).to_bytes(8, "big")
        assert data[14:18] == (3).to_bytes(4, "big")
        assert data[18:22] == (1).to_bytes(4, "big")

    def test_decode_restores_frame(self):
        frame = WireFrame(FrameType.QUERY, 7, 2, b"abc")

        assert wire.decode_frame(frame.encode()) == frame

    @pytest.mark.parametrize(
        "data,code",
        [
            [b"SPIX\x01\x02" + bytes(16), ErrorCode.MALFORMED],
            [b"SPIR\x02\x02" + bytes(16), ErrorCode.BAD_VERSION],
            [b"SPIR\x01\x09" + bytes(16), ErrorCode.UNKNOWN_TYPE],
            [b"SPIR\x01\x02" + bytes(12) + b"\x00\x00\x00\x05", ErrorCode.MALFORMED],
            [b"SPIR\x01", ErrorCode.MALFORMED],
        ],
    )
    def test_bad_frames_raise_frame_error_with_code(self, data, code):
        with pytest.raises(FrameError) as excinfo:
            wire.decode_frame(data)

        assert excinfo.value.code == code

    def test_oversized_payload_length_is_rejected_from_header(self):
        header = b"SPIR\x01\x02" + bytes(12) + (wire.MAX_PAYLOAD + 1).to_bytes(4, "big")

        with pytest.raises(FrameError):
            wire.parse_header(header)

    @given(st.binary(max_size=64))
    def test_arbitrary_bytes_decode_or_raise_frame_error(self, data):
        try:
            frame = wire.decode_frame(data)
        except FrameError:
            return
        assert frame.encode() == data


class TestReadFrame:
    def test_reads_one_frame_from_stream(self):
        first = WireFrame(FrameType.ANSWER, 1, 0, b"\x40").encode()
        second = WireFrame(FrameType.ANSWER, 1, 1, b"\x80").encode()
        stream = bytearray(first + second)

        def read_exactly(size):
            chunk = bytes(stream[:size])
            del stream[:size]
            return chunk

        assert wire.read_frame(read_exactly) == first
        assert wire.read_frame(read_exactly) == second
        with pytest.raises(EOFError):
            wire.read_frame(read_exactly)

    def test_truncated_payload_raises_frame_error(self):
        data = WireFrame(FrameType.QUERY, 1, 0, b"abcd").encode()[:-1]
        stream = bytearray(data)

        def read_exactly(size):
            chunk = bytes(stream[:size])
            del stream[:size]
            return chunk

        with pytest.raises(FrameError):
            wire.read_frame(read_exactly)


class TestPayloads:
    def test_query_payload_carries_window_and_coefficients(self):
        frame = wire.query_frame(5, 1, 4, 2, [1, 2, 0, 1], 2)

        assert frame.payload[:6] == b"\x00\x00\x00\x04\x00\x02"
        offset, width, coeffs = wire.parse_query(frame, 2, 2)
        assert (offset, width, coeffs.tolist()) == (4, 2, [1, 2, 0, 1])

    def test_query_for_other_message_count_raises_frame_error(self):
        frame = wire.query_frame(5, 1, 0, 1, [1] * 8, 1)

        with pytest.raises(FrameError):
            wire.parse_query(frame, 9, 1)

    def test_empty_window_raises_frame_error(self):
        frame = wire.query_frame(5, 1, 0, 0, [], 1)

        with pytest.raises(FrameError):
            wire.parse_query(frame, 2, 1)

    def test_answer_payload_is_one_packed_symbol(self):
        frame = wire.answer_frame(1, 0, 6, 3)

        assert frame.payload == bytes([0b11000000])
        assert wire.parse_answer(frame, 3) == 6

    def test_setup_payload_carries_symbol_count(self):
        frame = wire.setup_frame(9, [1, 0, 1], 1)

        assert frame.payload[:4] == (3).to_bytes(4, "big")
        assert wire.parse_setup(frame, 1).tolist() == [1, 0, 1]

    def test_empty_setup_raises_frame_error(self):
        with pytest.raises(FrameError):
            wire.parse_setup(WireFrame(FrameType.SETUP, 1, 0), 1)

    def test_error_payload_is_code_and_message(self):
        frame = wire.error_frame(1, 2, ErrorCode.NO_SETUP, "no session")

        assert frame.payload == b"\x03no session"
        assert wire.parse_error(frame) == (ErrorCode.NO_SETUP, "no session")

    def test_unknown_error_code_is_kept_as_number(self):
        frame = WireFrame(FrameType.ERROR, 1, 0, b"\x63oops")

        assert wire.parse_error(frame) == (0x63, "oops")
