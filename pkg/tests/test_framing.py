"""Length-prefixed framing over stream sockets."""

import struct
import threading

import pytest

from steerflow.errors import ConnectionLostError, FrameError
from steerflow.framing import (
    encode_frame,
    read_frame,
    read_frame_or_eof,
    recv_exact,
    write_frame,
)


def test_header_is_four_byte_big_endian_length():
    assert encode_frame(b"example") == b"\x00\x00\x00\x07example"
    assert encode_frame(b"") == b"\x00\x00\x00\x00"


def test_round_trip_over_a_socket(socket_pair):
    left, right = socket_pair
    for payload in (b"", b"x", b"hello world", b"\x00" * 70_000):
        write_frame(left, payload)
        assert read_frame(right) == payload


def test_frames_arrive_in_order(socket_pair):
    left, right = socket_pair
    for i in range(10):
        write_frame(left, f"msg-{i}".encode())
    for i in range(10):
        assert read_frame(right) == f"msg-{i}".encode()


def test_recv_exact_reassembles_partial_sends(socket_pair):
    left, right = socket_pair
    data = bytes(range(256)) * 10

    def dribble():
        for offset in range(0, len(data), 100):
            left.sendall(data[offset : offset + 100])

    thread = threading.Thread(target=dribble)
    thread.start()
    assert recv_exact(right, len(data)) == data
    thread.join()


def test_oversized_outgoing_frame_is_refused():
    with pytest.raises(FrameError):
        encode_frame(b"x" * 10, max_frame=9)


def test_oversized_incoming_frame_is_refused_before_payload(socket_pair):
    left, right = socket_pair
    left.sendall(struct.pack(">I", 2**31))
    with pytest.raises(FrameError):
        read_frame(right)


def test_eof_mid_payload_raises_connection_lost(socket_pair):
    left, right = socket_pair
    left.sendall(struct.pack(">I", 10) + b"abc")
    left.close()
    with pytest.raises(ConnectionLostError):
        read_frame(right)


def test_eof_mid_header_raises_connection_lost(socket_pair):
    left, right = socket_pair
    left.sendall(b"\x00\x00")
    left.close()
    with pytest.raises(ConnectionLostError):
        read_frame_or_eof(right)


def test_clean_eof_at_frame_boundary_returns_none(socket_pair):
    left, right = socket_pair
    write_frame(left, b"last")
    left.close()
    assert read_frame_or_eof(right) == b"last"
    assert read_frame_or_eof(right) is None
