"""Length-prefixed message framing for all TCP surfaces.

Every message is a 4-byte big-endian unsigned length followed by that many
payload bytes. The length covers the payload only. Oversized frames are
rejected on both ends before any payload moves.
"""

from __future__ import annotations

import socket
import struct

from .errors import ConnectionLostError, FrameError

_HEADER = struct.Struct(">I")

DEFAULT_MAX_FRAME = 64 * 1024 * 1024  # 64 MiB


def set_nodelay(sock: socket.socket) -> None:
    """Disable Nagle batching; frames are latency-sensitive and self-delimiting."""
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


def encode_frame(payload: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    if len(payload) > max_frame:
        raise FrameError(f"frame of {len(payload)} bytes exceeds cap of {max_frame}")
    return _HEADER.pack(len(payload)) + payload


def recv_exact(sock: socket.socket, count: int) -> bytes:
    """Read exactly ``count`` bytes or raise ``ConnectionLostError``."""
    chunks = []
    remaining = count
    while remaining > 0:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionLostError(
                f"connection closed with {remaining} of {count} bytes unread"
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    """Read one complete frame. Raises on EOF mid-frame or an oversized length."""
    header = recv_exact(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > max_frame:
        raise FrameError(f"incoming frame of {length} bytes exceeds cap of {max_frame}")
    return recv_exact(sock, length)


def read_frame_or_eof(sock: socket.socket, max_frame: int = DEFAULT_MAX_FRAME) -> bytes | None:
    """Like ``read_frame`` but returns ``None`` on a clean EOF at a frame boundary."""
    first = sock.recv(1)
    if not first:
        return None
    header = first + recv_exact(sock, _HEADER.size - 1)
    (length,) = _HEADER.unpack(header)
    if length > max_frame:
        raise FrameError(f"incoming frame of {length} bytes exceeds cap of {max_frame}")
    return recv_exact(sock, length)


def write_frame(sock: socket.socket, payload: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> None:
    sock.sendall(encode_frame(payload, max_frame=max_frame))
