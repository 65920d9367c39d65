from __future__ import annotations

import struct

from polyir.errors import BadMagicError, TruncatedFileError, UnsupportedVersionError


def pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class Reader:
    """Cursor over a little-endian binary blob that raises on short reads."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"unexpected end of data at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def check_header(self, magic: bytes, version: int) -> None:
        if self.take(len(magic)) != magic:
            raise BadMagicError(f"expected magic {magic!r}")
        (found,) = self.unpack("<I")
        if found != version:
            raise UnsupportedVersionError(f"unsupported version {found} (expected {version})")

    def at_end(self) -> bool:
        return self.pos == len(self.data)
