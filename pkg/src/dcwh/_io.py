"""Little-endian binary helpers shared by the file formats."""

import os
import struct
import tempfile

from .errors import FormatError, TruncatedFileError


def atomic_write(path, payload: bytes):
    """Write ``payload`` to ``path`` via a temp file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Reader:
    """Cursor over an in-memory buffer that raises on short reads."""

    def __init__(self, buf: bytes, what: str):
        self.buf = memoryview(buf)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise TruncatedFileError(
                f"{self.what}: truncated at byte {self.pos} (wanted {n} more)"
            )
        out = self.buf[self.pos:self.pos + n].tobytes()
        self.pos += n
        return out

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u32(self) -> int:
        return self.unpack("I")[0]

    def u8(self) -> int:
        return self.unpack("B")[0]

    def expect_magic(self, magic: bytes):
        got = self.buf[:len(magic)].tobytes()
        if got != magic:
            raise FormatError(f"{self.what}: bad magic {got!r}, expected {magic!r}")
        self.pos = len(magic)

    def expect_version(self, supported):
        version = self.u32()
        if version not in supported:
            raise FormatError(f"{self.what}: unsupported version {version}")
        return version

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(
                f"{self.what}: {len(self.buf) - self.pos} trailing bytes"
            )
