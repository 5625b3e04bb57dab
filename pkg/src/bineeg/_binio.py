"""Little-endian binary readers/writers shared by the file formats."""

import struct

import numpy as np


class ByteWriter:
    def __init__(self):
        self.buf = bytearray()

    def raw(self, data):
        self.buf += data

    def u8(self, v):
        self.buf += struct.pack("<B", v)

    def u16(self, v):
        self.buf += struct.pack("<H", v)

    def u32(self, v):
        self.buf += struct.pack("<I", v)

    def u64(self, v):
        self.buf += struct.pack("<Q", v)

    def f64(self, v):
        self.buf += struct.pack("<d", v)

    def blob(self, data):
        self.u32(len(data))
        self.buf += data

    def array(self, arr, dtype):
        a = np.ascontiguousarray(arr, dtype=dtype)
        self.u8(a.ndim)
        for d in a.shape:
            self.u32(d)
        self.buf += a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes()

    def getvalue(self):
        return bytes(self.buf)


class ByteReader:
    def __init__(self, data, error_cls):
        self.data = data
        self.pos = 0
        self.error_cls = error_cls

    def fail(self, msg):
        raise self.error_cls(msg)

    def take(self, n):
        if self.pos + n > len(self.data):
            self.fail(f"truncated: wanted {n} bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def blob(self):
        return self.take(self.u32())

    def array(self, dtype):
        dt = np.dtype(dtype).newbyteorder("<")
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * dt.itemsize)
        return np.frombuffer(raw, dtype=dt).reshape(shape).astype(np.dtype(dtype), copy=True)

    def expect_end(self):
        if self.pos != len(self.data):
            self.fail(f"{len(self.data) - self.pos} trailing bytes")
