"""Bit-level writer/reader with Exp-Golomb codes (ue/se)."""

from __future__ import annotations

MAX_PREFIX = 32


class BitstreamError(ValueError):
    """Malformed or truncated bit data."""


def ue_bits(v: int) -> str:
    if v < 0:
        raise ValueError(f"ue(v) needs v >= 0, got {v}")
    code = bin(v + 1)[2:]
    return "0" * (len(code) - 1) + code


def se_bits(v: int) -> str:
    return ue_bits(2 * v - 1 if v > 0 else -2 * v)


class BitWriter:
    def __init__(self):
        self._parts: list[str] = []

    def write(self, value: int, nbits: int) -> None:
        if nbits:
            self._parts.append(format(value, f"0{nbits}b"))

    def ue(self, v: int) -> None:
        self._parts.append(ue_bits(v))

    def se(self, v: int) -> None:
        self._parts.append(se_bits(v))

    def bitstring(self) -> str:
        return "".join(self._parts)

    def to_bytes(self) -> bytes:
        """Zero-pad to a byte boundary."""
        s = self.bitstring()
        if not s:
            return b""
        s += "0" * (-len(s) % 8)
        return int(s, 2).to_bytes(len(s) // 8, "big")


class BitReader:
    def __init__(self, data: bytes | str):
        if isinstance(data, str):
            self._s = data
        else:
            self._s = bin(int.from_bytes(b"\x01" + bytes(data), "big"))[3:]
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self._s) - self.pos

    def read(self, nbits: int) -> int:
        end = self.pos + nbits
        if end > len(self._s):
            raise BitstreamError("read past end of data")
        v = int(self._s[self.pos:end], 2) if nbits else 0
        self.pos = end
        return v

    def ue(self) -> int:
        one = self._s.find("1", self.pos, self.pos + MAX_PREFIX + 1)
        if one < 0:
            raise BitstreamError("malformed Exp-Golomb prefix")
        zeros = one - self.pos
        end = one + zeros + 1
        if end > len(self._s):
            raise BitstreamError("truncated Exp-Golomb code")
        v = int(self._s[one:end], 2) - 1
        self.pos = end
        return v

    def se(self) -> int:
        k = self.ue()
        return (k + 1) // 2 if k & 1 else -(k // 2)

    def tail_is_padding(self) -> bool:
        return self.remaining < 8 and "1" not in self._s[self.pos:]


def ue_decode(bits: str) -> int:
    r = BitReader(bits)
    v = r.ue()
    if r.remaining:
        raise BitstreamError("trailing bits after code")
    return v


def se_decode(bits: str) -> int:
    r = BitReader(bits)
    v = r.se()
    if r.remaining:
        raise BitstreamError("trailing bits after code")
    return v
