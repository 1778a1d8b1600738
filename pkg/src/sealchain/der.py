"""Strict DER subset used by certificates, trust lists and seal envelopes.

Supported universal types are INTEGER, BIT STRING (octet aligned), OCTET
STRING, OBJECT IDENTIFIER, UTF8String, GeneralizedTime, SEQUENCE and SET,
plus context-specific tags [0]..[30] in primitive or constructed form.
Anything else is rejected. The decoder refuses BER leniency: indefinite or
non-minimal lengths, non-minimal integers, unsorted SETs and trailing bytes.
"""

from __future__ import annotations

import calendar
import functools
import re
import time
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import MalformedDer, UnsupportedConstruct

INTEGER = 0x02
BIT_STRING = 0x03
OCTET_STRING = 0x04
OID = 0x06
UTF8 = 0x0C
GENERALIZED_TIME = 0x18
SEQUENCE = 0x30
SET = 0x31

MAX_DEPTH = 32
MAX_ELEMENT_SIZE = 1 << 20

_UNIVERSAL_PRIMITIVE = {INTEGER, BIT_STRING, OCTET_STRING, OID, UTF8, GENERALIZED_TIME}
_UNIVERSAL_CONSTRUCTED = {SEQUENCE, SET}

# latest instant a four-digit year can express
MAX_EPOCH = 253402300799

_TIME_RE = re.compile(rb"\A(\d{4})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})Z\Z")


def is_constructed(tag: int) -> bool:
    return bool(tag & 0x20)


def context_tag(number: int, constructed: bool = True) -> int:
    if not 0 <= number <= 30:
        raise UnsupportedConstruct(f"context tag number {number} out of range")
    return (0xA0 if constructed else 0x80) | number


def _tag_supported(tag: int) -> bool:
    if tag in _UNIVERSAL_PRIMITIVE or tag in _UNIVERSAL_CONSTRUCTED:
        return True
    return (tag & 0xC0) == 0x80 and (tag & 0x1F) != 0x1F


def _content_problem(tag: int, content: bytes) -> str | None:
    """Return why ``content`` is not canonical for ``tag``, or None."""
    if tag == INTEGER:
        if not content:
            return "empty INTEGER"
        if len(content) > 1 and (
            (content[0] == 0x00 and content[1] < 0x80)
            or (content[0] == 0xFF and content[1] >= 0x80)
        ):
            return "non-minimal INTEGER"
    elif tag == BIT_STRING:
        if not content:
            return "empty BIT STRING"
        if content[0] != 0:
            return "BIT STRING with unused bits is unsupported"
    elif tag == OID:
        if not content:
            return "empty OID"
        if content[-1] & 0x80:
            return "truncated OID arc"
        start = True
        for byte in content:
            if start and byte == 0x80:
                return "non-minimal OID arc"
            start = not byte & 0x80
    elif tag == UTF8:
        try:
            content.decode("utf-8")
        except UnicodeDecodeError:
            return "invalid UTF-8"
    elif tag == GENERALIZED_TIME:
        if _parse_time(content) is None:
            return "GeneralizedTime must be YYYYMMDDHHMMSSZ"
    return None


def _parse_time(content: bytes) -> int | None:
    m = _TIME_RE.match(content)
    if not m:
        return None
    year, month, day, hour, minute, second = map(int, m.groups())
    if year < 1 or not 1 <= month <= 12 or hour > 23 or minute > 59 or second > 59:
        return None
    if not 1 <= day <= calendar.monthrange(year, month)[1]:
        return None
    return calendar.timegm((year, month, day, hour, minute, second, 0, 0, 0))


@dataclass(frozen=True)
class DerValue:
    """One DER element: a tag byte and either raw content or child elements.

    SET children are kept sorted by their encodings, so equal values always
    encode identically.
    """

    tag: int
    value: Union[bytes, tuple]

    def __post_init__(self):
        if not _tag_supported(self.tag):
            raise UnsupportedConstruct(f"tag 0x{self.tag:02x} is outside the supported subset")
        if is_constructed(self.tag):
            children = tuple(self.value)
            for child in children:
                if not isinstance(child, DerValue):
                    raise TypeError("constructed DER values hold DerValue children")
            if self.tag == SET:
                children = tuple(sorted(children, key=der_encode))
            object.__setattr__(self, "value", children)
        else:
            if not isinstance(self.value, (bytes, bytearray)):
                raise TypeError("primitive DER values hold bytes")
            problem = _content_problem(self.tag, bytes(self.value))
            if problem:
                raise UnsupportedConstruct(problem)
            object.__setattr__(self, "value", bytes(self.value))

    @property
    def children(self) -> tuple:
        if not is_constructed(self.tag):
            raise TypeError("primitive DER value has no children")
        return self.value

    def expect(self, tag: int, count: int | None = None) -> "DerValue":
        if self.tag != tag:
            raise ValueError(f"expected tag 0x{tag:02x}, found 0x{self.tag:02x}")
        if count is not None and len(self.value) != count:
            raise ValueError(f"expected {count} elements, found {len(self.value)}")
        return self

    def as_int(self) -> int:
        return int.from_bytes(self.expect(INTEGER).value, "big", signed=True)

    def as_bytes(self) -> bytes:
        return self.expect(OCTET_STRING).value

    def as_bits(self) -> bytes:
        return self.expect(BIT_STRING).value[1:]

    def as_text(self) -> str:
        return self.expect(UTF8).value.decode("utf-8")

    def as_time(self) -> int:
        return _parse_time(self.expect(GENERALIZED_TIME).value)

    def as_oid(self) -> str:
        content = self.expect(OID).value
        arcs, acc = [], 0
        for byte in content:
            acc = (acc << 7) | (byte & 0x7F)
            if not byte & 0x80:
                arcs.append(acc)
                acc = 0
        first = arcs[0]
        if first < 40:
            head = [0, first]
        elif first < 80:
            head = [1, first - 40]
        else:
            head = [2, first - 80]
        return ".".join(str(a) for a in head + arcs[1:])


# -- constructors --------------------------------------------------------------

def integer(n: int) -> DerValue:
    length = max(1, (n + (n < 0)).bit_length() // 8 + 1)
    return DerValue(INTEGER, n.to_bytes(length, "big", signed=True))


def octets(b: bytes) -> DerValue:
    return DerValue(OCTET_STRING, bytes(b))


def bits(b: bytes) -> DerValue:
    return DerValue(BIT_STRING, b"\x00" + bytes(b))


def utf8(s: str) -> DerValue:
    return DerValue(UTF8, s.encode("utf-8"))


def gentime(epoch: int) -> DerValue:
    if not 0 <= epoch <= MAX_EPOCH:
        raise ValueError(f"epoch {epoch} not representable as GeneralizedTime")
    return DerValue(GENERALIZED_TIME, time.strftime("%Y%m%d%H%M%SZ", time.gmtime(epoch)).encode())


@functools.lru_cache(maxsize=1024)
def oid(dotted: str) -> DerValue:
    arcs = [int(a) for a in dotted.split(".")]
    if len(arcs) < 2 or min(arcs) < 0 or arcs[0] > 2 or (arcs[0] < 2 and arcs[1] >= 40):
        raise ValueError(f"invalid OID {dotted}")
    out = bytearray()
    for arc in [arcs[0] * 40 + arcs[1]] + arcs[2:]:
        chunk = [arc & 0x7F]
        arc >>= 7
        while arc:
            chunk.append(0x80 | (arc & 0x7F))
            arc >>= 7
        out.extend(reversed(chunk))
    return DerValue(OID, bytes(out))


def seq(*items: DerValue) -> DerValue:
    return DerValue(SEQUENCE, items)


def set_of(*items: DerValue) -> DerValue:
    return DerValue(SET, items)


def explicit(number: int, *items: DerValue) -> DerValue:
    return DerValue(context_tag(number), items)


# -- encoding ------------------------------------------------------------------

def memoized(method):
    """Cache a zero-argument method's result on a frozen instance."""
    slot = f"_memo_{method.__name__}"

    @functools.wraps(method)
    def wrapper(self):
        cached = self.__dict__.get(slot)
        if cached is None:
            cached = method(self)
            object.__setattr__(self, slot, cached)
        return cached

    return wrapper


def _length_bytes(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(body)]) + body


def header(tag: int, length: int) -> bytes:
    return bytes([tag]) + _length_bytes(length)


def der_encode(v: DerValue) -> bytes:
    cached = v.__dict__.get("_encoding")
    if cached is not None:
        return cached
    if is_constructed(v.tag):
        content = b"".join(der_encode(c) for c in v.value)
    else:
        content = v.value
    if len(content) > MAX_ELEMENT_SIZE:
        raise UnsupportedConstruct("element exceeds the 1 MiB size limit")
    encoding = header(v.tag, len(content)) + content
    object.__setattr__(v, "_encoding", encoding)  # values are immutable, so the encoding is too
    return encoding


def encode_all(items: Iterable[DerValue]) -> bytes:
    return b"".join(der_encode(i) for i in items)


# -- decoding ------------------------------------------------------------------

def read_header(b: bytes, pos: int, end: int | None = None) -> tuple[int, int, int]:
    """Parse the tag and length at ``pos``; return (tag, content_start, content_end)."""
    if end is None:
        end = len(b)
    if pos >= end:
        raise MalformedDer(min(pos, max(len(b) - 1, 0)), "unexpected end of data")
    tag = b[pos]
    if not _tag_supported(tag):
        raise MalformedDer(pos, f"unsupported tag 0x{tag:02x}")
    if pos + 1 >= end:
        raise MalformedDer(pos, "missing length")
    first = b[pos + 1]
    cursor = pos + 2
    if first < 0x80:
        length = first
    elif first == 0x80:
        raise MalformedDer(pos + 1, "indefinite length")
    else:
        count = first & 0x7F
        if count > 4:
            raise MalformedDer(pos + 1, "length field too long")
        if cursor + count > end:
            raise MalformedDer(pos + 1, "truncated length")
        raw = b[cursor:cursor + count]
        if raw[0] == 0:
            raise MalformedDer(pos + 1, "non-minimal length")
        length = int.from_bytes(raw, "big")
        if length < 0x80:
            raise MalformedDer(pos + 1, "non-minimal length")
        cursor += count
    if length > MAX_ELEMENT_SIZE:
        raise MalformedDer(pos, "element exceeds the 1 MiB size limit")
    if cursor + length > end:
        raise MalformedDer(pos, "content runs past enclosing length")
    return tag, cursor, cursor + length


def _decoded(tag: int, value, encoding: bytes) -> DerValue:
    # the decoder has already enforced every check __post_init__ would repeat
    v = object.__new__(DerValue)
    object.__setattr__(v, "tag", tag)
    object.__setattr__(v, "value", value)
    object.__setattr__(v, "_encoding", encoding)
    return v


def _decode_at(b: bytes, pos: int, end: int, depth: int) -> tuple[DerValue, int]:
    if depth > MAX_DEPTH:
        raise MalformedDer(pos, "nesting deeper than 32 levels")
    tag, start, stop = read_header(b, pos, end)
    if not is_constructed(tag):
        content = bytes(b[start:stop])
        problem = _content_problem(tag, content)
        if problem:
            raise MalformedDer(pos, problem)
        return _decoded(tag, content, b[pos:stop]), stop
    children = []
    previous = None
    cursor = start
    while cursor < stop:
        child, nxt = _decode_at(b, cursor, stop, depth + 1)
        if tag == SET:
            encoded = b[cursor:nxt]
            if previous is not None and encoded < previous:
                raise MalformedDer(cursor, "SET elements not in DER order")
            previous = encoded
        children.append(child)
        cursor = nxt
    return _decoded(tag, tuple(children), b[pos:stop]), stop


def der_decode(b: bytes) -> DerValue:
    """Strictly parse exactly one DER element spanning all of ``b``."""
    b = bytes(b)
    value, end = _decode_at(b, 0, len(b), 1)
    if end != len(b):
        raise MalformedDer(end, "trailing bytes after element")
    return value


def decode_prefix(b: bytes, pos: int, end: int | None = None) -> tuple[DerValue, int]:
    """Parse one element starting at ``pos``; return it and the offset just past it."""
    return _decode_at(b, pos, len(b) if end is None else end, 1)
