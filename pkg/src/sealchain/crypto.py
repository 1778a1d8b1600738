"""SHA-256 and ECDSA over secp256r1, plus the 160-byte P256VERIFY precompile.

Point arithmetic uses Jacobian coordinates (a = -3 doubling formulas). The
generator has a lazily built 8-bit fixed-window table. Other points use
width-5 wNAF the first time they are seen and a cached 4-bit window table
after that. Signing nonces are derived deterministically per RFC 6979.
"""

from __future__ import annotations

import functools
import hashlib
import hmac
import secrets
from dataclasses import dataclass

from . import der

P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5

PRECOMPILE_INPUT_LENGTH = 160
PRECOMPILE_SUCCESS = bytes(31) + b"\x01"
PRECOMPILE_GAS = 3450

OID_SHA256 = "2.16.840.1.101.3.4.2.1"
OID_ECDSA_WITH_SHA256 = "1.2.840.10045.4.3.2"


@dataclass(frozen=True)
class SuiteDescriptor:
    format: str
    hash: str
    signature_algorithm: str
    curve: str


SUITE = SuiteDescriptor(format="CAdES", hash="SHA-256", signature_algorithm="EC-DSA", curve="secp256r1")


def suite_info() -> SuiteDescriptor:
    return SUITE


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# -- curve arithmetic ----------------------------------------------------------

_INF = (1, 1, 0)


def on_curve(x: int, y: int) -> bool:
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - (x * x * x + A * x + B)) % P == 0


def _double(pt):
    x1, y1, z1 = pt
    if z1 == 0 or y1 == 0:
        return _INF
    delta = z1 * z1 % P
    gamma = y1 * y1 % P
    beta = x1 * gamma % P
    alpha = 3 * (x1 - delta) * (x1 + delta) % P
    x3 = (alpha * alpha - 8 * beta) % P
    z3 = ((y1 + z1) ** 2 - gamma - delta) % P
    y3 = (alpha * (4 * beta - x3) - 8 * gamma * gamma) % P
    return (x3, y3, z3)


def _add(p1, p2):
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    if z1 == 0:
        return p2
    if z2 == 0:
        return p1
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    u1 = x1 * z2z2 % P
    u2 = x2 * z1z1 % P
    s1 = y1 * z2 * z2z2 % P
    s2 = y2 * z1 * z1z1 % P
    h = (u2 - u1) % P
    r = (s2 - s1) % P
    if h == 0:
        return _double(p1) if r == 0 else _INF
    hh = h * h % P
    hhh = h * hh % P
    v = u1 * hh % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - s1 * hhh) % P
    z3 = z1 * z2 * h % P
    return (x3, y3, z3)


def _add_affine(p1, x2, y2):
    x1, y1, z1 = p1
    if z1 == 0:
        return (x2, y2, 1)
    z1z1 = z1 * z1 % P
    u2 = x2 * z1z1 % P
    s2 = y2 * z1 * z1z1 % P
    h = (u2 - x1) % P
    r = (s2 - y1) % P
    if h == 0:
        return _double(p1) if r == 0 else _INF
    hh = h * h % P
    hhh = h * hh % P
    v = x1 * hh % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - y1 * hhh) % P
    z3 = z1 * h % P
    return (x3, y3, z3)


def _to_affine(pt):
    x, y, z = pt
    if z == 0:
        return None
    zi = pow(z, -1, P)
    zi2 = zi * zi % P
    return (x * zi2 % P, y * zi2 * zi % P)


def _batch_affine(points):
    """Jacobian points (none at infinity) to affine with a single inversion."""
    prefix, acc = [], 1
    for _, _, z in points:
        prefix.append(acc)
        acc = acc * z % P
    inv = pow(acc, -1, P)
    out = [None] * len(points)
    for i in range(len(points) - 1, -1, -1):
        x, y, z = points[i]
        zi = inv * prefix[i] % P
        inv = inv * z % P
        zi2 = zi * zi % P
        out[i] = (x * zi2 % P, y * zi2 * zi % P)
    return out


def _window_table(x: int, y: int, width: int):
    """table[i][j] = (j+1) * 2**(width*i) * (x, y), affine."""
    size = (1 << width) - 1
    rows, flat, base = 256 // width, [], (x, y, 1)
    for _ in range(rows):
        acc = base
        for _ in range(size):
            flat.append(acc)
            acc = _add(acc, base)
        base = acc
    flat = _batch_affine(flat)
    return [flat[i * size:(i + 1) * size] for i in range(rows)]


def _mul_table(table, width: int, k: int):
    mask, acc = (1 << width) - 1, _INF
    for row in table:
        digit = k & mask
        if digit:
            px, py = row[digit - 1]
            acc = _add_affine(acc, px, py)
        k >>= width
    return acc


@functools.lru_cache(maxsize=1)
def _generator_table():
    return _window_table(GX, GY, 8)


def _mul_generator(k: int):
    return _mul_table(_generator_table(), 8, k)


@functools.lru_cache(maxsize=64)
def _point_table(x: int, y: int):
    return _window_table(x, y, 4)


# keys verified more than once get a precomputed table; one-off keys skip the setup cost
_point_uses: dict = {}


def _wnaf(k: int, width: int = 5) -> list:
    digits = []
    half, full = 1 << (width - 1), 1 << width
    while k:
        if k & 1:
            d = k % full
            if d >= half:
                d -= full
            k -= d
        else:
            d = 0
        digits.append(d)
        k >>= 1
    return digits


def _mul_point(k: int, x: int, y: int):
    uses = _point_uses.get((x, y), 0)
    if uses:
        return _mul_table(_point_table(x, y), 4, k)
    if len(_point_uses) > 4096:
        _point_uses.clear()
    _point_uses[(x, y)] = 1
    return _mul_point_wnaf(k, x, y)


def _mul_point_wnaf(k: int, x: int, y: int):
    base = (x, y, 1)
    twice = _double(base)
    odd = [base]
    for _ in range(7):
        odd.append(_add(odd[-1], twice))
    neg = [(px, (-py) % P, pz) for px, py, pz in odd]
    acc = _INF
    for d in reversed(_wnaf(k)):
        acc = _double(acc)
        if d > 0:
            acc = _add(acc, odd[d >> 1])
        elif d < 0:
            acc = _add(acc, neg[(-d) >> 1])
    return acc


def scalar_mult(k: int, point: tuple[int, int] | None = None) -> tuple[int, int] | None:
    """k * point (default the generator) in affine form, or None at infinity."""
    k %= N
    if k == 0:
        return None
    if point is None:
        return _to_affine(_mul_generator(k))
    return _to_affine(_mul_point(k, *point))


# -- key and signature types ---------------------------------------------------

@dataclass(frozen=True)
class PublicPoint:
    x: int
    y: int

    def __post_init__(self):
        if not on_curve(self.x, self.y):
            raise ValueError("point is not on secp256r1")

    def encode(self) -> bytes:
        """Raw 64-byte qx || qy, the layout the precompile consumes."""
        return self.x.to_bytes(32, "big") + self.y.to_bytes(32, "big")

    @classmethod
    def decode(cls, b: bytes) -> "PublicPoint":
        if len(b) != 64:
            raise ValueError("public point encoding must be 64 bytes")
        return cls(int.from_bytes(b[:32], "big"), int.from_bytes(b[32:], "big"))

    def digest(self) -> bytes:
        return sha256(self.encode())


@dataclass(frozen=True, repr=False)
class PrivateScalar:
    value: int

    def __post_init__(self):
        if not 1 <= self.value < N:
            raise ValueError("private scalar out of range")

    def __repr__(self):
        return "PrivateScalar(<hidden>)"

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, b: bytes) -> "PrivateScalar":
        if len(b) != 32:
            raise ValueError("private scalar must be 32 bytes")
        return cls(int.from_bytes(b, "big"))

    def public_point(self) -> PublicPoint:
        return PublicPoint(*scalar_mult(self.value))


@dataclass(frozen=True)
class EcdsaSignature:
    """(r, s) pair. Range is checked by consumers, not on construction."""

    r: int
    s: int

    def in_range(self) -> bool:
        return 1 <= self.r < N and 1 <= self.s < N

    def to_bytes(self) -> bytes:
        return self.r.to_bytes(32, "big") + self.s.to_bytes(32, "big")

    @der.memoized
    def to_der_value(self) -> der.DerValue:
        return der.seq(der.integer(self.r), der.integer(self.s))

    def to_der(self) -> bytes:
        return der.der_encode(self.to_der_value())

    @classmethod
    def from_der_value(cls, v: der.DerValue) -> "EcdsaSignature":
        r, s = v.expect(der.SEQUENCE, 2).children
        sig = cls(r.as_int(), s.as_int())
        if not sig.in_range():
            raise ValueError("signature component out of range")
        return sig

    @classmethod
    def from_der(cls, b: bytes) -> "EcdsaSignature":
        return cls.from_der_value(der.der_decode(b))


def keygen(seed: bytes | None = None) -> tuple[PrivateScalar, PublicPoint]:
    """Generate a keypair; a 32-byte seed makes the result deterministic."""
    if seed is None:
        while True:
            d = int.from_bytes(secrets.token_bytes(32), "big")
            if 1 <= d < N:
                break
    else:
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        counter = 0
        while True:
            candidate = hmac.new(seed, b"p256-keygen" + counter.to_bytes(4, "big"), hashlib.sha256).digest()
            d = int.from_bytes(candidate, "big")
            if 1 <= d < N:
                break
            counter += 1
    key = PrivateScalar(d)
    return key, key.public_point()


# -- ECDSA ---------------------------------------------------------------------

def _bits2int(b: bytes) -> int:
    v = int.from_bytes(b, "big")
    excess = 8 * len(b) - 256
    return v >> excess if excess > 0 else v


def _rfc6979_nonces(d: int, digest: bytes):
    x = d.to_bytes(32, "big")
    h1 = (_bits2int(digest) % N).to_bytes(32, "big")
    v = b"\x01" * 32
    k = b"\x00" * 32
    k = hmac.new(k, v + b"\x00" + x + h1, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    k = hmac.new(k, v + b"\x01" + x + h1, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    while True:
        v = hmac.new(k, v, hashlib.sha256).digest()
        candidate = _bits2int(v)
        if 1 <= candidate < N:
            yield candidate
        k = hmac.new(k, v + b"\x00", hashlib.sha256).digest()
        v = hmac.new(k, v, hashlib.sha256).digest()


def sign_digest(key: PrivateScalar, digest: bytes) -> EcdsaSignature:
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes")
    e = _bits2int(digest)
    for k in _rfc6979_nonces(key.value, digest):
        rx, _ = _to_affine(_mul_generator(k))
        r = rx % N
        if r == 0:
            continue
        s = pow(k, -1, N) * (e + r * key.value) % N
        if s == 0:
            continue
        return EcdsaSignature(r, s)


def _verify(qx: int, qy: int, digest: bytes, r: int, s: int) -> bool:
    if not (1 <= r < N and 1 <= s < N):
        return False
    if not on_curve(qx, qy):
        return False
    e = _bits2int(digest)
    w = pow(s, -1, N)
    acc = _add(_mul_generator(e * w % N), _mul_point(r * w % N, qx, qy))
    affine = _to_affine(acc)
    if affine is None:
        return False
    return affine[0] % N == r


def verify_digest(pub: PublicPoint, digest: bytes, sig: EcdsaSignature) -> bool:
    """Plain ECDSA verification; both s and n-s are accepted."""
    try:
        if len(digest) != 32:
            return False
        return _verify(pub.x, pub.y, digest, sig.r, sig.s)
    except (AttributeError, TypeError):
        return False


def precompile_input(digest: bytes, sig: EcdsaSignature, pub: PublicPoint) -> bytes:
    return digest + sig.to_bytes() + pub.encode()


def precompile_p256verify(data: bytes) -> bytes:
    """P256VERIFY: 32-byte 0x..01 on success, empty output on any failure."""
    if len(data) != PRECOMPILE_INPUT_LENGTH:
        return b""
    digest = data[:32]
    r = int.from_bytes(data[32:64], "big")
    s = int.from_bytes(data[64:96], "big")
    qx = int.from_bytes(data[96:128], "big")
    qy = int.from_bytes(data[128:160], "big")
    if _verify(qx, qy, digest, r, s):
        return PRECOMPILE_SUCCESS
    return b""
