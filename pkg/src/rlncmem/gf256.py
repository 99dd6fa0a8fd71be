"""GF(2^8) arithmetic with the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D).

Elements are octets; addition is XOR, multiplication goes through log/exp
tables built from the primitive element 2.  Scalar helpers work on ints,
vector helpers on numpy uint8 arrays so payload-sized operands stay cheap.
"""

from __future__ import annotations

import numpy as np

REDUCTION_POLY = 0x11D
ORDER = 256

_EXP = np.zeros(512, dtype=np.uint8)
_LOG = np.zeros(256, dtype=np.int32)


def _build_tables() -> None:
    x = 1
    for i in range(255):
        _EXP[i] = x
        _LOG[x] = i
        x <<= 1
        if x & 0x100:
            x ^= REDUCTION_POLY
    for i in range(255, 512):
        _EXP[i] = _EXP[i - 255]


_build_tables()

# Plain-int views for scalar arithmetic (cheaper than numpy item access).
_EXP_I = [int(v) for v in _EXP]
_LOG_I = [int(v) for v in _LOG]


def add(a: int, b: int) -> int:
    return a ^ b


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP_I[_LOG_I[a] + _LOG_I[b]]


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return _EXP_I[255 - _LOG_I[a]]


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def scale_vec(a: int, v: np.ndarray) -> np.ndarray:
    """Return a*v element-wise; v is a uint8 array."""
    if a == 0:
        return np.zeros_like(v)
    if a == 1:
        return v.copy()
    out = _EXP[_LOG_I[a] + _LOG[v]].astype(np.uint8)
    out[v == 0] = 0
    return out


def addmul_vec(dst: np.ndarray, a: int, v: np.ndarray) -> None:
    """In place dst ^= a*v."""
    if a == 0:
        return
    if a == 1:
        np.bitwise_xor(dst, v, out=dst)
        return
    prod = _EXP[_LOG_I[a] + _LOG[v]].astype(np.uint8)
    prod[v == 0] = 0
    np.bitwise_xor(dst, prod, out=dst)


def mul_table() -> np.ndarray:
    """Full 256x256 multiplication table, for exhaustive-axiom checks."""
    a = np.arange(256, dtype=np.int32)
    out = _EXP[(_LOG[a][:, None] + _LOG[a][None, :]) % 255].astype(np.uint8)
    out[0, :] = 0
    out[:, 0] = 0
    return out
