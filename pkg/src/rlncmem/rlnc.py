"""Random linear network codec over GF(256): encode, decode, recode, rank.

A value is framed with an 8-octet big-endian length prefix, zero-padded to a
multiple of k, and split into k fragments.  Each coded element is one random
coefficient row together with that row applied fragment-wise, so element
payloads are ceil((len(value)+8)/k) octets.  k = 1 degenerates to plain
replication with the constant coefficient 1.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from . import gf256
from .errors import InvalidInput, RankDeficient

LENGTH_PREFIX = 8


@dataclass(frozen=True)
class EncodingParams:
    """[n, k] code: n coded elements produced, any k independent ones decode."""

    n: int
    k: int

    def __post_init__(self) -> None:
        if self.k < 1 or self.n < self.k:
            raise InvalidInput(f"need n >= k >= 1, got n={self.n} k={self.k}")


@dataclass(frozen=True)
class CodedElement:
    """One coefficient row paired with the row applied to the value fragments."""

    coeffs: bytes
    payload: bytes

    def wire_size(self) -> int:
        return len(self.coeffs) + len(self.payload)


def _frame(value: bytes, k: int) -> np.ndarray:
    data = len(value).to_bytes(LENGTH_PREFIX, "big") + value
    if len(data) % k:
        data += b"\x00" * (k - len(data) % k)
    return np.frombuffer(data, dtype=np.uint8).reshape(k, -1)


def _unframe(data: bytes) -> bytes:
    length = int.from_bytes(data[:LENGTH_PREFIX], "big")
    if length > len(data) - LENGTH_PREFIX:
        raise RankDeficient("decoded frame is inconsistent with its length prefix")
    return data[LENGTH_PREFIX : LENGTH_PREFIX + length]


def encode(value: bytes, params: EncodingParams, seed: int) -> list[CodedElement]:
    """Encode value into params.n coded elements using a seeded uniform coefficient draw."""
    if not value:
        raise InvalidInput("cannot encode an empty value")
    k, n = params.k, params.n
    fragments = _frame(value, k)
    if k == 1:
        payload = fragments.tobytes()
        return [CodedElement(b"\x01", payload) for _ in range(n)]
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        row = bytes(rng.randrange(256) for _ in range(k))
        acc = np.zeros(fragments.shape[1], dtype=np.uint8)
        for j, a in enumerate(row):
            gf256.addmul_vec(acc, a, fragments[j])
        out.append(CodedElement(row, acc.tobytes()))
    return out


def _check_generation(elements: list[CodedElement]) -> tuple[int, int]:
    if not elements:
        raise InvalidInput("no coded elements given")
    k = len(elements[0].coeffs)
    m = len(elements[0].payload)
    for e in elements:
        if len(e.coeffs) != k or len(e.payload) != m:
            raise InvalidInput("coded elements disagree on coefficient or payload length")
    return k, m


def decode(elements: list[CodedElement] | set[CodedElement], k: int) -> bytes:
    """Gaussian elimination over GF(256); needs coefficient rank k to recover the value."""
    elems = sorted(set(elements), key=lambda e: (e.coeffs, e.payload))
    got_k, _ = _check_generation(elems)
    if got_k != k:
        raise InvalidInput(f"elements carry {got_k} coefficients, expected k={k}")
    a = np.array([list(e.coeffs) for e in elems], dtype=np.uint8)
    p = np.array([list(e.payload) for e in elems], dtype=np.uint8)
    rows = len(elems)
    pivot_row = 0
    for col in range(k):
        pivot = None
        for r in range(pivot_row, rows):
            if a[r, col]:
                pivot = r
                break
        if pivot is None:
            raise RankDeficient(f"coefficient rank < {k}")
        if pivot != pivot_row:
            a[[pivot_row, pivot]] = a[[pivot, pivot_row]]
            p[[pivot_row, pivot]] = p[[pivot, pivot_row]]
        piv_inv = gf256.inv(int(a[pivot_row, col]))
        a[pivot_row] = gf256.scale_vec(piv_inv, a[pivot_row])
        p[pivot_row] = gf256.scale_vec(piv_inv, p[pivot_row])
        for r in range(rows):
            if r != pivot_row and a[r, col]:
                factor = int(a[r, col])
                gf256.addmul_vec(a[r], factor, a[pivot_row])
                gf256.addmul_vec(p[r], factor, p[pivot_row])
        pivot_row += 1
        if pivot_row == k:
            break
    if pivot_row < k:
        raise RankDeficient(f"coefficient rank {pivot_row} < {k}")
    return _unframe(p[:k].tobytes())


def combine(elements: list[CodedElement], scalars: list[int]) -> CodedElement:
    """Deterministic linear combination sum(scalars[j] * elements[j])."""
    if len(elements) != len(scalars) or not elements:
        raise InvalidInput("combine needs one scalar per element")
    k, m = _check_generation(elements)
    coeffs = np.zeros(k, dtype=np.uint8)
    payload = np.zeros(m, dtype=np.uint8)
    for s, e in zip(scalars, elements):
        gf256.addmul_vec(coeffs, s, np.frombuffer(e.coeffs, dtype=np.uint8))
        gf256.addmul_vec(payload, s, np.frombuffer(e.payload, dtype=np.uint8))
    return CodedElement(coeffs.tobytes(), payload.tobytes())


def draw_scalars(count: int, seed: int, k: int, rows) -> list[int]:
    """One uniform scalar per input; redrawn on the degenerate all-zero-row draw."""
    rng = random.Random(seed)
    while True:
        scalars = [rng.randrange(256) for _ in range(count)]
        acc = np.zeros(k, dtype=np.uint8)
        for s, row in zip(scalars, rows):
            gf256.addmul_vec(acc, s, np.frombuffer(row, dtype=np.uint8))
        if acc.any():
            return scalars


def recode(elements: list[CodedElement] | set[CodedElement], seed: int) -> CodedElement:
    """Random linear combination of the inputs; the result stays in their row span."""
    element, _scalars = recode_with_proof(elements, seed)
    return element


def recode_with_proof(
    elements: list[CodedElement] | set[CodedElement], seed: int
) -> tuple[CodedElement, tuple[tuple[CodedElement, ...], tuple[int, ...]]]:
    """Recode and also return the ordered inputs and scalars used, for provenance."""
    elems = sorted(set(elements), key=lambda e: (e.coeffs, e.payload))
    k, _ = _check_generation(elems)
    scalars = draw_scalars(len(elems), seed, k, [e.coeffs for e in elems])
    return combine(elems, scalars), (tuple(elems), tuple(scalars))


def rank(elements: list[CodedElement] | set[CodedElement]) -> int:
    """Rank of the coefficient matrix over GF(256)."""
    rows = sorted({e.coeffs for e in elements})
    if not rows:
        return 0
    k = len(rows[0])
    for row in rows:
        if len(row) != k:
            raise InvalidInput("coded elements disagree on coefficient length")
    if k == 0:
        return 0
    a = np.array([list(row) for row in rows], dtype=np.uint8)
    nrows = a.shape[0]
    r = 0
    for col in range(k):
        pivot = None
        for i in range(r, nrows):
            if a[i, col]:
                pivot = i
                break
        if pivot is None:
            continue
        if pivot != r:
            a[[r, pivot]] = a[[pivot, r]]
        piv_inv = gf256.inv(int(a[r, col]))
        a[r] = gf256.scale_vec(piv_inv, a[r])
        for i in range(r + 1, nrows):
            if a[i, col]:
                gf256.addmul_vec(a[i], int(a[i, col]), a[r])
        r += 1
        if r == min(nrows, k):
            break
    return r
