"""Independent reference implementations the tests check against.

These deliberately avoid the production code paths: placement is a plain
sort over the whole candidate set, membership is a brute-force replay, and
linearizability is an exhaustive search over permutations.
"""

from __future__ import annotations

import hashlib
from itertools import permutations


def ring_position(ident: bytes, ring_bits: int) -> int:
    return int.from_bytes(hashlib.sha256(ident).digest(), "big") >> (256 - ring_bits)


def brute_force_successors(target: bytes, nodes, n: int, ring_bits: int) -> list[bytes]:
    modulus = 1 << ring_bits
    t = ring_position(target, ring_bits)
    ranked = sorted(nodes, key=lambda s: ((ring_position(s, ring_bits) - t) % modulus, s))
    return ranked[:n]


def brute_force_predecessors(nodes, target: bytes, n: int, ring_bits: int) -> list[bytes]:
    modulus = 1 << ring_bits
    t = ring_position(target, ring_bits)
    ranked = sorted(nodes, key=lambda s: ((t - ring_position(s, ring_bits)) % modulus, s))
    return ranked[:n]


def replay_active(changes) -> set[bytes]:
    joined: set[bytes] = set()
    left: set[bytes] = set()
    for sign, node in changes:
        if sign == "+":
            joined.add(node)
        else:
            left.add(node)
    return joined - left


def linearizable_register(ops) -> bool:
    """Exhaustive linearization search for one object's read/write history.

    ops: list of (kind, invoke, respond, tag, digest) with unique write tags.
    The initial value has tag (0, "") and digest "bot".  Only practical for
    small histories; serves as the independent oracle for the checker.
    """
    n = len(ops)
    if n > 8:
        raise ValueError("exhaustive oracle is for small histories only")
    for perm in permutations(range(n)):
        # real-time order must be respected
        ok = True
        for a in range(n):
            for b in range(n):
                if ops[a][2] < ops[b][1] and perm.index(a) > perm.index(b):
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        # register semantics along the permutation
        current = ((0, ""), "bot")
        legal = True
        for idx in perm:
            kind, _, _, tag, digest = ops[idx]
            if kind == "write":
                current = (tag, digest)
            else:
                if (tag, digest) != current:
                    legal = False
                    break
        if legal:
            return True
    return False
