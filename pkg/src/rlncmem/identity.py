"""Node identities, ring hashing, and the keyed-MAC sign/verify scheme.

Node ids are opaque byte strings, totally ordered by octet comparison.  The
signing scheme is simulation grade: a trusted in-harness directory holds one
MAC key per registered node and hands each node a Signer bound to its own id,
so no state machine (Byzantine ones included) can emit a signature for a key
it does not hold.  The directory interface is the contract; a real asymmetric
scheme can replace it without protocol changes.
"""

from __future__ import annotations

import hashlib
import hmac

from .errors import UnknownSigner

NodeId = bytes

SIG_BYTES = 32


def ring_hash(ident: bytes, ring_bits: int = 256) -> int:
    """Deterministic position of an identifier on the 2**ring_bits ring."""
    if not 4 <= ring_bits <= 256:
        raise ValueError(f"ring_bits must be in [4, 256], got {ring_bits}")
    digest = hashlib.sha256(ident).digest()
    return int.from_bytes(digest, "big") >> (256 - ring_bits)


def entry_signing_bytes(z: int, w: bytes, coeffs: bytes, payload: bytes) -> bytes:
    """Canonical octets signed for a tag / coded-element pair.

    Fixed layout (tag.z big-endian 8 octets, then tag.w, coefficients,
    payload) so verification is bit-stable across nodes.
    """
    return z.to_bytes(8, "big") + w + coeffs + payload


def change_signing_bytes(sign: str, node: NodeId) -> bytes:
    return sign.encode() + node


class Signer:
    """Signing capability bound to a single node id."""

    __slots__ = ("node", "_key")

    def __init__(self, node: NodeId, key: bytes):
        self.node = node
        self._key = key

    def sign(self, msg: bytes) -> bytes:
        return hmac.new(self._key, msg, hashlib.sha256).digest()


class KeyDirectory:
    """Trusted key holder: registers nodes, hands out Signers, verifies."""

    def __init__(self, secret: bytes = b"key-directory"):
        self._secret = secret
        self._keys: dict[NodeId, bytes] = {}

    def register(self, node: NodeId) -> Signer:
        key = self._keys.get(node)
        if key is None:
            key = hmac.new(self._secret, node, hashlib.sha256).digest()
            self._keys[node] = key
        return Signer(node, key)

    def is_registered(self, node: NodeId) -> bool:
        return node in self._keys

    def verify(self, node: NodeId, msg: bytes, sig: bytes) -> bool:
        key = self._keys.get(node)
        if key is None:
            raise UnknownSigner(node)
        return hmac.compare_digest(hmac.new(key, msg, hashlib.sha256).digest(), sig)
