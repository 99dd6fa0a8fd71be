"""Consistent-hashing placement: clockwise distance, successor/predecessor selection.

Objects and nodes share one ring; an object's data lives on the n active
nodes whose hashed positions minimize the clockwise distance from the
object's position (its n closest successors).  Ties in distance are broken
by node-id order, which the strict-inequality definition of the selection
leaves open.  A node may select itself when computing responsibility for an
object that hashes onto it.
"""

from __future__ import annotations

from typing import Iterable

from .errors import InsufficientNodes
from .identity import NodeId, ring_hash


def distance(a: int, b: int, modulus: int) -> int:
    """Clockwise ring distance from a to b: (b - a) mod modulus."""
    return (b - a) % modulus


def successors_by_pos(target: int, positions: dict[NodeId, int], n: int, modulus: int) -> list[NodeId]:
    """The n ids minimizing distance(target, pos), ascending, ties by id."""
    if len(positions) < n:
        raise InsufficientNodes(f"need {n} nodes, have {len(positions)}")
    ranked = sorted(positions, key=lambda s: (distance(target, positions[s], modulus), s))
    return ranked[:n]


def predecessors_by_pos(target: int, positions: dict[NodeId, int], n: int, modulus: int) -> list[NodeId]:
    """Mirror of successors_by_pos with distance measured from the node to the target."""
    if len(positions) < n:
        raise InsufficientNodes(f"need {n} nodes, have {len(positions)}")
    ranked = sorted(positions, key=lambda s: (distance(positions[s], target, modulus), s))
    return ranked[:n]


class Ring:
    """Position cache plus the D_suc / D_pre selection functions over node sets."""

    def __init__(self, ring_bits: int = 256):
        self.ring_bits = ring_bits
        self.modulus = 1 << ring_bits
        self._pos: dict[NodeId, int] = {}

    def position(self, ident: bytes) -> int:
        pos = self._pos.get(ident)
        if pos is None:
            pos = ring_hash(ident, self.ring_bits)
            self._pos[ident] = pos
        return pos

    def _positions(self, nodes: Iterable[NodeId]) -> dict[NodeId, int]:
        return {s: self.position(s) for s in nodes}

    def closest_successors(self, target: bytes, nodes: Iterable[NodeId], n: int) -> list[NodeId]:
        """D_suc: the n nodes closest clockwise after the target identifier's position."""
        return successors_by_pos(self.position(target), self._positions(nodes), n, self.modulus)

    def closest_predecessors(self, nodes: Iterable[NodeId], target: bytes, n: int) -> list[NodeId]:
        """D_pre: the n nearest predecessors of the target identifier's position."""
        return predecessors_by_pos(self.position(target), self._positions(nodes), n, self.modulus)

    def neighbors(self, node: NodeId, nodes: Iterable[NodeId], n: int) -> list[NodeId]:
        """D_suc(f, S) union D_pre(S, f), excluding f itself; between n and 2n ids."""
        others = [s for s in nodes if s != node]
        take = min(n, len(others))
        suc = self.closest_successors(node, others, take)
        pre = self.closest_predecessors(others, node, take)
        return sorted(set(suc) | set(pre))
