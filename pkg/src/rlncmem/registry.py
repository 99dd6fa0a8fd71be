"""Membership registry: a sequentially consistent log of signed join/depart changes.

One logically centralized service behind a two-operation interface (add, get)
with Total Order, Validity, and Inclusion semantics.  The harness talks to it
through request/response messages; this module is the state.  A depart is
rejected whenever it would drop the active set below the coded replication
factor, which keeps |active| >= n in every admissible execution.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BadSignature, DuplicateChange, MembershipFloor
from .identity import KeyDirectory, NodeId, change_signing_bytes

ADD = "+"
REMOVE = "-"


@dataclass(frozen=True)
class Change:
    """Signed membership record: ('+' or '-', node id, signature by that node)."""

    sign: str
    node: NodeId
    sig: bytes

    def wire_size(self) -> int:
        return 1 + len(self.node) + len(self.sig)


ChangeSet = tuple[Change, ...]


def make_change(sign: str, node: NodeId, signer) -> Change:
    return Change(sign, node, signer.sign(change_signing_bytes(sign, node)))


def verify_change(directory: KeyDirectory, change: Change) -> bool:
    if not directory.is_registered(change.node):
        return False
    return directory.verify(change.node, change_signing_bytes(change.sign, change.node), change.sig)


def active(changes: ChangeSet) -> set[NodeId]:
    """{s : <+,s> present and <-,s> absent}."""
    added = {c.node for c in changes if c.sign == ADD}
    removed = {c.node for c in changes if c.sign == REMOVE}
    return added - removed


class MembershipRegistry:
    """The oracle state: an append-only total-order log of verified changes."""

    def __init__(self, directory: KeyDirectory, floor_n: int):
        self.directory = directory
        self.floor_n = floor_n
        self._log: list[Change] = []
        self._seen: set[tuple[str, NodeId]] = set()

    def bootstrap(self, members: list[NodeId]) -> None:
        """Install the initial membership as pre-signed additions at position 0."""
        for node in members:
            signer = self.directory.register(node)
            change = make_change(ADD, node, signer)
            self._log.append(change)
            self._seen.add((ADD, node))

    def add(self, change: Change) -> int:
        """Append one change atomically; returns its total-order position."""
        key = (change.sign, change.node)
        if key in self._seen:
            raise DuplicateChange(key)
        if change.sign not in (ADD, REMOVE):
            raise BadSignature(f"unknown change sign {change.sign!r}")
        if not verify_change(self.directory, change):
            raise BadSignature(change.node)
        if change.sign == REMOVE:
            if (ADD, change.node) not in self._seen:
                raise BadSignature(f"remove without prior add for {change.node!r}")
            if len(active(tuple(self._log))) <= self.floor_n:
                raise MembershipFloor(
                    f"depart of {change.node!r} would drop membership below n={self.floor_n}"
                )
        self._log.append(change)
        self._seen.add(key)
        return len(self._log) - 1

    def get(self) -> ChangeSet:
        """Snapshot of the log at the caller's total-order position."""
        return tuple(self._log)

    def active_now(self) -> set[NodeId]:
        return active(self.get())
