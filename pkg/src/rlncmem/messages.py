"""In-simulation message types and their canonical wire sizes.

Sizes follow one scheme everywhere: a fixed per-message header plus the byte
cost of each field (tags are 8 octets plus the writer id, signatures 32,
coded elements their coefficient and payload lengths).  The same entry
layout feeds both signing and byte accounting in the benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .identity import NodeId, SIG_BYTES
from .registry import Change
from .rlnc import CodedElement

WIRE_HEADER = 24

ORACLE_ID: NodeId = b"@oracle"


class Tag(NamedTuple):
    """Logical version: counter plus writer id, totally ordered as a pair."""

    z: int
    w: bytes


INITIAL_TAG = Tag(0, b"")


def tag_size(tag: Tag) -> int:
    return 8 + len(tag.w)


@dataclass(frozen=True)
class RecodeCert:
    """Provenance for a recoded element: the signed inputs and the mixing scalars."""

    inputs: tuple[tuple[CodedElement, NodeId, bytes], ...]
    scalars: tuple[int, ...]

    def wire_size(self) -> int:
        total = len(self.scalars)
        for element, signer, _sig in self.inputs:
            total += element.wire_size() + len(signer) + SIG_BYTES
        return total


@dataclass(frozen=True)
class ListEntry:
    """Unit of server storage: signed tag / coded-element pair."""

    tag: Tag
    element: CodedElement
    signer: NodeId | None = None
    sig: bytes | None = None
    cert: RecodeCert | None = None

    def wire_size(self) -> int:
        total = tag_size(self.tag) + self.element.wire_size()
        if self.sig is not None:
            total += len(self.signer or b"") + SIG_BYTES
        if self.cert is not None:
            total += self.cert.wire_size()
        return total


INITIAL_ENTRY = ListEntry(INITIAL_TAG, CodedElement(b"", b""))


def _view_size(view: tuple[NodeId, ...] | None) -> int:
    return sum(1 + len(s) for s in view) if view else 0


def _ch_size(ch: tuple[Change, ...]) -> int:
    return sum(c.wire_size() for c in ch)


@dataclass(frozen=True)
class QueryTag:
    rpc: int
    sender: NodeId
    obj: bytes
    view: tuple[NodeId, ...] | None = None

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj) + _view_size(self.view)


@dataclass(frozen=True)
class TagReply:
    rpc: int
    sender: NodeId
    obj: bytes
    entry: ListEntry
    ch: tuple[Change, ...] = ()

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj) + self.entry.wire_size() + _ch_size(self.ch)


@dataclass(frozen=True)
class QueryList:
    rpc: int
    sender: NodeId
    obj: bytes
    floor: Tag
    view: tuple[NodeId, ...] | None = None

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj) + tag_size(self.floor) + _view_size(self.view)


@dataclass(frozen=True)
class ListReply:
    rpc: int
    sender: NodeId
    obj: bytes
    entries: tuple[ListEntry, ...]
    ch: tuple[Change, ...] = ()

    def wire_size(self) -> int:
        return (
            WIRE_HEADER
            + len(self.obj)
            + sum(e.wire_size() for e in self.entries)
            + _ch_size(self.ch)
        )


@dataclass(frozen=True)
class PutData:
    rpc: int
    sender: NodeId
    obj: bytes
    entry: ListEntry
    view: tuple[NodeId, ...] | None = None

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj) + self.entry.wire_size() + _view_size(self.view)


@dataclass(frozen=True)
class Ack:
    rpc: int
    sender: NodeId
    obj: bytes
    ch: tuple[Change, ...] = ()

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj) + _ch_size(self.ch)


@dataclass(frozen=True)
class FetchObjList:
    rpc: int
    sender: NodeId
    objs: tuple[bytes, ...]

    def wire_size(self) -> int:
        return WIRE_HEADER + sum(1 + len(o) for o in self.objs)


@dataclass(frozen=True)
class FetchAck:
    rpc: int
    sender: NodeId
    objs: tuple[tuple[bytes, tuple[ListEntry, ...]], ...]

    def wire_size(self) -> int:
        total = WIRE_HEADER
        for obj, entries in self.objs:
            total += 1 + len(obj) + sum(e.wire_size() for e in entries)
        return total


@dataclass(frozen=True)
class FinJoin:
    rpc: int
    sender: NodeId

    def wire_size(self) -> int:
        return WIRE_HEADER


@dataclass(frozen=True)
class FinDepart:
    rpc: int
    sender: NodeId

    def wire_size(self) -> int:
        return WIRE_HEADER


@dataclass(frozen=True)
class FinAck:
    rpc: int
    sender: NodeId

    def wire_size(self) -> int:
        return WIRE_HEADER


@dataclass(frozen=True)
class Push:
    rpc: int
    sender: NodeId
    obj: bytes

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj)


@dataclass(frozen=True)
class PushAck:
    rpc: int
    sender: NodeId
    obj: bytes

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.obj)


@dataclass(frozen=True)
class OracleGet:
    rpc: int
    sender: NodeId

    def wire_size(self) -> int:
        return WIRE_HEADER


@dataclass(frozen=True)
class OracleSnapshot:
    rpc: int
    sender: NodeId
    changes: tuple[Change, ...]

    def wire_size(self) -> int:
        return WIRE_HEADER + _ch_size(self.changes)


@dataclass(frozen=True)
class OracleAdd:
    rpc: int
    sender: NodeId
    change: Change

    def wire_size(self) -> int:
        return WIRE_HEADER + self.change.wire_size()


@dataclass(frozen=True)
class OracleAddReply:
    rpc: int
    sender: NodeId
    ok: bool
    position: int = -1
    error: str = ""

    def wire_size(self) -> int:
        return WIRE_HEADER + len(self.error)


REPLY_KINDS = (TagReply, ListReply, Ack, FetchAck, FinAck, PushAck, OracleSnapshot, OracleAddReply)
