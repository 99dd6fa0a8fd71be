"""Dynamic multi-object protocol: membership estimates, join/depart, and the
change-piggybacking variants of the data access primitives.

A node's view of the service is its Changes set (signed additions/removals),
pulled from the registry oracle on join/depart events and merged from the Ch
field every reply carries.  Clusters are recomputed from the active set on
each phase, and read/write phases repeat while the cluster keeps changing
underneath them.
"""

from __future__ import annotations

import random
from typing import Iterator

from .errors import RetriesExhausted
from .identity import KeyDirectory, NodeId, Signer
from .messages import (
    FetchAck,
    FetchObjList,
    FinAck,
    FinDepart,
    FinJoin,
    ListEntry,
    ORACLE_ID,
    OracleAdd,
    OracleGet,
    Push,
    PushAck,
    RecodeCert,
    Tag,
)
from .protocol import Flexnode, NodeConfig, OpResult, Sleep, WaitReplies
from .registry import ADD, Change, REMOVE, active, make_change, verify_change
from .ring import Ring
from . import rlnc


def max_delta_tags(tags, delta: int) -> list[Tag]:
    """The delta largest tags of a set."""
    return sorted(tags, reverse=True)[:delta]


class DynamicFlexnode(Flexnode):
    """Flexnode with a membership estimate and the join/depart protocols."""

    def __init__(
        self,
        node_id: NodeId,
        cfg: NodeConfig,
        directory: KeyDirectory,
        signer: Signer,
        runtime,
        ring: Ring,
        rng: random.Random,
        bootstrap: tuple[Change, ...] = (),
    ):
        super().__init__(node_id, cfg, directory, signer, runtime, self._ring_cluster, rng)
        self.ring = ring
        self.changes: dict[tuple[str, NodeId], Change] = {}
        self.members: tuple[NodeId, ...] = ()
        self.install_changes(bootstrap)

    # --------------------------------------------------------------- estimates

    def install_changes(self, changes, verified: bool = False) -> None:
        added = False
        for ch in changes:
            key = (ch.sign, ch.node)
            if key in self.changes:
                continue
            if not verified and not verify_change(self.directory, ch):
                continue
            self.changes[key] = ch
            added = True
        if added or not self.members:
            self.members = tuple(sorted(active(tuple(self.changes.values()))))

    def merge_changes(self, replies) -> None:
        for _, reply in replies:
            ch = getattr(reply, "ch", ())
            if ch:
                self.install_changes(ch)

    def calculate_changes(self, obj: bytes, view) -> tuple[Change, ...]:
        """Additions the sender misses for this object's cluster, plus removals it
        still counts; exactly the response-protocol change computation."""
        so = set(self._successors(obj))
        seen = set(view or ())
        plus = [self.changes[(ADD, s)] for s in sorted(so - seen) if (ADD, s) in self.changes]
        minus = [self.changes[(REMOVE, s)] for s in sorted(seen - so) if (REMOVE, s) in self.changes]
        return tuple(plus + minus)

    def _successors(self, obj: bytes) -> list[NodeId]:
        take = min(self.cfg.crf_n, len(self.members))
        return self.ring.closest_successors(obj, self.members, take)

    @staticmethod
    def _ring_cluster(node: "DynamicFlexnode", obj: bytes) -> tuple[NodeId, ...]:
        return tuple(sorted(node._successors(obj)))

    def _neighbors(self) -> tuple[NodeId, ...]:
        return tuple(self.ring.neighbors(self.id, self.members, self.cfg.crf_n))

    # ------------------------------------------------------------------ oracle

    def _oracle_get(self) -> Iterator:
        rpc = self.rt.new_rpc()
        self.rt.send(self.id, ORACLE_ID, OracleGet(rpc, self.id))
        replies = yield WaitReplies(rpc, 1)
        snapshot = replies[0][1].changes
        self.install_changes(snapshot, verified=True)
        return snapshot

    def _oracle_add(self, change: Change) -> Iterator:
        rpc = self.rt.new_rpc()
        self.rt.send(self.id, ORACLE_ID, OracleAdd(rpc, self.id, change))
        replies = yield WaitReplies(rpc, 1)
        return replies[0][1]

    def _liveness_refresh(self) -> Iterator:
        yield from self._oracle_get()

    def _recluster(self, obj: bytes, current):
        return self.cluster(obj)

    # ------------------------------------------------------------- client ops

    def _make_op(self, kind: str, obj: bytes | None, value: bytes | None) -> Iterator:
        if kind == "join":
            return self._op_join()
        if kind == "depart":
            return self._op_depart()
        return super()._make_op(kind, obj, value)

    def _op_read(self, obj: bytes) -> Iterator:
        tag = value = None
        support = 0
        prev: tuple[NodeId, ...] | None = None
        cur = self.cluster(obj)
        loops = 0
        while cur != prev:
            loops += 1
            if loops > self.cfg.loop_cap:
                raise RetriesExhausted(f"read phase 1 on {obj!r} kept re-clustering")
            tag, value, support = yield from self._dap_get_data(obj, cur)
            prev = cur
            cur = self.cluster(obj)
        if tag.z > 0:
            # skip propagation when the cluster is stable and a full quorum
            # already reported this tag
            if prev != cur or support < self.cfg.quorum(len(cur)):
                prev = None
                loops = 0
                while cur != prev:
                    loops += 1
                    if loops > self.cfg.loop_cap:
                        raise RetriesExhausted(f"read phase 2 on {obj!r} kept re-clustering")
                    yield from self._dap_put_data(obj, cur, tag, value)
                    prev = cur
                    cur = self.cluster(obj)
        return OpResult("ok", tag=tag, value=value)

    def _op_write(self, obj: bytes, value: bytes) -> Iterator:
        prev: tuple[NodeId, ...] | None = None
        cur = self.cluster(obj)
        tag = None
        loops = 0
        while cur != prev:
            loops += 1
            if loops > self.cfg.loop_cap:
                raise RetriesExhausted(f"write phase 1 on {obj!r} kept re-clustering")
            tag = yield from self._dap_get_tag(obj, cur)
            prev = cur
            cur = self.cluster(obj)
        new_tag = Tag(tag.z + 1, self.id)
        prev = None
        cur = self.cluster(obj)
        loops = 0
        while cur != prev:
            loops += 1
            if loops > self.cfg.loop_cap:
                raise RetriesExhausted(f"write phase 2 on {obj!r} kept re-clustering")
            yield from self._dap_put_data(obj, cur, new_tag, value)
            prev = cur
            cur = self.cluster(obj)
        self.store(obj).remember(new_tag, value)
        return OpResult("ok", tag=new_tag, value=value)

    # ------------------------------------------------------------ join protocol

    def _op_join(self) -> Iterator:
        yield from self._collect_data(())
        reply = yield from self._oracle_add(make_change(ADD, self.id, self.signer))
        if not reply.ok:
            return OpResult("rejected", detail=reply.error)
        yield from self._finalize(FinJoin)
        self.install_changes([self.changes_entry(ADD, self.id)], verified=True)
        return OpResult("ok")

    def changes_entry(self, sign: str, node: NodeId) -> Change:
        existing = self.changes.get((sign, node))
        if existing is not None:
            return existing
        return make_change(sign, node, self.signer)

    def _collect_data(self, objs: tuple[bytes, ...]) -> Iterator:
        """Fetch object lists from neighbors (objs empty) or per-object clusters,
        then recode the surviving tags into fresh locally-signed elements."""
        cfg = self.cfg
        beta = cfg.beta_value()
        attempts = 0
        while True:
            yield from self._oracle_get()
            if objs:
                targets: set[NodeId] = set()
                for obj in objs:
                    targets.update(self._successors(obj))
                cluster = tuple(sorted(targets - {self.id}))
            else:
                cluster = self._neighbors()
            need = -(-(2 * len(cluster) + beta) // 3)  # ceil
            rpc = self.rt.new_rpc()
            for dst in cluster:
                self.rt.send(self.id, dst, FetchObjList(rpc, self.id, objs))
            replies = yield WaitReplies(rpc, need, timeout_ms=cfg.collect_timeout_ms)
            if len(replies) >= need:
                break
            attempts += 1
            if attempts > cfg.retry_limit:
                raise RetriesExhausted("collect-data kept missing its reply quorum")
            self.rt.note_retry(self.id, None)
            yield Sleep(cfg.retry_base_ms * min(2 ** (attempts - 1), 32))
        per_object: dict[bytes, dict[Tag, dict[NodeId, ListEntry]]] = {}
        for sender, reply in replies:
            for obj, entries in reply.objs:
                tags = per_object.setdefault(obj, {})
                for entry in entries:
                    if entry.tag.z == 0 or not self.verify_entry(entry):
                        continue
                    tags.setdefault(entry.tag, {})[sender] = entry
        for obj in sorted(per_object):
            store = self.store(obj)
            correct_tags = [t for t, holders in per_object[obj].items() if len(holders) >= beta]
            for tag in max_delta_tags(correct_tags, cfg.delta):
                holders = per_object[obj][tag]
                entries = sorted(
                    holders.values(), key=lambda e: (e.element.coeffs, e.element.payload)
                )
                elements = [e.element for e in entries]
                scalars = rlnc.draw_scalars(
                    len(elements), self.rng.getrandbits(48), cfg.k, [e.coeffs for e in elements]
                )
                recoded = rlnc.combine(elements, scalars)
                cert = RecodeCert(
                    tuple((e.element, e.signer, e.sig) for e in entries), tuple(scalars)
                )
                store.insert(self.sign_entry(tag, recoded, cert))
            self.owned.add(obj)

    def _finalize(self, msg_type) -> Iterator:
        attempts = 0
        while True:
            cluster = self._neighbors()
            need = -(-(2 * len(cluster) + 1) // 3)
            rpc = self.rt.new_rpc()
            for dst in cluster:
                self.rt.send(self.id, dst, msg_type(rpc, self.id))
            replies = yield WaitReplies(rpc, need, self.cfg.dap_timeout_ms)
            if len(replies) >= need:
                return
            attempts += 1
            yield from self._stalled(attempts, "finalize", self.id)

    # ---------------------------------------------------------- depart protocol

    def _op_depart(self) -> Iterator:
        for obj in sorted(self.owned):
            attempts = 0
            while True:
                remaining = tuple(s for s in self.members if s != self.id)
                take = min(self.cfg.crf_n, len(remaining))
                cluster = tuple(sorted(self.ring.closest_successors(obj, remaining, take)))
                need = self.cfg.quorum(len(cluster))
                rpc = self.rt.new_rpc()
                for dst in cluster:
                    self.rt.send(self.id, dst, Push(rpc, self.id, obj))
                replies = yield WaitReplies(rpc, need, self.cfg.dap_timeout_ms)
                if len(replies) >= need:
                    break
                attempts += 1
                yield from self._stalled(attempts, "push-data", obj)
        reply = yield from self._oracle_add(make_change(REMOVE, self.id, self.signer))
        if not reply.ok:
            return OpResult("rejected", detail=reply.error)
        yield from self._finalize(FinDepart)
        self.departed = True
        return OpResult("ok")

    # ----------------------------------------------------------- server handlers

    def _dispatch(self, msg) -> None:
        if isinstance(msg, FetchObjList):
            self._spawn(self._on_fetch(msg))
        elif isinstance(msg, (FinJoin, FinDepart)):
            self._spawn(self._on_finalize(msg))
        elif isinstance(msg, Push):
            self._spawn(self._on_push(msg))
        else:
            super()._dispatch(msg)

    def _on_fetch(self, msg: FetchObjList) -> Iterator:
        yield from self._oracle_get()
        if msg.objs:
            wanted = [o for o in msg.objs if o in self.owned]
        else:
            joined = tuple(sorted(set(self.members) | {msg.sender}))
            take = min(self.cfg.crf_n, len(joined))
            wanted = [
                o
                for o in sorted(self.owned)
                if msg.sender in self.ring.closest_successors(o, joined, take)
            ]
        payload = tuple(
            (o, tuple(self.store(o).entries[t] for t in sorted(self.store(o).entries)))
            for o in wanted
        )
        self._reply(msg.sender, FetchAck(msg.rpc, self.id, payload))

    def _on_finalize(self, msg) -> Iterator:
        yield from self._oracle_get()
        self._reply(msg.sender, FinAck(msg.rpc, self.id))

    def _on_push(self, msg: Push) -> Iterator:
        if msg.obj not in self.owned:
            yield from self._collect_data((msg.obj,))
        self._reply(msg.sender, PushAck(msg.rpc, self.id, msg.obj))
