"""Static single-cluster read/write protocol: quorum math, version lists, the
three data access primitives, and the server response handlers.

Every node is a single-threaded state machine; client operations are
generator coroutines driven by the surrounding event loop.  A generator
yields WaitReplies to suspend until enough responses for one of its RPCs
arrived, or Sleep to back off before a re-query.  Server handlers answer
inline; the dynamic subclass adds handlers that are themselves coroutines.

Faithful quirks kept from the handler definitions: a store ACKs put-data even
when the signature check fails or the tag is already present, and eviction
removes the entries of the minimum tag (which may be the entry just added).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterator

from . import rlnc
from .errors import InvalidCluster, InvalidInput, RetriesExhausted
from .identity import KeyDirectory, NodeId, Signer, entry_signing_bytes
from .messages import (
    Ack,
    INITIAL_ENTRY,
    INITIAL_TAG,
    ListEntry,
    ListReply,
    PutData,
    QueryList,
    QueryTag,
    REPLY_KINDS,
    Tag,
    TagReply,
)
from .registry import Change
from .rlnc import CodedElement, EncodingParams


def quorum_size(cluster_size: int, k: int) -> int:
    """ceil((2|C| + k) / 3), the quorum size of the b-dissemination system."""
    if cluster_size < k:
        raise InvalidCluster(f"cluster of {cluster_size} cannot host a k={k} code")
    return math.ceil((2 * cluster_size + k) / 3)


def byz_budget(cluster_size: int, k: int) -> int:
    """Largest b strictly below (|C| - k) / 3."""
    if cluster_size < k:
        raise InvalidCluster(f"cluster of {cluster_size} cannot host a k={k} code")
    spread = cluster_size - k
    return spread // 3 - 1 if spread % 3 == 0 else spread // 3


def majority_size(cluster_size: int) -> int:
    return cluster_size // 2 + 1


@dataclass
class NodeConfig:
    """Protocol parameters shared by every node of one simulation."""

    crf_n: int
    k: int
    delta: int
    sign_entries: bool = True
    quorum_rule: str = "byzantine"  # or "majority" (replication baseline)
    dynamic: bool = False
    beta: int | None = None
    retry_limit: int = 50
    retry_base_ms: float = 40.0
    loop_cap: int = 64
    collect_timeout_ms: float = 4000.0
    # dynamic-mode quorum waits re-pull the oracle and recompute the cluster
    # when they stall on a stale membership estimate
    dap_timeout_ms: float = 30_000.0

    def quorum(self, cluster_size: int) -> int:
        if self.quorum_rule == "majority":
            return majority_size(cluster_size)
        return quorum_size(cluster_size, self.k)

    def beta_value(self) -> int:
        if self.beta is not None:
            return self.beta
        return min(self.k, byz_budget(self.crf_n, self.k) + 1)


class ObjectStore:
    """Bounded version list for one object plus the locally known pair."""

    __slots__ = ("delta", "entries", "tg", "v", "scratch")

    def __init__(self, delta: int):
        self.delta = delta
        self.entries: dict[Tag, ListEntry] = {INITIAL_TAG: INITIAL_ENTRY}
        self.tg: Tag = INITIAL_TAG
        self.v: bytes | None = None
        self.scratch: dict[Tag, int] = {}  # tag -> responders seen in the last get-data

    def insert(self, entry: ListEntry) -> bool:
        """Add one entry unless its tag is present; evict the minimum tag past delta+1."""
        if entry.tag in self.entries:
            return False
        self.entries[entry.tag] = entry
        if len(self.entries) > self.delta + 1:
            del self.entries[min(self.entries)]
        return True

    def max_entry(self) -> ListEntry:
        return self.entries[max(self.entries)]

    def entries_above(self, floor: Tag, inclusive: bool) -> list[ListEntry]:
        if inclusive:
            tags = [t for t in self.entries if t >= floor]
        else:
            tags = [t for t in self.entries if t > floor]
        return [self.entries[t] for t in sorted(tags)]

    def stored_bytes(self) -> int:
        return sum(e.element.wire_size() for e in self.entries.values())

    def remember(self, tag: Tag, value: bytes | None) -> None:
        if tag >= self.tg:
            self.tg = tag
            self.v = value


class WaitReplies:
    """Yielded by an op coroutine: suspend until `need` distinct repliers answered
    RPC `rpc`, or `timeout_ms` elapsed (partial result) when a timeout is given."""

    __slots__ = ("rpc", "need", "timeout_ms")

    def __init__(self, rpc: int, need: int, timeout_ms: float | None = None):
        self.rpc = rpc
        self.need = need
        self.timeout_ms = timeout_ms


class Sleep:
    __slots__ = ("delay_ms",)

    def __init__(self, delay_ms: float):
        self.delay_ms = delay_ms


@dataclass
class OpResult:
    status: str  # ok | rejected | error
    tag: Tag | None = None
    value: bytes | None = None
    detail: str = ""
    retries: int = 0


class Flexnode:
    """Protocol participant: serves storage and runs client operations.

    The runtime object supplies time, transport, wakeups, rpc ids, and the
    completion callback; see sim.Simulation for the production implementation.
    """

    def __init__(
        self,
        node_id: NodeId,
        cfg: NodeConfig,
        directory: KeyDirectory,
        signer: Signer,
        runtime,
        cluster_of,
        rng: random.Random,
    ):
        self.id = node_id
        self.cfg = cfg
        self.directory = directory
        self.signer = signer
        self.rt = runtime
        self._cluster_of = cluster_of  # obj -> ordered member tuple
        self.rng = rng
        self.stores: dict[bytes, ObjectStore] = {}
        self.owned: set[bytes] = set()
        self.departed = False
        # coroutine bookkeeping
        self._gens: dict[int, Iterator] = {}
        self._gen_seq = 0
        self._waits: dict[int, dict] = {}  # rpc -> wait record
        self._gen_rpc: dict[int, int] = {}
        self._sleepers: dict[int, int] = {}  # wake token -> gen id
        self._client_gen: int | None = None
        self._client_op: tuple | None = None
        self._op_backlog: list[tuple] = []

    # ---------------------------------------------------------------- plumbing

    def store(self, obj: bytes) -> ObjectStore:
        st = self.stores.get(obj)
        if st is None:
            st = ObjectStore(self.cfg.delta)
            self.stores[obj] = st
        return st

    def cluster(self, obj: bytes) -> tuple[NodeId, ...]:
        return self._cluster_of(self, obj)

    def invoke(self, op_id: int, kind: str, obj: bytes | None, value: bytes | None) -> None:
        """Queue a client operation; one runs at a time per node (well-formedness)."""
        self._op_backlog.append((op_id, kind, obj, value))
        if self._client_gen is None:
            self._start_next_op()

    def _start_next_op(self) -> None:
        if self._client_gen is not None:
            return
        while self._op_backlog:
            op_id, kind, obj, value = self._op_backlog.pop(0)
            if self.departed:
                # ops queued behind a completed depart still get a response
                self.rt.op_done(self.id, op_id, kind, obj, OpResult("departed"))
                continue
            self._client_op = (op_id, kind, obj)
            gen = self._make_op(kind, obj, value)
            self._gen_seq += 1
            gid = self._gen_seq
            self._gens[gid] = gen
            self._client_gen = gid
            self._drive(gid, None)
            return

    def _make_op(self, kind: str, obj: bytes | None, value: bytes | None) -> Iterator:
        if kind == "read":
            return self._op_read(obj)
        if kind == "write":
            if not value:
                raise InvalidInput("write needs a non-empty value")
            return self._op_write(obj, value)
        raise InvalidInput(f"unsupported operation {kind!r} on this node type")

    def _spawn(self, gen: Iterator) -> int:
        self._gen_seq += 1
        gid = self._gen_seq
        self._gens[gid] = gen
        self._drive(gid, None)
        return gid

    def _drive(self, gid: int, value) -> None:
        gen = self._gens.get(gid)
        if gen is None:
            return
        try:
            effect = gen.send(value)
        except StopIteration as stop:
            self._finish_gen(gid, stop.value)
            return
        except RetriesExhausted as exc:
            self._finish_gen(gid, OpResult("stuck", detail=str(exc)))
            return
        if isinstance(effect, WaitReplies):
            rec = {"need": effect.need, "got": {}, "gid": gid, "order": []}
            self._waits[effect.rpc] = rec
            self._gen_rpc[gid] = effect.rpc
            if effect.timeout_ms is not None:
                token = self.rt.wake(self.id, effect.timeout_ms)
                rec["token"] = token
                self._sleepers[token] = -effect.rpc  # timeout marker
        elif isinstance(effect, Sleep):
            token = self.rt.wake(self.id, effect.delay_ms)
            self._sleepers[token] = gid
        else:
            raise TypeError(f"op coroutine yielded {effect!r}")

    def _finish_gen(self, gid: int, result) -> None:
        self._gens.pop(gid, None)
        self._gen_rpc.pop(gid, None)
        if gid == self._client_gen:
            op_id, kind, obj = self._client_op
            self._client_gen = None
            self._client_op = None
            if not isinstance(result, OpResult):
                result = OpResult("ok") if result is None else result
            self.rt.op_done(self.id, op_id, kind, obj, result)
            self._start_next_op()

    def on_wake(self, token: int) -> None:
        if self.departed:
            return
        gid = self._sleepers.pop(token, None)
        if gid is None:
            return
        if gid < 0:  # rpc timeout
            rpc = -gid
            rec = self._waits.pop(rpc, None)
            if rec is not None:
                self._gen_rpc.pop(rec["gid"], None)
                self._drive(rec["gid"], list(rec["order"]))
            return
        self._drive(gid, None)

    def handle(self, msg) -> None:
        """Deliver one message: either a reply to a live RPC or a fresh request."""
        if self.departed:
            return
        rec = self._waits.get(msg.rpc) if isinstance(msg, REPLY_KINDS) else None
        if rec is not None:
            if msg.sender in rec["got"]:
                return  # reliable channels never duplicate; defensive against adversaries
            rec["got"][msg.sender] = msg
            rec["order"].append((msg.sender, msg))
            if len(rec["got"]) >= rec["need"]:
                del self._waits[msg.rpc]
                token = rec.get("token")
                if token is not None:
                    self._sleepers.pop(token, None)
                self._gen_rpc.pop(rec["gid"], None)
                self._drive(rec["gid"], list(rec["order"]))
            return
        self._dispatch(msg)

    def _dispatch(self, msg) -> None:
        if isinstance(msg, QueryTag):
            self._on_query_tag(msg)
        elif isinstance(msg, QueryList):
            self._on_query_list(msg)
        elif isinstance(msg, PutData):
            self._on_put_data(msg)
        # anything else is dropped silently (malformed / not for this node type)

    def _reply(self, dst: NodeId, msg) -> None:
        self.rt.send(self.id, dst, msg)

    # ------------------------------------------------------------ verification

    def verify_entry(self, entry: ListEntry) -> bool:
        if entry.sig is None:
            if not self.cfg.sign_entries:
                return True
            # the initial pair is known to every node and carries no signature
            return entry.tag.z == 0 and not entry.element.coeffs
        if entry.signer is None or not self.directory.is_registered(entry.signer):
            return False
        msg = entry_signing_bytes(
            entry.tag.z, entry.tag.w, entry.element.coeffs, entry.element.payload
        )
        if not self.directory.verify(entry.signer, msg, entry.sig):
            return False
        if entry.cert is not None:
            return self._verify_cert(entry)
        return True

    def _verify_cert(self, entry: ListEntry) -> bool:
        """Recoded entries: every input must be writer-signed and the mix must re-derive."""
        cert = entry.cert
        if len(cert.inputs) != len(cert.scalars) or not cert.inputs:
            return False
        elements = []
        for element, signer, sig in cert.inputs:
            msg = entry_signing_bytes(entry.tag.z, entry.tag.w, element.coeffs, element.payload)
            if not self.directory.is_registered(signer) or not self.directory.verify(signer, msg, sig):
                return False
            elements.append(element)
        try:
            mixed = rlnc.combine(elements, list(cert.scalars))
        except InvalidInput:
            return False
        return mixed == entry.element

    def sign_entry(self, tag: Tag, element: CodedElement, cert=None) -> ListEntry:
        if not self.cfg.sign_entries:
            return ListEntry(tag, element)
        msg = entry_signing_bytes(tag.z, tag.w, element.coeffs, element.payload)
        return ListEntry(tag, element, self.id, self.signer.sign(msg), cert)

    # ---------------------------------------------------------- change plumbing
    # Static protocol has no membership estimate; the dynamic subclass overrides.

    def merge_changes(self, replies) -> None:
        pass

    def calculate_changes(self, obj: bytes, view) -> tuple[Change, ...]:
        return ()

    def _view(self, cluster: tuple[NodeId, ...]) -> tuple[NodeId, ...] | None:
        return cluster if self.cfg.dynamic else None

    def _liveness_refresh(self):
        """Dynamic nodes re-pull the oracle when a quorum wait stalls."""
        return
        yield

    def _recluster(self, obj: bytes, current: tuple[NodeId, ...]) -> tuple[NodeId, ...]:
        return current

    def _dap_timeout(self) -> float | None:
        return self.cfg.dap_timeout_ms if self.cfg.dynamic else None

    # ------------------------------------------------------------------- DAPs

    def _stalled(self, attempts: int, what: str, obj: bytes) -> Iterator:
        """Bookkeeping for a quorum wait that timed out: refresh and recount."""
        self.rt.note_retry(self.id, obj)
        if attempts > self.cfg.retry_limit:
            raise RetriesExhausted(f"{what} on {obj!r} exhausted {self.cfg.retry_limit} re-queries")
        yield from self._liveness_refresh()

    def _dap_get_tag(self, obj: bytes, cluster: tuple[NodeId, ...]) -> Iterator:
        invoked = self.rt.now()
        attempts = 0
        while True:
            rpc = self.rt.new_rpc()
            view = self._view(cluster)
            need = self.cfg.quorum(len(cluster))
            for dst in cluster:
                self.rt.send(self.id, dst, QueryTag(rpc, self.id, obj, view))
            replies = yield WaitReplies(rpc, need, self._dap_timeout())
            self.merge_changes(replies)
            if len(replies) >= need:
                break
            attempts += 1
            yield from self._stalled(attempts, "get-tag", obj)
            cluster = self._recluster(obj, cluster)
        best = INITIAL_TAG
        for _, reply in replies:
            if reply.entry is not None and self.verify_entry(reply.entry):
                if reply.entry.tag > best:
                    best = reply.entry.tag
        self.rt.dap_done(self.id, "get-tag", obj, invoked, best)
        return best

    def _dap_put_data(self, obj: bytes, cluster: tuple[NodeId, ...], tag: Tag, value: bytes) -> Iterator:
        invoked = self.rt.now()
        attempts = 0
        while True:
            rpc = self.rt.new_rpc()
            view = self._view(cluster)
            need = self.cfg.quorum(len(cluster))
            params = EncodingParams(len(cluster), self.cfg.k)
            elements = rlnc.encode(value, params, self.rng.getrandbits(48))
            for element, dst in zip(elements, cluster):
                entry = self.sign_entry(tag, element)
                self.rt.send(self.id, dst, PutData(rpc, self.id, obj, entry, view))
            replies = yield WaitReplies(rpc, need, self._dap_timeout())
            self.merge_changes(replies)
            if len(replies) >= need:
                break
            attempts += 1
            yield from self._stalled(attempts, "put-data", obj)
            cluster = self._recluster(obj, cluster)
        self.rt.dap_done(self.id, "put-data", obj, invoked, tag)

    def _dap_get_data(self, obj: bytes, cluster: tuple[NodeId, ...]) -> Iterator:
        """Collect quorum lists; decode the max tag seen in >= k verified entries of
        rank k.  Falls back to the local pair only when nothing newer than the
        caller's tag was reported at all; anything newer-but-undecodable means a
        concurrent put-data is in flight, so re-query after a bounded backoff."""
        store = self.store(obj)
        cfg = self.cfg
        invoked = self.rt.now()
        attempts = 0
        while True:
            rpc = self.rt.new_rpc()
            view = self._view(cluster)
            need = cfg.quorum(len(cluster))
            floor = store.tg
            for dst in cluster:
                self.rt.send(self.id, dst, QueryList(rpc, self.id, obj, floor, view))
            replies = yield WaitReplies(rpc, need, self._dap_timeout())
            self.merge_changes(replies)
            if len(replies) < need:
                attempts += 1
                yield from self._stalled(attempts, "get-data", obj)
                cluster = self._recluster(obj, cluster)
                continue
            by_tag: dict[Tag, dict[NodeId, ListEntry]] = {}
            for sender, reply in replies:
                for entry in reply.entries:
                    if cfg.dynamic:
                        if entry.tag < floor:
                            continue
                    elif entry.tag <= floor:
                        continue
                    if self.verify_entry(entry):
                        by_tag.setdefault(entry.tag, {})[sender] = entry
            store.scratch = {t: len(m) for t, m in by_tag.items()}
            for tag in sorted(by_tag, reverse=True):
                holders = by_tag[tag]
                if len(holders) < cfg.k or tag.z == 0:
                    continue
                if tag == store.tg and store.v is not None:
                    self.rt.dap_done(self.id, "get-data", obj, invoked, tag)
                    return tag, store.v, len(holders)
                elements = {e.element for e in holders.values()}
                try:
                    value = rlnc.decode(elements, cfg.k)
                except rlnc.RankDeficient:
                    continue  # undecodable despite multiplicity; try the next tag down
                store.remember(tag, value)
                self.rt.dap_done(self.id, "get-data", obj, invoked, tag)
                return tag, value, len(holders)
            if not any(t > floor for t in by_tag):
                self.rt.dap_done(self.id, "get-data", obj, invoked, store.tg)
                return store.tg, store.v, 0
            attempts += 1
            self.rt.note_retry(self.id, obj)
            if attempts > cfg.retry_limit:
                raise RetriesExhausted(f"get-data on {obj!r} exhausted {cfg.retry_limit} re-queries")
            yield Sleep(cfg.retry_base_ms * min(2 ** (attempts - 1), 32))
            cluster = self._recluster(obj, cluster)

    # -------------------------------------------------------- read / write ops

    def _op_read(self, obj: bytes) -> Iterator:
        cluster = self.cluster(obj)
        tag, value, _ = yield from self._dap_get_data(obj, cluster)
        if tag.z > 0:
            yield from self._dap_put_data(obj, cluster, tag, value)
        return OpResult("ok", tag=tag, value=value)

    def _op_write(self, obj: bytes, value: bytes) -> Iterator:
        cluster = self.cluster(obj)
        tag = yield from self._dap_get_tag(obj, cluster)
        new_tag = Tag(tag.z + 1, self.id)
        yield from self._dap_put_data(obj, cluster, new_tag, value)
        self.store(obj).remember(new_tag, value)
        return OpResult("ok", tag=new_tag, value=value)

    # ---------------------------------------------------------- server handlers

    def _on_query_tag(self, msg: QueryTag) -> None:
        store = self.store(msg.obj)
        ch = self.calculate_changes(msg.obj, msg.view) if msg.view is not None else ()
        self._reply(msg.sender, TagReply(msg.rpc, self.id, msg.obj, store.max_entry(), ch))

    def _on_query_list(self, msg: QueryList) -> None:
        store = self.store(msg.obj)
        entries = tuple(store.entries_above(msg.floor, inclusive=msg.view is not None))
        ch = self.calculate_changes(msg.obj, msg.view) if msg.view is not None else ()
        self._reply(msg.sender, ListReply(msg.rpc, self.id, msg.obj, entries, ch))

    def _on_put_data(self, msg: PutData) -> None:
        store = self.store(msg.obj)
        if self.verify_entry(msg.entry) and msg.entry.tag not in store.entries:
            store.insert(msg.entry)
            self.owned.add(msg.obj)
        ch = self.calculate_changes(msg.obj, msg.view) if msg.view is not None else ()
        self._reply(msg.sender, Ack(msg.rpc, self.id, msg.obj, ch))

    # ------------------------------------------------------------------- stats

    def stored_bytes(self) -> int:
        return sum(st.stored_bytes() for st in self.stores.values())
