"""Deterministic discrete-event network with adversarial scheduling.

Logical time is in milliseconds.  A message from src to dst waits for src's
egress to drain (concurrent sends from one node serialize on its bandwidth),
then takes prop_base plus seeded jitter to propagate.  Identical configs and
seeds replay to byte-identical traces; every message between non-faulty nodes
is eventually delivered, and the scheduler may reorder in-flight deliveries
arbitrarily through the jitter term.

The registry oracle lives behind the same message fabric with its own
configurable service latency, so its cost lands on joins and departs, never
on reads or writes.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field, asdict

from .errors import SimulationStuck
from .identity import KeyDirectory, NodeId
from .membership import DynamicFlexnode
from .messages import (
    INITIAL_ENTRY,
    ListEntry,
    ORACLE_ID,
    OracleAdd,
    OracleAddReply,
    OracleGet,
    OracleSnapshot,
    Tag,
)
from .protocol import Flexnode, NodeConfig, OpResult, byz_budget
from .registry import MembershipRegistry
from .ring import Ring

SILENT = "silent"
STALE_REPLAY = "stale-replay"


@dataclass
class DelayModel:
    prop_base: float = 50.0
    egress_bandwidth: float = 6553.6  # bytes per logical ms
    jitter_fraction: float = 0.0

    def describe(self) -> dict:
        return asdict(self)


@dataclass
class Step:
    kind: str  # read | write | join | depart | crash
    node: NodeId
    obj: bytes | None = None
    value_size: int = 64
    at: float = 0.0


@dataclass
class Workload:
    mode: str = "periodic"  # periodic: steps fire at their times; sequence: chained
    steps: list[Step] = field(default_factory=list)


@dataclass
class SimConfig:
    seed: int
    node_ids: list[NodeId]
    crf_n: int
    k: int
    delta: int
    workload: Workload
    initial_members: list[NodeId] | None = None
    byzantine: dict[NodeId, str] = field(default_factory=dict)
    crash_at: list[tuple[float, NodeId]] = field(default_factory=list)
    delay: DelayModel = field(default_factory=DelayModel)
    dynamic: bool = True
    placement: str = "ring"  # ring | full
    sign_entries: bool = True
    quorum_rule: str = "byzantine"
    ring_bits: int = 32
    oracle_latency_ms: float = 20.0
    beta: int | None = None
    retry_limit: int = 50
    retry_base_ms: float = 40.0
    loop_cap: int = 64
    collect_timeout_ms: float = 4000.0
    dap_timeout_ms: float = 30_000.0
    allow_model_violation: bool = False
    max_events: int = 4_000_000
    collect_events: bool = True

    def members(self) -> list[NodeId]:
        return list(self.initial_members) if self.initial_members is not None else list(self.node_ids)

    def validate(self) -> None:
        members = self.members()
        if len(members) < self.crf_n:
            raise ValueError(f"{len(members)} initial members cannot host crf_n={self.crf_n}")
        if self.byzantine and not self.allow_model_violation:
            budget = byz_budget(self.crf_n, self.k)
            ring = Ring(self.ring_bits)
            objects = {s.obj for s in self.workload.steps if s.obj is not None}
            for obj in sorted(objects):
                cluster = ring.closest_successors(obj, members, self.crf_n)
                bad = sum(1 for s in cluster if s in self.byzantine)
                if bad > budget:
                    raise ValueError(
                        f"object {obj!r} starts with {bad} byzantine members, budget is {budget}"
                    )
        for step in self.workload.steps:
            if step.kind in ("read", "write", "join", "depart") and step.node in self.byzantine:
                raise ValueError("byzantine nodes do not invoke operations")


def make_ids(count: int, prefix: str = "n", salt: str = "") -> list[NodeId]:
    tag = f"{salt}-" if salt else ""
    return [f"{tag}{prefix}{i:03d}".encode() for i in range(count)]


# --------------------------------------------------------------------- trace


@dataclass
class OpTrace:
    op_id: int
    node: NodeId
    kind: str
    obj: bytes | None
    invoke_ms: float
    respond_ms: float | None = None
    status: str = ""
    tag: Tag | None = None
    value_digest: str = ""
    retries: int = 0

    @property
    def complete(self) -> bool:
        return self.respond_ms is not None


def value_digest(value: bytes | None) -> str:
    if value is None:
        return "bot"
    return hashlib.sha256(value).hexdigest()[:16]


class Trace:
    """Everything one run produced: events, operation records, oracle log, stats."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.events: list[tuple] = []
        self.ops: list[OpTrace] = []
        self.dap_records: list[tuple] = []  # (kind, obj, node, invoke, respond, tag)
        self.oracle_log: list[tuple] = []
        self.stuck: list[OpTrace] = []
        self.not_invoked: int = 0
        self.retries: int = 0
        self.wire_bytes: int = 0
        self.stored_payload_bytes: int = 0
        self.end_ms: float = 0.0

    def digest(self) -> str:
        h = hashlib.sha256()
        for ev in self.events:
            h.update(repr(ev).encode())
        for op in self.ops:
            h.update(
                f"{op.op_id}|{op.kind}|{op.invoke_ms}|{op.respond_ms}|{op.status}|{op.tag}|{op.value_digest}".encode()
            )
        return h.hexdigest()

    def op_records(self) -> list[dict]:
        out = []
        for op in self.ops:
            out.append(
                {
                    "op_id": op.op_id,
                    "node": op.node.decode(),
                    "kind": op.kind,
                    "obj": op.obj.decode() if op.obj is not None else None,
                    "invoke_ms": op.invoke_ms,
                    "respond_ms": op.respond_ms,
                    "status": op.status,
                    "tag_z": op.tag.z if op.tag else None,
                    "tag_w": op.tag.w.decode() if op.tag else None,
                    "digest": op.value_digest,
                    "retries": op.retries,
                }
            )
        return out

    def dump(self, path) -> None:
        """Newline-delimited records: one meta line, then op and oracle records."""
        with open(path, "w") as fh:
            meta = {
                "record": "meta",
                "seed": self.config.seed,
                "digest": self.digest(),
                "wire_bytes": self.wire_bytes,
                "stored_payload_bytes": self.stored_payload_bytes,
                "end_ms": self.end_ms,
                "retries": self.retries,
                "stuck": len(self.stuck),
            }
            fh.write(json.dumps(meta) + "\n")
            for rec in self.op_records():
                rec["record"] = "op"
                fh.write(json.dumps(rec) + "\n")
            for entry in self.oracle_log:
                fh.write(json.dumps({"record": "oracle", "entry": entry}) + "\n")


def load_trace_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------- byzantine


class _SilentMixin:
    """Drops every protocol reply; state machines still consume their inputs."""

    def _reply(self, dst, msg):  # noqa: D401
        return


class _StaleReplayMixin:
    """Answers queries with the oldest correctly signed entry it ever stored and
    suppresses list updates from its visible state; ACKs keep flowing."""

    def _shadow(self, obj) -> ListEntry:
        shadows = getattr(self, "_stale_shadow", None)
        if shadows is None:
            shadows = {}
            self._stale_shadow = shadows
        return shadows.get(obj, INITIAL_ENTRY)

    def _on_put_data(self, msg):
        if self.verify_entry(msg.entry):
            shadows = getattr(self, "_stale_shadow", None)
            if shadows is None:
                shadows = {}
                self._stale_shadow = shadows
            old = shadows.get(msg.obj)
            if old is None or msg.entry.tag < old.tag:
                shadows[msg.obj] = msg.entry
        from .messages import Ack

        self._reply(msg.sender, Ack(msg.rpc, self.id, msg.obj, ()))

    def _on_query_tag(self, msg):
        from .messages import TagReply

        self._reply(msg.sender, TagReply(msg.rpc, self.id, msg.obj, self._shadow(msg.obj), ()))

    def _on_query_list(self, msg):
        from .messages import ListReply

        entry = self._shadow(msg.obj)
        entries = (entry,) if entry.tag.z > 0 else ()
        self._reply(msg.sender, ListReply(msg.rpc, self.id, msg.obj, entries, ()))

    def _on_fetch(self, msg):
        from .messages import FetchAck

        shadows = getattr(self, "_stale_shadow", {})
        payload = tuple((obj, (shadows[obj],)) for obj in sorted(shadows))
        self._reply(msg.sender, FetchAck(msg.rpc, self.id, payload))
        return
        yield  # pragma: no cover - keeps this a generator like the honest handler


class _SilentStatic(_SilentMixin, Flexnode):
    pass


class _SilentDynamic(_SilentMixin, DynamicFlexnode):
    pass


class _StaleStatic(_StaleReplayMixin, Flexnode):
    pass


class _StaleDynamic(_StaleReplayMixin, DynamicFlexnode):
    pass


# --------------------------------------------------------------- simulation


class Simulation:
    """Owns the event queue, the nodes, and the oracle; produces a Trace."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.rng = random.Random(config.seed)
        self.now_ms = 0.0
        self._heap: list[tuple] = []
        self._seq = 0
        self._rpc_seq = 0
        self.trace = Trace(config)
        self.crashed: set[NodeId] = set()
        self._egress_free: dict[NodeId, float] = {}
        self._ops: dict[int, OpTrace] = {}
        self._op_seq = 0
        self._pending_ops: set[int] = set()
        self._chain_pos = 0  # sequence-mode cursor

        self.directory = KeyDirectory(secret=f"dir:{config.seed}".encode())
        self.registry = MembershipRegistry(self.directory, config.crf_n)
        self.registry.bootstrap(sorted(config.members()))
        for pos, change in enumerate(self.registry.get()):
            self.trace.oracle_log.append(
                ("add", 0.0, "@bootstrap", (change.sign, change.node.decode()), pos)
            )
        self.ring = Ring(config.ring_bits)
        self.node_cfg = NodeConfig(
            crf_n=config.crf_n,
            k=config.k,
            delta=config.delta,
            sign_entries=config.sign_entries,
            quorum_rule=config.quorum_rule,
            dynamic=config.dynamic,
            beta=config.beta,
            retry_limit=config.retry_limit,
            retry_base_ms=config.retry_base_ms,
            loop_cap=config.loop_cap,
            collect_timeout_ms=config.collect_timeout_ms,
            dap_timeout_ms=config.dap_timeout_ms,
        )
        self.nodes: dict[NodeId, Flexnode] = {}
        bootstrap = self.registry.get()
        initial = sorted(config.members())
        for node_id in sorted(config.node_ids):
            signer = self.directory.register(node_id)
            node_rng = random.Random(f"{config.seed}:{node_id.decode()}")
            behavior = config.byzantine.get(node_id)
            if config.dynamic:
                cls = {SILENT: _SilentDynamic, STALE_REPLAY: _StaleDynamic}.get(
                    behavior, DynamicFlexnode
                )
                # joiners refresh from the oracle before using the estimate, so
                # handing everyone the bootstrap snapshot is safe and lets
                # non-member clients compute clusters
                node = cls(node_id, self.node_cfg, self.directory, signer, self, self.ring, node_rng, bootstrap)
            else:
                cls = {SILENT: _SilentStatic, STALE_REPLAY: _StaleStatic}.get(behavior, Flexnode)
                if config.placement == "full":
                    members = tuple(initial)

                    def cluster_of(_node, _obj, _m=members):
                        return _m

                else:

                    def cluster_of(_node, _obj, _ring=self.ring, _members=initial, _n=config.crf_n):
                        return tuple(sorted(_ring.closest_successors(_obj, _members, _n)))

                node = cls(node_id, self.node_cfg, self.directory, signer, self, cluster_of, node_rng)
            self.nodes[node_id] = node

    # ------------------------------------------------------------ runtime API

    def now(self) -> float:
        return self.now_ms

    def new_rpc(self) -> int:
        self._rpc_seq += 1
        return self._rpc_seq

    def _push(self, at: float, kind: str, data) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, kind, data))

    def send(self, src: NodeId, dst: NodeId, msg) -> None:
        size = msg.wire_size()
        if src == dst:
            self._push(self.now_ms, "deliver", (dst, msg))
            return
        self.trace.wire_bytes += size
        delay = self.config.delay
        tx = size / delay.egress_bandwidth
        start = max(self.now_ms, self._egress_free.get(src, 0.0))
        self._egress_free[src] = start + tx
        prop = delay.prop_base
        if delay.jitter_fraction:
            prop += delay.prop_base * delay.jitter_fraction * self.rng.uniform(-1.0, 1.0)
        at = start + tx + max(prop, 0.0)
        if self.config.collect_events:
            self.trace.events.append(
                ("send", round(self.now_ms, 6), src.decode(), dst.decode(), type(msg).__name__, msg.rpc, size)
            )
        self._push(at, "deliver", (dst, msg))

    def wake(self, node: NodeId, delay_ms: float) -> int:
        token = self.new_rpc()
        self._push(self.now_ms + delay_ms, "wake", (node, token))
        return token

    def note_retry(self, node: NodeId, obj) -> None:
        self.trace.retries += 1
        current = self.nodes[node]._client_op
        if current is not None:
            op = self._ops.get(current[0])
            if op is not None:
                op.retries += 1

    def dap_done(self, node: NodeId, kind: str, obj: bytes, invoked: float, tag: Tag) -> None:
        self.trace.dap_records.append((kind, obj, node, invoked, self.now_ms, tag))

    def op_done(self, node: NodeId, op_id: int, kind: str, obj, result: OpResult) -> None:
        op = self._ops[op_id]
        op.respond_ms = self.now_ms
        op.status = result.status
        op.tag = result.tag
        op.value_digest = value_digest(result.value) if kind in ("read", "write") else ""
        if result.status == "stuck":
            self.trace.stuck.append(op)
        self._pending_ops.discard(op_id)
        if self.config.collect_events:
            self.trace.events.append(
                ("respond", round(self.now_ms, 6), node.decode(), op_id, kind, result.status,
                 (result.tag.z, result.tag.w.decode()) if result.tag else None, op.value_digest)
            )
        if self.config.workload.mode == "sequence":
            self._advance_chain()

    # ------------------------------------------------------------- scheduling

    def _schedule_workload(self) -> None:
        wl = self.config.workload
        if wl.mode == "periodic":
            for i, step in enumerate(wl.steps):
                self._push(step.at, "invoke", i)
            for at, node in self.config.crash_at:
                self._push(at, "crash", node)
        else:
            for at, node in self.config.crash_at:
                self._push(at, "crash", node)
            self._advance_chain()

    def _advance_chain(self) -> None:
        wl = self.config.workload
        while self._chain_pos < len(wl.steps):
            step = wl.steps[self._chain_pos]
            self._chain_pos += 1
            if step.kind == "crash":
                self.crashed.add(step.node)
                if self.config.collect_events:
                    self.trace.events.append(("crash", round(self.now_ms, 6), step.node.decode()))
                continue
            self._invoke_step(step)
            return

    def _value_for(self, op_id: int, size: int) -> bytes:
        prefix = f"v{op_id}:".encode()
        pad = max(size - len(prefix), 1)
        body = random.Random((self.config.seed << 20) ^ op_id).randbytes(pad)
        return prefix + body

    def _invoke_step(self, step: Step) -> None:
        node = self.nodes[step.node]
        if step.node in self.crashed or node.departed:
            return
        self._op_seq += 1
        op_id = self._op_seq
        value = self._value_for(op_id, step.value_size) if step.kind == "write" else None
        op = OpTrace(op_id, step.node, step.kind, step.obj, self.now_ms)
        self._ops[op_id] = op
        self.trace.ops.append(op)
        self._pending_ops.add(op_id)
        if self.config.collect_events:
            self.trace.events.append(
                ("invoke", round(self.now_ms, 6), step.node.decode(), op_id, step.kind,
                 step.obj.decode() if step.obj else None)
            )
        node.invoke(op_id, step.kind, step.obj, value)

    # ------------------------------------------------------------------ oracle

    def _oracle_receive(self, msg) -> None:
        self._push(self.now_ms + self.config.oracle_latency_ms, "oracle", msg)

    def _oracle_exec(self, msg) -> None:
        if isinstance(msg, OracleGet):
            snapshot = self.registry.get()
            self.trace.oracle_log.append(
                ("get", round(self.now_ms, 6), msg.sender.decode(),
                 [(c.sign, c.node.decode()) for c in snapshot])
            )
            reply = OracleSnapshot(msg.rpc, ORACLE_ID, snapshot)
        elif isinstance(msg, OracleAdd):
            try:
                pos = self.registry.add(msg.change)
                self.trace.oracle_log.append(
                    ("add", round(self.now_ms, 6), msg.sender.decode(),
                     (msg.change.sign, msg.change.node.decode()), pos)
                )
                reply = OracleAddReply(msg.rpc, ORACLE_ID, True, pos)
            except Exception as exc:
                reply = OracleAddReply(msg.rpc, ORACLE_ID, False, -1, type(exc).__name__)
        else:
            return
        self.send(ORACLE_ID, msg.sender, reply)

    # --------------------------------------------------------------- main loop

    def run(self) -> Trace:
        self._schedule_workload()
        events = 0
        while self._heap:
            events += 1
            if events > self.config.max_events:
                raise SimulationStuck(f"exceeded {self.config.max_events} events; runaway config")
            at, _, kind, data = heapq.heappop(self._heap)
            self.now_ms = at
            if kind == "deliver":
                dst, msg = data
                if dst == ORACLE_ID:
                    self._oracle_receive(msg)
                    continue
                if dst in self.crashed:
                    continue
                if self.config.collect_events:
                    self.trace.events.append(
                        ("deliver", round(at, 6), dst.decode(), type(msg).__name__, msg.rpc, msg.wire_size())
                    )
                self.nodes[dst].handle(msg)
            elif kind == "oracle":
                self._oracle_exec(data)
            elif kind == "wake":
                node, token = data
                if node not in self.crashed:
                    self.nodes[node].on_wake(token)
            elif kind == "invoke":
                self._invoke_step(self.config.workload.steps[data])
            elif kind == "crash":
                self.crashed.add(data)
                if self.config.collect_events:
                    self.trace.events.append(("crash", round(at, 6), data.decode()))
        self.trace.end_ms = self.now_ms
        for op_id in sorted(self._pending_ops):
            op = self._ops[op_id]
            if op.node in self.crashed:
                op.status = "invoker-crashed"
            else:
                op.status = "stuck"
                self.trace.stuck.append(op)
        backlog = sum(len(n._op_backlog) for n in self.nodes.values())
        self.trace.not_invoked = backlog + (len(self.config.workload.steps) - self._chain_pos
                                            if self.config.workload.mode == "sequence" else 0)
        self.trace.stored_payload_bytes = sum(
            n.stored_bytes()
            for n in self.nodes.values()
            if n.id not in self.crashed and not n.departed
        )
        return self.trace


def run_config(config: SimConfig) -> Trace:
    return Simulation(config).run()
