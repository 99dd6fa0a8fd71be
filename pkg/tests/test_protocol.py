"""Quorum math, server handler behavior, and DAP-level property suites."""

import random

import pytest

from rlncmem.errors import InvalidCluster
from rlncmem.identity import KeyDirectory
from rlncmem.messages import INITIAL_TAG, PutData, QueryList, QueryTag, Tag
from rlncmem.protocol import Flexnode, NodeConfig, byz_budget, quorum_size
from rlncmem.rlnc import CodedElement, EncodingParams, encode
from rlncmem.sim import SimConfig, Simulation, Step, Workload, make_ids

from .helpers import FAST_DELAY, safety_config


# ------------------------------------------------------------- quorum math


@pytest.mark.parametrize(
    "cluster,k,expect",
    [(13, 3, 10), (5, 3, 5), (4, 1, 3), (7, 3, 6), (10, 3, 8)],
)
def test_quorum_size(cluster, k, expect):
    assert quorum_size(cluster, k) == expect


@pytest.mark.parametrize(
    "cluster,k,expect",
    [(13, 3, 3), (5, 3, 0), (3, 1, 0), (7, 3, 1), (10, 3, 2), (9, 3, 1)],
)
def test_byz_budget(cluster, k, expect):
    assert byz_budget(cluster, k) == expect
    # definition: largest integer strictly below (|C|-k)/3
    assert expect < (cluster - k) / 3
    assert expect + 1 >= (cluster - k) / 3


def test_quorum_rejects_small_cluster():
    with pytest.raises(InvalidCluster):
        quorum_size(2, 3)


# --------------------------------------------------- handler unit fixtures


class StubRuntime:
    def __init__(self):
        self.sent = []
        self.t = 0.0
        self._rpc = 0

    def now(self):
        return self.t

    def send(self, src, dst, msg):
        self.sent.append((src, dst, msg))

    def wake(self, node, delay_ms):
        self._rpc += 1
        return self._rpc

    def new_rpc(self):
        self._rpc += 1
        return self._rpc

    def note_retry(self, node, obj):
        pass

    def dap_done(self, *args):
        pass

    def op_done(self, *args):
        pass


def make_node(delta=2, k=2, sign=True):
    directory = KeyDirectory()
    signer = directory.register(b"server")
    cfg = NodeConfig(crf_n=3, k=k, delta=delta, sign_entries=sign)
    rt = StubRuntime()
    node = Flexnode(b"server", cfg, directory, signer, rt, lambda n, o: (b"server",), random.Random(0))
    return node, rt, directory


def signed_entry(directory, writer, tag, element):
    from rlncmem.identity import entry_signing_bytes

    signer = directory.register(writer)
    msg = entry_signing_bytes(tag.z, tag.w, element.coeffs, element.payload)
    from rlncmem.messages import ListEntry

    return ListEntry(tag, element, writer, signer.sign(msg))


def element_for(seed, k=2):
    return encode(bytes([seed] * 8), EncodingParams(k, k), seed=seed)[0]


def test_put_data_eviction_removes_min_tag():
    node, rt, directory = make_node(delta=2)
    obj = b"o"
    for z in (3, 4, 5):
        entry = signed_entry(directory, b"w", Tag(z, b"w"), element_for(z))
        node.handle(PutData(rt.new_rpc(), b"w", obj, entry))
    tags = sorted(t.z for t in node.store(obj).entries)
    assert tags == [3, 4, 5]  # initial tag evicted once the list overflowed
    entry = signed_entry(directory, b"w", Tag(6, b"w"), element_for(6))
    node.handle(PutData(rt.new_rpc(), b"w", obj, entry))
    tags = sorted(t.z for t in node.store(obj).entries)
    assert tags == [4, 5, 6]


def test_duplicate_tag_ignored_but_acked():
    node, rt, directory = make_node()
    obj = b"o"
    tag = Tag(2, b"w")
    first = signed_entry(directory, b"w", tag, element_for(1))
    second = signed_entry(directory, b"w", tag, element_for(9))
    node.handle(PutData(rt.new_rpc(), b"w", obj, first))
    node.handle(PutData(rt.new_rpc(), b"w", obj, second))
    assert node.store(obj).entries[tag].element == first.element
    acks = [m for _, _, m in rt.sent]
    assert len(acks) == 2  # both acked


def test_invalid_signature_not_stored_still_acked():
    node, rt, directory = make_node()
    obj = b"o"
    tag = Tag(2, b"w")
    from rlncmem.messages import ListEntry

    bogus = ListEntry(tag, element_for(1), b"w", b"\x00" * 32)
    node.handle(PutData(rt.new_rpc(), b"w", obj, bogus))
    assert tag not in node.store(obj).entries
    assert len(rt.sent) == 1  # the ack still goes out


def test_query_tag_returns_max_entry():
    node, rt, directory = make_node()
    obj = b"o"
    node.handle(QueryTag(rt.new_rpc(), b"asker", obj))
    assert rt.sent[-1][2].entry.tag == INITIAL_TAG
    for z in (1, 4, 2):
        node.handle(PutData(rt.new_rpc(), b"w", obj, signed_entry(directory, b"w", Tag(z, b"w"), element_for(z))))
    node.handle(QueryTag(rt.new_rpc(), b"asker", obj))
    assert rt.sent[-1][2].entry.tag == Tag(4, b"w")


def test_query_list_floor_filter_is_strict_in_static_mode():
    node, rt, directory = make_node()
    obj = b"o"
    for z in (1, 2):
        node.handle(PutData(rt.new_rpc(), b"w", obj, signed_entry(directory, b"w", Tag(z, b"w"), element_for(z))))
    node.handle(QueryList(rt.new_rpc(), b"asker", obj, Tag(1, b"w")))
    reply = rt.sent[-1][2]
    assert [e.tag.z for e in reply.entries] == [2]


def test_store_min_tag_never_decreases():
    node, rt, directory = make_node(delta=1)  # capacity 2
    obj = b"o"
    mins = []
    for z in (5, 3, 7, 2, 9):
        node.handle(PutData(rt.new_rpc(), b"w", obj, signed_entry(directory, b"w", Tag(z, b"w"), element_for(z))))
        mins.append(min(node.store(obj).entries).z)
    assert mins == sorted(mins)


# ----------------------------------------------------- DAP property suites


def dap_records(trace, kind):
    return [r for r in trace.dap_records if r[0] == kind]


def run_static(seed, nodes=7, k=3, rounds=3):
    ids = make_ids(nodes, salt=f"p{seed}")
    objs = [f"p{seed}-o{i}".encode() for i in range(3)]
    rng = random.Random(seed)
    steps = []
    for r in range(rounds):
        at = r * 1200.0
        for node in ids[:4]:
            steps.append(Step("read", node, rng.choice(objs), at=at))
        for node in ids[4:6]:
            steps.append(Step("write", node, rng.choice(objs), value_size=24, at=at))
    cfg = SimConfig(
        seed=seed,
        node_ids=ids,
        crf_n=nodes,
        k=k,
        delta=3,
        workload=Workload("periodic", steps),
        delay=FAST_DELAY,
        dynamic=False,
        placement="full",
        ring_bits=32,
    )
    return Simulation(cfg).run()


def test_dap1_put_then_get_sees_tag():
    """Any get-tag/get-data invoked after a put-data completed returns >= its tag."""
    for seed in range(6):
        trace = run_static(seed)
        puts = dap_records(trace, "put-data")
        for kind in ("get-tag", "get-data"):
            for g in dap_records(trace, kind):
                _, obj, _, invoked, _, tag = g
                for _, pobj, _, _, presp, ptag in puts:
                    if pobj == obj and presp < invoked:
                        assert tag >= ptag, (seed, kind, tag, ptag)


def test_dap2_returned_tags_were_put():
    """Every tag a get-data returns was the argument of some put-data that did
    not start strictly after the get-data finished, or the initial tag."""
    for seed in range(6):
        trace = run_static(seed)
        puts = dap_records(trace, "put-data")
        for _, obj, _, _, responded, tag in dap_records(trace, "get-data"):
            if tag == INITIAL_TAG:
                continue
            assert any(
                pobj == obj and ptag == tag and pinv < responded
                for _, pobj, _, pinv, _, ptag in puts
            )


def test_write_increments_and_ties_break_by_writer():
    ids = make_ids(5, salt="tie")
    obj = b"tie-obj"
    steps = [
        Step("write", ids[0], obj, value_size=16, at=0.0),
        Step("write", ids[1], obj, value_size=16, at=800.0),
        Step("read", ids[2], obj, at=1600.0),
    ]
    cfg = SimConfig(
        seed=3, node_ids=ids, crf_n=5, k=3, delta=2,
        workload=Workload("periodic", steps), delay=FAST_DELAY,
        dynamic=False, placement="full", ring_bits=32,
    )
    trace = Simulation(cfg).run()
    w1, w2, r = trace.ops
    assert w1.tag == Tag(1, ids[0])
    assert w2.tag == Tag(2, ids[1])
    assert r.tag == w2.tag
    # tie-break ordering on equal counters is by writer id
    assert Tag(6, b"w2") > Tag(6, b"w1")
    assert Tag(6, b"w1") < Tag(7, b"a")


def test_termination_under_byzantine_budget():
    """Every operation responds with b = byz_budget silent or stale nodes."""
    for seed in (0, 1, 2):
        cfg = safety_config(seed, 10)
        trace = Simulation(cfg).run()
        assert not trace.stuck
        assert all(op.complete for op in trace.ops)


def test_stale_replay_does_not_mask_completed_writes():
    """A stale-but-signed reply never drags get-tag below a completed write."""
    for seed in (3, 4, 5):
        cfg = safety_config(seed, 13)
        trace = Simulation(cfg).run()
        writes = sorted(
            (op for op in trace.ops if op.kind == "write"), key=lambda o: o.respond_ms
        )
        for i, w in enumerate(writes):
            later = [
                op
                for op in trace.ops
                if op.kind == "read" and op.obj == w.obj and op.invoke_ms > w.respond_ms
            ]
            for r in later:
                assert r.tag >= w.tag
