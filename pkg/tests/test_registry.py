"""Registry semantics: validity, inclusion, the membership floor, signatures."""

import random

import pytest

from rlncmem.errors import BadSignature, DuplicateChange, MembershipFloor
from rlncmem.identity import KeyDirectory
from rlncmem.registry import ADD, REMOVE, Change, MembershipRegistry, active, make_change

from .oracles import replay_active


def fresh(n=3, floor=2):
    directory = KeyDirectory()
    reg = MembershipRegistry(directory, floor)
    members = [f"m{i}".encode() for i in range(n)]
    reg.bootstrap(members)
    return directory, reg, members


def test_add_then_get_contains_change():
    directory, reg, _ = fresh()
    signer = directory.register(b"new")
    change = make_change(ADD, b"new", signer)
    reg.add(change)
    assert change in reg.get()


def test_get_before_adds_returns_bootstrap():
    _, reg, members = fresh(n=4)
    snap = reg.get()
    assert active(snap) == set(members)


def test_inclusion_between_gets():
    directory, reg, _ = fresh()
    first = set(reg.get())
    signer = directory.register(b"x")
    reg.add(make_change(ADD, b"x", signer))
    second = set(reg.get())
    assert first <= second


def test_membership_floor():
    directory, reg, members = fresh(n=2, floor=2)
    signer = directory.register(members[0])
    with pytest.raises(MembershipFloor):
        reg.add(make_change(REMOVE, members[0], signer))
    # after one more member joins, a depart is allowed
    joiner = directory.register(b"extra")
    reg.add(make_change(ADD, b"extra", joiner))
    reg.add(make_change(REMOVE, members[0], signer))
    assert active(reg.get()) == {members[1], b"extra"}


def test_bad_signature_rejected():
    directory, reg, _ = fresh()
    other = directory.register(b"other")
    directory.register(b"victim")
    forged = Change(ADD, b"victim", other.sign(b"+" + b"victim"))
    # signature bytes were made with the wrong key for the claimed subject
    with pytest.raises(BadSignature):
        reg.add(forged)


def test_remove_needs_prior_add():
    directory, reg, _ = fresh()
    signer = directory.register(b"ghost")
    with pytest.raises(BadSignature):
        reg.add(make_change(REMOVE, b"ghost", signer))


def test_duplicate_change_rejected():
    directory, reg, _ = fresh()
    signer = directory.register(b"dup")
    reg.add(make_change(ADD, b"dup", signer))
    with pytest.raises(DuplicateChange):
        reg.add(make_change(ADD, b"dup", signer))


def test_active_formula():
    directory = KeyDirectory()
    a = directory.register(b"a")
    b = directory.register(b"b")
    changes = (
        make_change(ADD, b"a", a),
        make_change(ADD, b"b", b),
        make_change(REMOVE, b"a", a),
    )
    assert active(changes) == {b"b"}


def test_active_matches_replay_oracle():
    rng = random.Random(11)
    directory = KeyDirectory()
    for _ in range(60):
        reg = MembershipRegistry(directory, 1)
        nodes = [f"r{i}".encode() for i in range(6)]
        reg.bootstrap(nodes[:3])
        signers = {n: directory.register(n) for n in nodes}
        for _ in range(rng.randrange(1, 12)):
            node = rng.choice(nodes)
            sign = rng.choice((ADD, REMOVE))
            try:
                reg.add(make_change(sign, node, signers[node]))
            except (DuplicateChange, MembershipFloor, BadSignature):
                pass
        snap = reg.get()
        assert active(snap) == replay_active([(c.sign, c.node) for c in snap])
        # floor holds at every point of every admissible execution
        assert len(active(snap)) >= 1


def test_positions_total_order():
    directory, reg, _ = fresh(n=2, floor=1)
    pos = []
    for name in (b"p", b"q", b"r"):
        signer = directory.register(name)
        pos.append(reg.add(make_change(ADD, name, signer)))
    assert pos == sorted(pos)
    assert len(set(pos)) == len(pos)
