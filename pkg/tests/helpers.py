"""Shared builders for simulation test configs."""

from __future__ import annotations

import random

from rlncmem.protocol import byz_budget
from rlncmem.sim import (
    DelayModel,
    SILENT,
    STALE_REPLAY,
    SimConfig,
    Step,
    Workload,
    make_ids,
)

FAST_DELAY = DelayModel(prop_base=50.0, egress_bandwidth=6553.6, jitter_fraction=1.5)


def objects_for(seed: int, count: int) -> list[bytes]:
    return [f"s{seed}-o{i:02d}".encode() for i in range(count)]


def safety_config(
    seed: int,
    crf: int,
    *,
    churn: bool = False,
    k: int = 3,
    delta: int = 3,
    rounds: int = 2,
    objects: int = 20,
    value_size: int = 24,
) -> SimConfig:
    """10 readers + 3 writers over a byzantine-budget adversary mix; churn adds
    5 joins and 3 departs from dedicated nodes."""
    rng = random.Random(seed)
    salt = f"s{seed}"
    b = byz_budget(crf, k)
    members = make_ids(16 + b, "n", salt)
    joiners = make_ids(5, "j", salt) if churn else []
    objs = objects_for(seed, objects)
    byzantine: dict[bytes, str] = {}
    candidates = list(members)
    rng.shuffle(candidates)
    for i in range(b):
        byzantine[candidates[i]] = SILENT if i % 2 == 0 else STALE_REPLAY
    honest = [n for n in members if n not in byzantine]
    readers, writers, departers = honest[:10], honest[10:13], honest[13:16]
    steps = []
    for r in range(rounds):
        at = r * 1500.0
        for node in readers:
            steps.append(Step("read", node, rng.choice(objs), at=at))
        for node in writers:
            steps.append(Step("write", node, rng.choice(objs), value_size=value_size, at=at))
    if churn:
        for i, joiner in enumerate(joiners):
            steps.append(Step("join", joiner, at=500.0 + i * 600.0))
        for i, leaver in enumerate(departers):
            steps.append(Step("depart", leaver, at=900.0 + i * 800.0))
    return SimConfig(
        seed=seed,
        node_ids=members + joiners,
        initial_members=members,
        crf_n=crf,
        k=k,
        delta=delta,
        workload=Workload("periodic", steps),
        byzantine=byzantine,
        delay=FAST_DELAY,
        dynamic=True,
        ring_bits=32,
        collect_timeout_ms=1500.0,
        dap_timeout_ms=1500.0,
        collect_events=True,
    )
