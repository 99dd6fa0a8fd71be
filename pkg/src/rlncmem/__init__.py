"""RLNC-coded, Byzantine-tolerant atomic shared memory on a simulated network."""

from .messages import INITIAL_TAG, ListEntry, Tag
from .protocol import Flexnode, NodeConfig, ObjectStore, byz_budget, quorum_size
from .registry import Change, MembershipRegistry, active
from .rlnc import CodedElement, EncodingParams, decode, encode, rank, recode
from .sim import DelayModel, SimConfig, Simulation, Step, Trace, Workload, make_ids, run_config

__all__ = [
    "INITIAL_TAG",
    "ListEntry",
    "Tag",
    "Flexnode",
    "NodeConfig",
    "ObjectStore",
    "byz_budget",
    "quorum_size",
    "Change",
    "MembershipRegistry",
    "active",
    "CodedElement",
    "EncodingParams",
    "decode",
    "encode",
    "rank",
    "recode",
    "DelayModel",
    "SimConfig",
    "Simulation",
    "Step",
    "Trace",
    "Workload",
    "make_ids",
    "run_config",
]
