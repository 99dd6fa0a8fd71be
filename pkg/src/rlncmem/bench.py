"""Benchmark CLI: replication baselines and the four scalability scenarios.

Desk-scale defaults shrink the reference axes while preserving the ratios
that drive the trends: object sizes sweep 32kB to 2MB (standing in for 32kB
to 16MB, a fixed 8x scale factor on the upper points), node counts 13 to 26,
readers up to 60.  Full-scale values remain accepted flags.  Readers and
writers are dedicated client endpoints so concurrency is not throttled by
per-node operation serialization; data nodes serve storage.

Every sweep point runs the consistency checker before its latencies are
reported; the process exits nonzero if any point fails.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import statistics
import sys
from dataclasses import dataclass, field, replace

from .checker import check_trace
from .sim import (
    DelayModel,
    SILENT,
    SimConfig,
    Simulation,
    Step,
    Workload,
    make_ids,
)

CSV_HEADER = "scenario,algo,op,sweep,mean_ms,p50_ms,p99_ms,ops,stored_bytes,wire_bytes"

SCENARIOS = ("object-size", "object-count", "node-count", "concurrency", "churn")
ALGOS = ("deram", "mwabd-full", "mwabd-cluster")

SIZE_SWEEP = [32_768, 131_072, 524_288, 2_097_152]
COUNT_SWEEP = [1, 10, 100]
NODE_SWEEP = [13, 20, 26]
READER_SWEEP = [10, 20, 30, 40]


@dataclass
class ScenarioSpec:
    scenario: str
    algos: list[str] = field(default_factory=lambda: list(ALGOS))
    sweep: list[int] = field(default_factory=list)
    nodes: int = 13
    readers: int = 10
    writers: int = 3
    object_size: int = 32_768
    objects: int = 1
    crf_n: int = 5
    k: int = 3
    delta: int = 3
    byz: int = 0
    inject_period_ms: float = 10_000.0
    rounds: int = 4
    seed: int = 1
    repetitions: int = 1
    delay: DelayModel = field(default_factory=lambda: DelayModel(150.0, 6553.6, 0.01))

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for algo in self.algos:
            if algo not in ALGOS:
                raise ValueError(f"unknown algo {algo!r}")
        if self.k > self.crf_n:
            raise ValueError("deram requires k <= n")
        if not self.sweep:
            self.sweep = {
                "object-size": list(SIZE_SWEEP),
                "object-count": list(COUNT_SWEEP),
                "node-count": list(NODE_SWEEP),
                "concurrency": list(READER_SWEEP),
                "churn": [0],
            }[self.scenario]


@dataclass
class ResultRow:
    scenario: str
    algo: str
    op: str
    sweep: int
    mean_ms: float
    p50_ms: float
    p99_ms: float
    ops: int
    stored_bytes: int
    wire_bytes: int

    def csv(self) -> str:
        return (
            f"{self.scenario},{self.algo},{self.op},{self.sweep},"
            f"{self.mean_ms:.3f},{self.p50_ms:.3f},{self.p99_ms:.3f},"
            f"{self.ops},{self.stored_bytes},{self.wire_bytes}"
        )


def _algo_knobs(algo: str, spec: ScenarioSpec, nodes: int) -> dict:
    if algo == "deram":
        return dict(
            crf_n=spec.crf_n,
            k=spec.k,
            dynamic=True,
            placement="ring",
            sign_entries=True,
            quorum_rule="byzantine",
        )
    if algo == "mwabd-full":
        return dict(
            crf_n=nodes,
            k=1,
            dynamic=False,
            placement="full",
            sign_entries=False,
            quorum_rule="majority",
        )
    return dict(
        crf_n=spec.crf_n,
        k=1,
        dynamic=False,
        placement="ring",
        sign_entries=False,
        quorum_rule="majority",
    )


def _object_ids(count: int, seed: int) -> list[bytes]:
    return [f"s{seed}-obj{i:04d}".encode() for i in range(count)]


def _populate_steps(writers: list[bytes], objects: list[bytes], size: int, spacing: float) -> tuple[list[Step], float]:
    """Each object written exactly once, writers round-robin, serialized per writer."""
    steps = []
    per_writer: dict[bytes, int] = {w: 0 for w in writers}
    for i, obj in enumerate(objects):
        w = writers[i % len(writers)]
        steps.append(Step("write", w, obj, value_size=size, at=per_writer[w] * spacing))
        per_writer[w] += 1
    end = max(per_writer.values()) * spacing
    return steps, end


def _round_steps(
    readers: list[bytes],
    writers: list[bytes],
    objects: list[bytes],
    size: int,
    rounds: int,
    period: float,
    start: float,
    rng: random.Random,
) -> list[Step]:
    """Synchronized rounds: every client fires at the round boundary (the
    reference cadence), objects drawn uniformly per client per round."""
    steps = []
    for r in range(rounds):
        at = start + r * period
        for node in readers:
            steps.append(Step("read", node, rng.choice(objects), at=at))
        for node in writers:
            steps.append(Step("write", node, rng.choice(objects), value_size=size, at=at))
    return steps


def build_point_config(spec: ScenarioSpec, algo: str, sweep_value: int, seed: int) -> SimConfig:
    nodes = spec.nodes
    size = spec.object_size
    objects = spec.objects
    readers = spec.readers
    if spec.scenario == "object-size":
        size = sweep_value
    elif spec.scenario == "object-count":
        objects = sweep_value
    elif spec.scenario == "node-count":
        nodes = sweep_value
    elif spec.scenario == "concurrency":
        readers = sweep_value

    salt = f"b{seed}"
    data_nodes = make_ids(nodes, "n", salt)
    reader_ids = make_ids(readers, "rd", salt)
    writer_ids = make_ids(spec.writers, "wr", salt)
    obj_ids = _object_ids(objects, seed)
    knobs = _algo_knobs(algo, spec, nodes)

    rng = random.Random(seed * 7919 + sweep_value)
    # period adapts to the transfer time of the biggest broadcast in the point
    unit = size / spec.delay.egress_bandwidth
    period = max(spec.inject_period_ms / 4.0, 4.0 * nodes * unit, 2000.0)
    spacing = max(800.0, 3.0 * nodes * unit)
    populate, pop_end = _populate_steps(writer_ids, obj_ids, size, spacing)
    steps = populate + _round_steps(
        reader_ids, writer_ids, obj_ids, size, spec.rounds, period, pop_end + period, rng
    )

    byzantine = {}
    if spec.byz and algo == "deram":
        byzantine = {
            node: (SILENT if i % 2 == 0 else "stale-replay")
            for i, node in enumerate(data_nodes[-spec.byz :])
        }
    return SimConfig(
        seed=seed,
        node_ids=data_nodes + reader_ids + writer_ids,
        initial_members=data_nodes,
        crf_n=knobs["crf_n"],
        k=knobs["k"],
        delta=spec.delta,
        workload=Workload("periodic", steps),
        byzantine=byzantine,
        delay=spec.delay,
        dynamic=knobs["dynamic"],
        placement=knobs["placement"],
        sign_entries=knobs["sign_entries"],
        quorum_rule=knobs["quorum_rule"],
        ring_bits=32,
        collect_events=False,
    )


def build_churn_config(spec: ScenarioSpec, seed: int) -> SimConfig:
    """Join/depart storm with ongoing reads and writes; correctness only."""
    salt = f"c{seed}"
    members = make_ids(spec.crf_n + 5, "n", salt)
    joiners = make_ids(5, "j", salt)
    obj_ids = _object_ids(max(spec.objects, 4), seed)
    rng = random.Random(seed * 31 + 7)
    steps, _ = _populate_steps(members[:3], obj_ids, spec.object_size, 900.0)
    t = 4000.0
    for i, joiner in enumerate(joiners):
        steps.append(Step("join", joiner, at=t + i * 2500.0))
    for i, leaver in enumerate(members[3:6]):
        steps.append(Step("depart", leaver, at=t + 1200.0 + i * 3000.0))
    for r in range(6):
        at = 2000.0 + r * 2000.0
        for node in members[:3]:
            steps.append(Step("read", node, rng.choice(obj_ids), at=at))
        steps.append(Step("write", members[6], rng.choice(obj_ids), value_size=spec.object_size, at=at))
    return SimConfig(
        seed=seed,
        node_ids=members + joiners,
        initial_members=members,
        crf_n=spec.crf_n,
        k=spec.k,
        delta=spec.delta,
        workload=Workload("periodic", steps),
        delay=spec.delay,
        dynamic=True,
        ring_bits=32,
        collect_events=False,
    )


def _percentiles(samples: list[float]) -> tuple[float, float, float]:
    mean = statistics.fmean(samples)
    ordered = sorted(samples)
    p50 = ordered[len(ordered) // 2]
    p99 = ordered[min(len(ordered) - 1, int(0.99 * (len(ordered) - 1)))]
    return mean, p50, p99


def summarize(trace, scenario: str, algo: str, sweep_value: int) -> list[ResultRow]:
    rows = []
    for op_kind in ("read", "write"):
        lats = [
            op.respond_ms - op.invoke_ms
            for op in trace.ops
            if op.kind == op_kind and op.complete and op.status == "ok"
        ]
        if not lats:
            continue
        mean, p50, p99 = _percentiles(lats)
        rows.append(
            ResultRow(
                scenario,
                algo,
                op_kind,
                sweep_value,
                mean,
                p50,
                p99,
                len(lats),
                trace.stored_payload_bytes,
                trace.wire_bytes,
            )
        )
    return rows


def run_scenario(spec: ScenarioSpec, verbose: bool = False) -> tuple[list[ResultRow], list[str]]:
    """Run every sweep point for every algo; returns rows plus failure strings."""
    rows: list[ResultRow] = []
    failures: list[str] = []
    if spec.scenario == "churn":
        for rep in range(spec.repetitions):
            config = build_churn_config(spec, spec.seed + rep)
            trace = Simulation(config).run()
            verdict = check_trace(trace)
            if trace.stuck or not verdict.ok:
                failures.append(
                    f"churn seed={spec.seed + rep}: stuck={len(trace.stuck)} {verdict.report()}"
                )
            rows.extend(summarize(trace, "churn", "deram", rep))
            if verbose:
                print(f"churn rep {rep}: ops={len(trace.ops)} retries={trace.retries}")
        return rows, failures
    for algo in spec.algos:
        for sweep_value in spec.sweep:
            lat_samples: dict[str, list[float]] = {"read": [], "write": []}
            stored = wire = 0
            ok = True
            for rep in range(spec.repetitions):
                config = build_point_config(spec, algo, sweep_value, spec.seed + rep)
                try:
                    trace = Simulation(config).run()
                except Exception as exc:  # keep sweeping per-point failures
                    failures.append(f"{algo}@{sweep_value}: {type(exc).__name__}: {exc}")
                    ok = False
                    break
                verdict = check_trace(trace)
                if trace.stuck or not verdict.ok:
                    failures.append(
                        f"{algo}@{sweep_value}: stuck={len(trace.stuck)} {verdict.report()}"
                    )
                    ok = False
                    break
                for op in trace.ops:
                    if op.kind in lat_samples and op.complete and op.status == "ok":
                        lat_samples[op.kind].append(op.respond_ms - op.invoke_ms)
                stored = trace.stored_payload_bytes
                wire += trace.wire_bytes
            if not ok:
                continue
            for op_kind, lats in lat_samples.items():
                if not lats:
                    continue
                mean, p50, p99 = _percentiles(lats)
                rows.append(
                    ResultRow(
                        spec.scenario, algo, op_kind, sweep_value,
                        mean, p50, p99, len(lats), stored, wire,
                    )
                )
            if verbose:
                got = {k: len(v) for k, v in lat_samples.items()}
                print(f"{spec.scenario} {algo}@{sweep_value}: ops={got}")
    return rows, failures


def emit(rows: list[ResultRow], out_dir: str, svg: bool = False) -> list[str]:
    """CSV (fixed column order) and optional per-scenario SVG line charts."""
    if not rows:
        raise ValueError("refusing to emit an empty result set")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")
    paths.append(csv_path)
    if svg:
        paths.extend(_emit_svg(rows, out_dir))
    return paths


def _emit_svg(rows: list[ResultRow], out_dir: str) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    scenarios = sorted({r.scenario for r in rows})
    for scenario in scenarios:
        fig, ax = plt.subplots(figsize=(6.5, 4.2))
        sub = [r for r in rows if r.scenario == scenario]
        for algo in sorted({r.algo for r in sub}):
            for op_kind, style in (("read", "-"), ("write", "--")):
                pts = sorted(
                    [(r.sweep, r.mean_ms) for r in sub if r.algo == algo and r.op == op_kind]
                )
                if pts:
                    ax.plot(
                        [p[0] for p in pts],
                        [p[1] / 1000.0 for p in pts],
                        style,
                        marker="x",
                        label=f"{algo} ({op_kind})",
                    )
        if scenario in ("object-size", "object-count"):
            ax.set_xscale("log")
        ax.set_xlabel(
            {
                "object-size": "object size (bytes)",
                "object-count": "number of objects",
                "node-count": "number of nodes",
                "concurrency": "number of readers",
                "churn": "repetition",
            }[scenario]
        )
        ax.set_ylabel("latency (logical s)")
        ax.grid(True, which="both", alpha=0.4)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{scenario}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="Scalability benchmark runner.")
    parser.add_argument("--scenario", required=True, choices=SCENARIOS)
    parser.add_argument("--algo", default="all", help="comma list of deram,mwabd-full,mwabd-cluster or 'all'")
    parser.add_argument("--nodes", type=int, default=13)
    parser.add_argument("--readers", type=int, default=10)
    parser.add_argument("--writers", type=int, default=3)
    parser.add_argument("--object-size", type=int, default=32_768)
    parser.add_argument("--objects", type=int, default=1)
    parser.add_argument("--n", dest="crf_n", type=int, default=5, help="coded replication factor")
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--delta", type=int, default=3)
    parser.add_argument("--byz", type=int, default=0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--sweep", default="", help="comma list overriding the scenario sweep")
    parser.add_argument("--rounds", type=int, default=4)
    parser.add_argument("--repetitions", type=int, default=1)
    parser.add_argument("--period", type=float, default=10_000.0, help="inject period (logical ms)")
    parser.add_argument("--out", default="bench-out")
    parser.add_argument("--svg", action="store_true")
    parser.add_argument("--config", default="", help="JSON file overriding any flag")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
    algos = list(ALGOS) if args.algo == "all" else [a.strip() for a in args.algo.split(",")]
    spec = ScenarioSpec(
        scenario=overrides.get("scenario", args.scenario),
        algos=overrides.get("algos", algos),
        sweep=[int(v) for v in args.sweep.split(",") if v] or overrides.get("sweep", []),
        nodes=overrides.get("nodes", args.nodes),
        readers=overrides.get("readers", args.readers),
        writers=overrides.get("writers", args.writers),
        object_size=overrides.get("object_size", args.object_size),
        objects=overrides.get("objects", args.objects),
        crf_n=overrides.get("crf_n", args.crf_n),
        k=overrides.get("k", args.k),
        delta=overrides.get("delta", args.delta),
        byz=overrides.get("byz", args.byz),
        inject_period_ms=overrides.get("inject_period_ms", args.period),
        rounds=overrides.get("rounds", args.rounds),
        seed=overrides.get("seed", args.seed),
        repetitions=overrides.get("repetitions", args.repetitions),
    )
    if "delay" in overrides:
        spec.delay = DelayModel(**overrides["delay"])
    rows, failures = run_scenario(spec, verbose=args.verbose)
    if rows:
        for path in emit(rows, args.out, svg=args.svg):
            print(f"wrote {path}")
    for line in failures:
        print(f"FAIL {line}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
