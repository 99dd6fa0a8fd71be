"""Offline atomicity verifier over per-object operation traces.

Write tags are unique by construction (counter plus writer id), so
per-object linearizability reduces to three tag-order conditions:

  A1  any operation responding before a write's invocation carries a tag
      strictly below the write's; before a read's invocation, at most the
      read's tag;
  A2  all write tags are distinct (hence totally ordered);
  A3  every read returns some write's tag and that write's value digest, or
      the initial pair.

Incomplete trailing writes are treated as possibly effective (their tags may
legitimately surface in later reads); incomplete reads are pruned and
reported.  The reduction itself is cross-checked in the test suite against an
exhaustive linearization search on small histories.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

INITIAL = (0, "")
INITIAL_DIGEST = "bot"


@dataclass(frozen=True)
class OpRecord:
    obj: str
    kind: str  # read | write
    invoker: str
    invoke: float
    respond: float | None
    tag: tuple[int, str] | None
    digest: str
    op_id: int = 0

    @property
    def complete(self) -> bool:
        return self.respond is not None


@dataclass
class Violation:
    rule: str
    obj: str
    detail: str
    ops: tuple[int, ...] = ()

    def __str__(self) -> str:
        return f"[{self.rule}] object {self.obj}: {self.detail} (ops {self.ops})"


@dataclass
class Verdict:
    ok: bool
    violations: list[Violation] = field(default_factory=list)
    checked_ops: int = 0
    pruned_reads: int = 0
    open_writes: int = 0

    def report(self) -> str:
        lines = [
            f"atomicity: {'PASS' if self.ok else 'FAIL'}"
            f" ({self.checked_ops} ops, {self.open_writes} open writes,"
            f" {self.pruned_reads} pruned reads)"
        ]
        lines.extend(str(v) for v in self.violations)
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checked_ops": self.checked_ops,
            "pruned_reads": self.pruned_reads,
            "open_writes": self.open_writes,
            "violations": [
                {"rule": v.rule, "obj": v.obj, "detail": v.detail, "ops": list(v.ops)}
                for v in self.violations
            ],
        }


def _canon_tag(tag: tuple[int, str] | None) -> tuple[int, str]:
    if tag is None or tag[0] == 0:
        return INITIAL
    return tag


def check(records: list[OpRecord]) -> Verdict:
    """Verify A1-A3 for every object appearing in the records."""
    verdict = Verdict(ok=True)
    by_obj: dict[str, list[OpRecord]] = {}
    for rec in records:
        if rec.kind in ("read", "write"):
            by_obj.setdefault(rec.obj, []).append(rec)
    for obj in sorted(by_obj):
        _check_object(obj, by_obj[obj], verdict)
    verdict.ok = not verdict.violations
    return verdict


def _check_object(obj: str, ops: list[OpRecord], verdict: Verdict) -> None:
    complete = [op for op in ops if op.complete]
    open_writes = [op for op in ops if not op.complete and op.kind == "write"]
    verdict.pruned_reads += sum(1 for op in ops if not op.complete and op.kind == "read")
    verdict.open_writes += len(open_writes)
    verdict.checked_ops += len(complete)

    # A2: unique, totally ordered write tags
    write_digest: dict[tuple[int, str], str] = {}
    for op in complete + open_writes:
        if op.kind != "write":
            continue
        tag = _canon_tag(op.tag)
        if tag == INITIAL:
            verdict.violations.append(Violation("A2", obj, "write carries the initial tag", (op.op_id,)))
            continue
        if tag in write_digest:
            verdict.violations.append(
                Violation("A2", obj, f"duplicate write tag {tag}", (op.op_id,))
            )
        write_digest[tag] = op.digest

    # A3: reads return a written (or initial) pair
    for op in complete:
        if op.kind != "read":
            continue
        tag = _canon_tag(op.tag)
        if tag == INITIAL:
            if op.digest != INITIAL_DIGEST:
                verdict.violations.append(
                    Violation("A3", obj, "initial tag with a non-initial value", (op.op_id,))
                )
            continue
        if tag not in write_digest:
            verdict.violations.append(
                Violation("A3", obj, f"read returned unwritten tag {tag}", (op.op_id,))
            )
        elif write_digest[tag] != op.digest:
            verdict.violations.append(
                Violation(
                    "A3", obj, f"read value disagrees with the write of tag {tag}", (op.op_id,)
                )
            )

    # A1: real-time order respected by tags
    by_invoke = sorted(complete, key=lambda op: (op.invoke, op.op_id))
    by_respond = sorted(complete, key=lambda op: (op.respond, op.op_id))
    max_tag = INITIAL
    max_op = None
    idx = 0
    for op in by_invoke:
        while idx < len(by_respond) and by_respond[idx].respond < op.invoke:
            done = by_respond[idx]
            tag = _canon_tag(done.tag)
            if tag > max_tag:
                max_tag = tag
                max_op = done
            idx += 1
        tag = _canon_tag(op.tag)
        if op.kind == "write":
            if max_tag >= tag:
                verdict.violations.append(
                    Violation(
                        "A1",
                        obj,
                        f"write tag {tag} not above preceding tag {max_tag}",
                        (max_op.op_id if max_op else -1, op.op_id),
                    )
                )
        else:
            if max_tag > tag:
                verdict.violations.append(
                    Violation(
                        "A1",
                        obj,
                        f"read tag {tag} below preceding tag {max_tag}",
                        (max_op.op_id if max_op else -1, op.op_id),
                    )
                )


def check_oracle_log(entries: list[tuple]) -> Verdict:
    """Replay the registry trace asserting Total Order, Validity, and Inclusion."""
    verdict = Verdict(ok=True)
    added: set[tuple[str, str]] = set()
    last_pos = -1
    last_snapshot: set[tuple[str, str]] | None = None
    for i, entry in enumerate(entries):
        kind = entry[0]
        if kind == "add":
            _, _, _, change, pos = entry
            change = tuple(change)
            if pos <= last_pos:
                verdict.violations.append(
                    Violation("TotalOrder", "-", f"add position {pos} not after {last_pos}", (i,))
                )
            last_pos = pos
            added.add(change)
        elif kind == "get":
            snapshot = {tuple(c) for c in entry[3]}
            ghosts = snapshot - added
            if ghosts:
                verdict.violations.append(
                    Violation("Validity", "-", f"snapshot returned never-added {sorted(ghosts)}", (i,))
                )
            if last_snapshot is not None and not last_snapshot <= snapshot:
                verdict.violations.append(
                    Violation(
                        "Inclusion",
                        "-",
                        f"snapshot shrank by {sorted(last_snapshot - snapshot)}",
                        (i,),
                    )
                )
            last_snapshot = snapshot
        verdict.checked_ops += 1
    verdict.ok = not verdict.violations
    return verdict


def records_from_trace(trace) -> list[OpRecord]:
    out = []
    for op in trace.ops:
        if op.kind not in ("read", "write"):
            continue
        tag = (op.tag.z, op.tag.w.decode()) if op.tag is not None else None
        # an op that never produced a result is an incomplete operation for
        # atomicity purposes, whatever made it give up
        respond = op.respond_ms if op.status == "ok" else None
        out.append(
            OpRecord(
                obj=op.obj.decode() if op.obj else "",
                kind=op.kind,
                invoker=op.node.decode(),
                invoke=op.invoke_ms,
                respond=respond,
                tag=tag,
                digest=op.value_digest,
                op_id=op.op_id,
            )
        )
    return out


def records_from_dump(records: list[dict]) -> list[OpRecord]:
    out = []
    for rec in records:
        if rec.get("record") != "op" or rec.get("kind") not in ("read", "write"):
            continue
        tag = (rec["tag_z"], rec["tag_w"]) if rec.get("tag_z") is not None else None
        respond = rec["respond_ms"] if rec.get("status") == "ok" else None
        out.append(
            OpRecord(
                obj=rec.get("obj") or "",
                kind=rec["kind"],
                invoker=rec["node"],
                invoke=rec["invoke_ms"],
                respond=respond,
                tag=tag,
                digest=rec.get("digest", ""),
                op_id=rec.get("op_id", 0),
            )
        )
    return out


def check_trace(trace) -> Verdict:
    """Atomicity plus oracle-log semantics for one finished simulation trace."""
    verdict = check(records_from_trace(trace))
    oracle = check_oracle_log(trace.oracle_log)
    verdict.violations.extend(oracle.violations)
    verdict.ok = not verdict.violations
    return verdict


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m rlncmem.checker",
        description="Check a harness trace dump for atomicity and oracle violations.",
    )
    parser.add_argument("trace", help="newline-delimited trace dump file")
    parser.add_argument("--json", dest="as_json", action="store_true", help="machine-readable verdict")
    args = parser.parse_args(argv)
    with open(args.trace) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    verdict = check(records_from_dump(records))
    oracle_entries = [tuple(r["entry"]) for r in records if r.get("record") == "oracle"]
    oracle = check_oracle_log(oracle_entries)
    verdict.violations.extend(oracle.violations)
    verdict.ok = not verdict.violations
    if args.as_json:
        print(json.dumps(verdict.as_dict()))
    else:
        print(verdict.report())
    return 0 if verdict.ok else 1


if __name__ == "__main__":
    sys.exit(main())
