"""Runtime trace loading.

A trace is line-delimited JSON: {"seq":int,"tid":int,"kind":...,"target":str}
with strictly increasing seq.  Instrumentation tooling is expected to emit
this format; nothing here runs or rewrites binaries.
"""

from __future__ import annotations

import json
from typing import IO, Iterable

from ckt.errors import FormatError
from ckt.model import TRACE_EVENT_KINDS, TraceEvent, TraceLog


def load_trace(lines: Iterable[str] | IO[str], name: str = "trace") -> TraceLog:
    """Parse a trace stream; a dangling release is a warning, not an error."""
    log = TraceLog(name=name)
    held: dict[int, dict[str, int]] = {}
    last_seq = None
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{name}: invalid JSON: {exc}", lineno) from exc
        try:
            seq = int(doc["seq"])
            tid = int(doc["tid"])
            kind = str(doc["kind"])
            target = str(doc["target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{name}: bad trace record: {exc}", lineno) from exc
        if kind not in TRACE_EVENT_KINDS:
            raise FormatError(f"{name}: unknown event kind {kind!r}", lineno)
        if last_seq is not None and seq <= last_seq:
            raise FormatError(
                f"{name}: seq {seq} not greater than previous {last_seq}", lineno
            )
        last_seq = seq
        log.events.append(TraceEvent(seq, tid, kind, target))
        log.threads.add(tid)
        if kind == "acquire":
            held.setdefault(tid, {})
            held[tid][target] = held[tid].get(target, 0) + 1
        elif kind == "release":
            locks = held.setdefault(tid, {})
            if locks.get(target, 0) == 0:
                log.warnings.append(
                    f"line {lineno}: release of {target} on tid {tid} without acquire"
                )
            else:
                locks[target] -= 1
    return log


def held_locks_at(log: TraceLog, tid: int, upto_seq: int) -> set[str]:
    """Locks held by tid just before the event with seq == upto_seq.

    Linear recomputation from the start of the trace; used as the simple
    reference the incremental lockset bookkeeping is checked against.
    """
    counts: dict[str, int] = {}
    for ev in log.events:
        if ev.seq >= upto_seq:
            break
        if ev.tid != tid:
            continue
        if ev.kind == "acquire":
            counts[ev.target] = counts.get(ev.target, 0) + 1
        elif ev.kind == "release" and counts.get(ev.target, 0) > 0:
            counts[ev.target] -= 1
    return {lock for lock, n in counts.items() if n > 0}
