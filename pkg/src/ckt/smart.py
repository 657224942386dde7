"""Rule-driven response augmentation: race alerts, similar defects, change
provenance, mutex advice, stale-comment flags.

Each rule is explicit and deterministic.  The dynamic race detector is
lockset-based: a variable's candidate lockset starts as every lock in the
trace and is intersected with the holder's locks on each access; an empty
lockset plus multi-threaded access including a write signals a race.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ckt import ids
from ckt.config import normalize_tokens
from ckt.errors import DomainError, NotFoundError
from ckt.graph import KnowledgeGraph
from ckt.history import parse_timestamp
from ckt.model import Entity, TraceLog
from ckt.query.evaluate import ResultSet

ALERT_KINDS = frozenset(
    ["race-static", "race-dynamic", "similar-defect", "provenance",
     "mutex-advice", "stale-comment", "warning"]
)

MUTEX_ADVICE = "add mutex locks for reads and writes of {var} in {funcs}"


@dataclass
class SmartAlert:
    kind: str
    subject: str
    evidence: list[str]  # triple keys "s|p|o" or trace event seqs "seq:N"
    message: str
    score: float = 0.0

    def __post_init__(self):
        if self.kind not in ALERT_KINDS:
            raise ValueError(f"unknown alert kind {self.kind!r}")
        if not self.evidence:
            raise ValueError("alert evidence must be non-empty")


@dataclass
class SmartConfig:
    alert_cap: int = 10
    similar_k: int = 5
    similar_theta: float = 0.25
    provenance_limit: int = 5


def _triple_ref(s: str, p: str, o: str) -> str:
    return f"{s}|{p}|{o}"


def _call_edges(graph: KnowledgeGraph) -> dict[str, list[str]]:
    edges: dict[str, list[str]] = {}
    for t in graph.match(None, "calls", None):
        edges.setdefault(t.subject, []).append(t.object)
    return edges


def _race_roots(graph: KnowledgeGraph) -> list[str]:
    """Thread entry points plus every function labeled main."""
    roots = {t.object for t in graph.match(ids.THREAD_ROOT_ID, "starts-thread", None)}
    for eid, entity in graph.entities.items():
        if entity.kind == "function" and entity.label == "main":
            roots.add(eid)
    return sorted(roots)


def _path_to(root: str, target: str, edges: dict[str, list[str]]) -> list[str] | None:
    """Shortest call path root -> target as a node list, or None."""
    if root == target:
        return [root]
    prev: dict[str, str] = {}
    seen = {root}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for nxt in sorted(edges.get(node, ())):
            if nxt in seen:
                continue
            prev[nxt] = node
            if nxt == target:
                path = [nxt]
                while path[-1] != root:
                    path.append(prev[path[-1]])
                return list(reversed(path))
            seen.add(nxt)
            queue.append(nxt)
    return None


def race_alert_static(graph: KnowledgeGraph, var: str) -> SmartAlert | None:
    """Alert when an unguarded accessor of a global is reachable from two or
    more distinct roots (thread entry points or main)."""
    entity = graph.entity(var)
    if entity.attrs.get("scope") != "global":
        raise DomainError(f"{var} is not a global variable")
    edges = _call_edges(graph)
    roots = _race_roots(graph)
    accessors = sorted(
        {t.subject for t in graph.match(None, "writes", var)}
        | {t.subject for t in graph.match(None, "reads", var)}
    )
    evidence: list[str] = []
    racing_funcs: list[str] = []
    for func in accessors:
        if graph.get(func, "guards", var) is not None:
            continue
        paths = []
        for root in roots:
            path = _path_to(root, func, edges)
            if path is not None:
                paths.append(path)
        if len(paths) < 2:
            continue
        racing_funcs.append(func)
        for path in paths:
            for a, b in zip(path, path[1:]):
                ref = _triple_ref(a, "calls", b)
                if ref not in evidence:
                    evidence.append(ref)
        for pred in ("writes", "reads"):
            if graph.get(func, pred, var) is not None:
                ref = _triple_ref(func, pred, var)
                if ref not in evidence:
                    evidence.append(ref)
    if not racing_funcs:
        return None
    names = ", ".join(graph.entity(f).label for f in racing_funcs)
    return SmartAlert(
        kind="race-static",
        subject=var,
        evidence=evidence,
        message=(
            f"potential data race: {entity.label} is accessed without a guard in "
            f"{names}, each reachable from multiple thread roots"
        ),
        score=0.9,
    )


def race_alert_dynamic(trace: TraceLog, var: str) -> SmartAlert | None:
    """Eraser-style lockset refinement over the trace for one variable."""
    accesses = [e for e in trace.events if e.kind in ("read", "write") and e.target == var]
    if not accesses:
        raise NotFoundError(f"{var} is not referenced by any trace event")
    candidate = set(trace.locks())
    held: dict[int, dict[str, int]] = {}
    tids: set[int] = set()
    wrote = False
    for ev in trace.events:
        if ev.kind == "acquire":
            locks = held.setdefault(ev.tid, {})
            locks[ev.target] = locks.get(ev.target, 0) + 1
        elif ev.kind == "release":
            locks = held.setdefault(ev.tid, {})
            if locks.get(ev.target, 0) > 0:
                locks[ev.target] -= 1
        elif ev.kind in ("read", "write") and ev.target == var:
            now = {lock for lock, n in held.get(ev.tid, {}).items() if n > 0}
            candidate &= now
            tids.add(ev.tid)
            wrote = wrote or ev.kind == "write"
    if candidate or len(tids) < 2 or not wrote:
        return None
    return SmartAlert(
        kind="race-dynamic",
        subject=var,
        evidence=[f"seq:{e.seq}" for e in accesses],
        message=(
            f"data race observed: {var} accessed by threads "
            f"{sorted(tids)} with empty common lockset"
        ),
        score=1.0,
    )


def similar_defects(
    graph: KnowledgeGraph, bug: str, k: int = 5, theta: float = 0.25
) -> list[tuple[str, float]]:
    """Rank other bugs by max(token Jaccard, shared touched function)."""
    graph.entity(bug)
    mine_tokens = _bug_tokens(graph.entity(bug))
    mine_touch = {t.object for t in graph.match(bug, "touches", None)}
    scored: list[tuple[str, float]] = []
    for eid in sorted(graph.entities):
        if eid == bug or graph.entities[eid].kind != "bug":
            continue
        other_tokens = _bug_tokens(graph.entities[eid])
        union = mine_tokens | other_tokens
        jaccard = len(mine_tokens & other_tokens) / len(union) if union else 0.0
        touch = {t.object for t in graph.match(eid, "touches", None)}
        shared = 1.0 if mine_touch & touch else 0.0
        score = max(jaccard, shared)
        if score >= theta:
            scored.append((eid, round(score, 4)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def _bug_tokens(entity: Entity) -> frozenset[str]:
    text = f"{entity.label} {entity.attrs.get('error_strings', '')}"
    return frozenset(normalize_tokens(text))


def change_provenance(graph: KnowledgeGraph, entity_id: str, limit: int = 5) -> list[Entity]:
    """Commits touching the entity or its containing file, newest first."""
    graph.entity(entity_id)
    commit_ids = {t.subject for t in graph.match(None, "touches", entity_id)
                  if t.subject.startswith("commit:")}
    path = ids.path_of(entity_id)
    if path is not None:
        fid = ids.file_id(path)
        if fid != entity_id and fid in graph.entities:
            commit_ids |= {t.subject for t in graph.match(None, "touches", fid)
                           if t.subject.startswith("commit:")}
    commits = [graph.entities[c] for c in commit_ids]

    def sort_key(e: Entity):
        stamp = e.attrs.get("timestamp", "")
        try:
            return (-parse_timestamp(stamp).timestamp(), e.id)
        except ValueError:
            return (0.0, e.id)

    commits.sort(key=sort_key)
    return commits[:limit]


def _stale_comment_alerts(graph: KnowledgeGraph, entity_id: str) -> list[SmartAlert]:
    alerts = []
    for t in graph.match(entity_id, "documented-by", None):
        comment = graph.entities.get(t.object)
        if comment is None or comment.attrs.get("stale") != "true":
            continue
        missing = comment.attrs.get("missing", "")
        alerts.append(
            SmartAlert(
                kind="stale-comment",
                subject=entity_id,
                evidence=[_triple_ref(entity_id, "documented-by", t.object)],
                message=(
                    f"comment {t.object} mentions identifiers absent from scope: {missing}"
                ),
                score=0.5,
            )
        )
    return alerts


def augment(
    result: ResultSet,
    graph: KnowledgeGraph,
    trace: TraceLog | None = None,
    config: SmartConfig | None = None,
) -> ResultSet:
    """Attach rule-driven alerts to an evaluated result set.

    Dispatch is by binding kind: globals get race checks plus mutex advice,
    bugs get similar defects, code elements get change provenance, and
    anything with a stale comment gets flagged.  Rows are never modified;
    failures degrade to warning alerts.
    """
    cfg = config or SmartConfig()
    alerts: list[SmartAlert] = []
    seen_entities: list[str] = []
    for row in result.rows:
        for value in row:
            if value not in seen_entities and value in graph.entities:
                seen_entities.append(value)
    for eid in seen_entities:
        entity = graph.entities[eid]
        try:
            alerts.extend(_alerts_for(entity, graph, trace, cfg))
        except Exception as exc:  # degrade, never fail the query
            alerts.append(
                SmartAlert("warning", eid, ["rule-dispatch"],
                           f"augmentation failed for {eid}: {exc}", 0.0)
            )
    alerts.sort(key=lambda a: (-a.score, a.kind, a.subject))
    return ResultSet(result.columns, result.rows, alerts[: cfg.alert_cap])


def _alerts_for(
    entity: Entity,
    graph: KnowledgeGraph,
    trace: TraceLog | None,
    cfg: SmartConfig,
) -> list[SmartAlert]:
    out: list[SmartAlert] = []
    eid = entity.id
    if entity.kind == "variable" and entity.attrs.get("scope") == "global":
        static = race_alert_static(graph, eid)
        dynamic = None
        if trace is not None and any(
            e.kind in ("read", "write") and e.target == eid for e in trace.events
        ):
            dynamic = race_alert_dynamic(trace, eid)
        out.extend(a for a in (static, dynamic) if a is not None)
        if static is not None or dynamic is not None:
            funcs = sorted(
                {t.subject for t in graph.match(None, "writes", eid)}
                | {t.subject for t in graph.match(None, "reads", eid)}
            )
            labels = ", ".join(graph.entities[f].label for f in funcs if f in graph.entities)
            out.append(
                SmartAlert(
                    kind="mutex-advice",
                    subject=eid,
                    evidence=(static or dynamic).evidence,
                    message=MUTEX_ADVICE.format(var=entity.label, funcs=labels or "its accessors"),
                    score=0.85,
                )
            )
    elif entity.kind == "bug":
        ranked = similar_defects(graph, eid, cfg.similar_k, cfg.similar_theta)
        for other, score in ranked:
            out.append(
                SmartAlert(
                    kind="similar-defect",
                    subject=eid,
                    evidence=[other],
                    message=f"similar defect: {other} "
                            f"({graph.entities[other].label}) score {score}",
                    score=score,
                )
            )
    if entity.kind in ("function", "variable", "file", "type", "class"):
        commits = change_provenance(graph, eid, cfg.provenance_limit)
        if commits:
            newest = commits[0]
            out.append(
                SmartAlert(
                    kind="provenance",
                    subject=eid,
                    evidence=[c.id for c in commits],
                    message=(
                        f"last changed by {newest.id} "
                        f"({newest.attrs.get('timestamp', '?')}): {newest.label}"
                    ),
                    score=0.3,
                )
            )
    out.extend(_stale_comment_alerts(graph, eid))
    return out
