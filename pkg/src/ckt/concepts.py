"""Feature computation and concept inference over extracted facts.

Functions are scored by a transparent linear combination of four feature
families (recursion, recursive call sites, ontology keyword hits, observed
recursion depth); the best class wins when its score clears the threshold.
Weights and the class list are configuration, not trained models.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ckt import ids
from ckt.config import Ontology, StrategyWeights, split_identifier
from ckt.errors import DomainError
from ckt.model import Comment, Entity, FactSet, TraceLog

_IDENT_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|[0-9]+[A-Za-z_][A-Za-z0-9_]*")


@dataclass
class FeatureVector:
    entity_id: str
    features: dict[str, float] = field(default_factory=dict)

    def get(self, name: str) -> float:
        return self.features.get(name, 0.0)


@dataclass
class ConceptLabel:
    class_name: str
    score: float
    contributing: dict[str, float] = field(default_factory=dict)


@dataclass
class StalenessReport:
    comment_id: str
    entity_id: str
    missing_identifiers: list[str]

    @property
    def verdict(self) -> str:
        return "stale" if self.missing_identifiers else "fresh"


def _call_graph(facts: FactSet) -> dict[str, set[str]]:
    graph: dict[str, set[str]] = {}
    for rel in facts.relations:
        if rel.pred == "calls":
            graph.setdefault(rel.subj, set()).add(rel.obj)
    return graph


def _in_cycle(fid: str, calls: dict[str, set[str]]) -> bool:
    """True when fid can reach itself along call edges (self-loops count)."""
    seen: set[str] = set()
    stack = sorted(calls.get(fid, ()))
    while stack:
        node = stack.pop()
        if node == fid:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(sorted(calls.get(node, ())))
    return False


def _max_trace_depth(fid: str, trace: TraceLog | None) -> int:
    if trace is None:
        return 0
    depth_by_tid: dict[int, int] = {}
    best = 0
    for ev in trace.events:
        if ev.target != fid or ev.kind not in ("enter", "exit"):
            continue
        if ev.kind == "enter":
            depth_by_tid[ev.tid] = depth_by_tid.get(ev.tid, 0) + 1
            best = max(best, depth_by_tid[ev.tid])
        else:
            depth_by_tid[ev.tid] = max(0, depth_by_tid.get(ev.tid, 0) - 1)
    return best


def _entity_tokens(fid: str, facts: FactSet) -> list[str]:
    """Identifier tokens of the function plus its comment tokens."""
    tokens: list[str] = []
    entity = facts.entities.get(fid)
    if entity is not None:
        tokens.extend(split_identifier(entity.label))
    for rel in facts.relations:
        if rel.subj == fid and rel.pred in ("declares", "reads", "writes", "calls"):
            target = facts.entities.get(rel.obj)
            if target is not None and target.kind in ("variable", "function"):
                tokens.extend(split_identifier(target.label))
        if rel.subj == fid and rel.pred == "documented-by":
            comment = facts.entities.get(rel.obj)
            if comment is not None and comment.attrs.get("tokens"):
                tokens.extend(comment.attrs["tokens"].split(" "))
    return tokens


def compute_features(
    entity: Entity,
    facts: FactSet,
    trace: TraceLog | None,
    ontology: Ontology,
) -> FeatureVector:
    """Deterministic feature vector for one function entity.

    Trace-derived features are zero when no trace is supplied; keyword
    features exist for every ontology concept (zero when unseen).
    """
    if entity.kind != "function":
        raise DomainError(f"features are defined for functions, not {entity.kind}")
    calls = _call_graph(facts)
    self_calls = [
        rel for rel in facts.relations
        if rel.pred == "calls" and rel.subj == entity.id and rel.obj == entity.id
    ]
    fv = FeatureVector(entity.id)
    fv.features["f_rec"] = 1.0 if _in_cycle(entity.id, calls) else 0.0
    fv.features["f_multi"] = float(len(self_calls))
    fv.features["f_depth"] = float(_max_trace_depth(entity.id, trace))
    hits = ontology.hits(_entity_tokens(entity.id, facts))
    for concept in ontology.concepts():
        fv.features[f"f_kw_{concept}"] = float(hits.get(concept, 0))
    return fv


def classify_strategy(
    fv: FeatureVector, weights: StrategyWeights, tau: float | None = None
) -> ConceptLabel:
    """Linear scores per class; argmax wins, ties break by class-list order,
    and anything under the threshold is unclassified."""
    weights.validate_against(set(fv.features))
    threshold = weights.tau if tau is None else tau
    best: ConceptLabel | None = None
    for cls in weights.classes:
        row = weights.weights.get(cls, {})
        contributing = {
            feat: w * fv.get(feat) for feat, w in sorted(row.items()) if fv.get(feat) != 0.0
        }
        score = sum(contributing.values())
        if best is None or score > best.score:
            best = ConceptLabel(cls, score, contributing)
    if best is None or best.score < threshold:
        return ConceptLabel("unclassified", 0.0 if best is None else best.score, {})
    return best


def detect_thread_roots(facts: FactSet, trace: TraceLog | None) -> set[str]:
    """Functions started as thread entry points, statically flagged or
    observed via thread_create events."""
    roots: set[str] = set()
    for rel in facts.relations:
        if rel.pred == "calls" and rel.attrs.get("threading") == "create":
            roots.add(rel.obj)
    if trace is not None:
        for ev in trace.events:
            if ev.kind == "thread_create":
                roots.add(ev.target)
    return roots


GuardTriple = tuple[str, str, str, str]  # func, "guards", var, lock detail


def detect_guarded_regions(trace: TraceLog | None) -> list[GuardTriple]:
    """Lock-protected accesses: each read/write whose thread holds locks
    inside function f yields (f guards var) annotated with the lock names."""
    if trace is None:
        return []
    out: dict[tuple[str, str], set[str]] = {}
    stack_by_tid: dict[int, list[str]] = {}
    held_by_tid: dict[int, dict[str, int]] = {}
    for ev in trace.events:
        if ev.kind == "enter":
            stack_by_tid.setdefault(ev.tid, []).append(ev.target)
        elif ev.kind == "exit":
            stack = stack_by_tid.get(ev.tid)
            if stack:
                stack.pop()  # tolerate mismatched exits
        elif ev.kind == "acquire":
            locks = held_by_tid.setdefault(ev.tid, {})
            locks[ev.target] = locks.get(ev.target, 0) + 1
        elif ev.kind == "release":
            locks = held_by_tid.setdefault(ev.tid, {})
            if locks.get(ev.target, 0) > 0:
                locks[ev.target] -= 1
        elif ev.kind in ("read", "write"):
            held = {lock for lock, n in held_by_tid.get(ev.tid, {}).items() if n > 0}
            stack = stack_by_tid.get(ev.tid)
            if held and stack:
                out.setdefault((stack[-1], ev.target), set()).update(held)
    return [
        (func, "guards", var, "locks=" + ",".join(sorted(locks)))
        for (func, var), locks in sorted(out.items())
    ]


def tag_domain_concepts(
    comment: Comment, ontology: Ontology, associated_entity: str
) -> list[tuple[str, str, str]]:
    """(entity, mentions, concept) triples for each ontology hit in the
    comment's tokens."""
    hits = ontology.hits(comment.tokens)
    return [
        (associated_entity, "mentions", ids.concept_id(concept))
        for concept in sorted(hits)
    ]


def identifier_like(word: str, scope_identifiers: set[str]) -> bool:
    """Lexically code-flavored: underscores, mixed case, letter-digit mixes,
    or an exact declared name."""
    if word in scope_identifiers:
        return True
    if "_" in word:
        return True
    # mixed case means an interior capital, not a sentence-initial one
    if any(c.islower() for c in word) and any(c.isupper() for c in word[1:]):
        return True
    if any(c.isalpha() for c in word) and any(c.isdigit() for c in word):
        return True
    return False


def validate_comment(
    comment: Comment, scope_identifiers: set[str], entity_id: str = ""
) -> StalenessReport:
    """Flag identifier-like comment tokens that are absent from the
    associated entity's scope."""
    scope_lower = {s.lower() for s in scope_identifiers}
    missing: list[str] = []
    for m in _IDENT_WORD.finditer(comment.text):
        word = m.group()
        if not identifier_like(word, scope_identifiers):
            continue
        if word.lower() in scope_lower:
            continue
        if word.lower() not in (w.lower() for w in missing):
            missing.append(word)
    return StalenessReport(comment.id, entity_id, missing)
