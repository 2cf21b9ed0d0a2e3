"""Concept hierarchy: loading, validation, queries, and benchmark sampling.

The graph is a DAG of synsets connected by IS-A edges (child -> hypernym).
It is immutable after load, so concurrent reads need no locking, and the
sampler is a pure function of (graph, seed, weights).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Optional, Union

from . import errors
from .seeding import substream


class RelationKind(str, Enum):
    HYPONYMY = "Hyponymy"
    HYPERNYMY = "Hypernymy"
    SYNSET_MIXING = "SynsetMixing"


#: subset tag used when exporting entries of each relation kind
KIND_TAGS = {
    RelationKind.HYPONYMY: "Hypo",
    RelationKind.HYPERNYMY: "Hyper",
    RelationKind.SYNSET_MIXING: "Mix",
}

SUBSET_TAGS = ("Easy", "Hypo", "Hyper", "Mix", "P-Easy", "P-Hypo", "P-Hyper", "P-Mix")


@dataclass(frozen=True)
class Synset:
    id: str
    lemmas: tuple[str, ...]
    definition: Optional[str] = None
    hypernym_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise errors.MalformedRecord(0, "synset id must be nonempty")
        if not self.lemmas:
            raise errors.MalformedRecord(0, f"synset {self.id!r} has no lemmas")
        if self.id in self.hypernym_ids:
            raise errors.CycleDetected([self.id])

    @property
    def canonical_text(self) -> str:
        """First lemma with underscores replaced by spaces."""
        return self.lemmas[0].replace("_", " ")


@dataclass
class TaxonomyGraph:
    synsets: dict[str, Synset]
    child_index: dict[str, list[str]] = field(default_factory=dict)

    def __contains__(self, id: str) -> bool:
        return id in self.synsets

    def __len__(self) -> int:
        return len(self.synsets)

    def get(self, id: str) -> Synset:
        try:
            return self.synsets[id]
        except KeyError:
            raise errors.UnknownId(id) from None

    def children(self, id: str) -> list[str]:
        self.get(id)
        return self.child_index.get(id, [])


def _parse_record(lineno: int, line: str) -> Synset:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise errors.MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "id" not in obj or "lemmas" not in obj:
        raise errors.MalformedRecord(lineno, "record needs 'id' and 'lemmas' fields")
    try:
        return Synset(
            id=obj["id"],
            lemmas=tuple(obj["lemmas"]),
            definition=obj.get("definition"),
            hypernym_ids=tuple(dict.fromkeys(obj.get("hypernyms", ()))),
        )
    except errors.MalformedRecord as exc:
        raise errors.MalformedRecord(lineno, str(exc)) from None


def _find_cycle(synsets: dict[str, Synset], in_cycle: set[str]) -> list[str]:
    # every node left after Kahn peeling has all its ancestors in a cycle;
    # walk parent edges inside the residue until a node repeats
    start = sorted(in_cycle)[0]
    path, seen = [], {}
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = next(h for h in synsets[node].hypernym_ids if h in in_cycle)
    return path[seen[node]:]


def load_taxonomy(source: Union[IO[str], Iterable[str]]) -> TaxonomyGraph:
    """Build a validated graph from a JSON-lines synset stream.

    Lines starting with '#' and blank lines are ignored. Loading is
    order-independent: ids are collected first, edges resolved second.
    """
    synsets: dict[str, Synset] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rec = _parse_record(lineno, line)
        if rec.id in synsets:
            raise errors.DuplicateId(rec.id)
        synsets[rec.id] = rec
    if not synsets:
        raise errors.EmptyInput("no synset records in input")

    child_index: dict[str, list[str]] = {}
    for s in synsets.values():
        for h in s.hypernym_ids:
            if h not in synsets:
                raise errors.DanglingHypernym(h)
            child_index.setdefault(h, []).append(s.id)
    for kids in child_index.values():
        kids.sort()

    # Kahn's algorithm on child->parent edges to certify acyclicity
    out_deg = {i: len(s.hypernym_ids) for i, s in synsets.items()}
    ready = [i for i, d in out_deg.items() if d == 0]
    visited = 0
    while ready:
        node = ready.pop()
        visited += 1
        for child in child_index.get(node, ()):  # parent resolved -> child one closer
            out_deg[child] -= 1
            if out_deg[child] == 0:
                ready.append(child)
    if visited != len(synsets):
        residue = {i for i, d in out_deg.items() if d > 0}
        raise errors.CycleDetected(_find_cycle(synsets, residue))

    return TaxonomyGraph(synsets=synsets, child_index=child_index)


def save_taxonomy(graph: TaxonomyGraph, sink: IO[str]) -> None:
    """Write the graph back as JSON lines in canonical (id-sorted) order."""
    for id in sorted(graph.synsets):
        s = graph.synsets[id]
        sink.write(json.dumps({
            "id": s.id,
            "lemmas": list(s.lemmas),
            "definition": s.definition,
            "hypernyms": list(s.hypernym_ids),
        }, ensure_ascii=False) + "\n")


def hypernym_set(graph: TaxonomyGraph, id: str, depth: Union[int, str] = 1) -> set[str]:
    """Ancestors of `id` up to `depth` levels; depth="all" walks to the roots."""
    graph.get(id)
    if depth != "all" and (not isinstance(depth, int) or depth < 1):
        raise ValueError(f"depth must be a positive integer or 'all', got {depth!r}")
    limit = None if depth == "all" else depth
    result: set[str] = set()
    frontier = {id}
    level = 0
    while frontier and (limit is None or level < limit):
        level += 1
        frontier = {
            h for node in frontier for h in graph.synsets[node].hypernym_ids
        } - result - {id}
        result |= frontier
    result.discard(id)
    return result


def cohyponym_set(graph: TaxonomyGraph, id: str) -> set[str]:
    """Siblings: children of the direct hypernyms, minus the node itself."""
    s = graph.get(id)
    out: set[str] = set()
    for h in s.hypernym_ids:
        out.update(graph.child_index.get(h, ()))
    out.discard(id)
    return out


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    relation: Optional[RelationKind]
    subset: str


@dataclass
class SampledDataset:
    entries: list[DatasetEntry]
    seed: int

    def __post_init__(self):
        pairs = [(e.id, e.subset) for e in self.entries]
        if len(pairs) != len(set(pairs)):
            raise errors.DuplicateId("duplicate (id, subset) pair in dataset")

    def counts_by_kind(self) -> dict[RelationKind, int]:
        out: dict[RelationKind, int] = {}
        for e in self.entries:
            if e.relation is not None:
                out[e.relation] = out.get(e.relation, 0) + 1
        return out

    def save(self, sink: IO[str]) -> None:
        for e in self.entries:
            sink.write(json.dumps({
                "id": e.id,
                "relation": e.relation.value if e.relation else None,
                "subset": e.subset,
            }) + "\n")

    @classmethod
    def load(cls, source: Union[IO[str], Iterable[str]], seed: int = 0) -> "SampledDataset":
        entries = []
        for lineno, raw in enumerate(source, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise errors.MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
            rel = RelationKind(obj["relation"]) if obj.get("relation") else None
            entries.append(DatasetEntry(obj["id"], rel, obj["subset"]))
        return cls(entries=entries, seed=seed)


def eligible_nodes(graph: TaxonomyGraph, kind: RelationKind) -> list[str]:
    """Nodes a relation kind can sample, sorted for determinism."""
    if kind is RelationKind.HYPERNYMY:
        # edge read from the more specific word: any node with a parent
        ids = [i for i, s in graph.synsets.items() if s.hypernym_ids]
    elif kind is RelationKind.HYPONYMY:
        # edge read from the broader word: any node with a child
        ids = [i for i in graph.synsets if graph.child_index.get(i)]
    else:
        # mixing requires at least two distinct parents
        ids = [i for i, s in graph.synsets.items() if len(set(s.hypernym_ids)) >= 2]
    return sorted(ids)


def sample_dataset(
    graph: TaxonomyGraph,
    seed: int,
    stage1_weights: dict[RelationKind, float],
    stage2_accept: dict[RelationKind, float],
    target_size: int,
) -> SampledDataset:
    """Two-stage relation-weighted sampling without duplicates.

    Each raw draw picks a relation kind by its stage-1 weight, draws an
    eligible node uniformly from that kind, and keeps it with the kind's
    stage-2 acceptance probability; draws that fail either stage (or hit an
    already-kept node) are rejected, and the loop runs until `target_size`
    entries are kept. The implementation simulates the embedded chain of
    accepted draws directly - per kept entry, the kind is categorical with
    weight stage1 * stage2 * remaining/pool - which is distributionally
    identical to the raw rejection loop but costs O(target_size) draws.

    While every kind's pool stays large, kept proportions converge to the
    renormalized stage1*stage2 products; once a rare kind's pool is
    exhausted, further entries fall to the remaining kinds.
    """
    if graph is None or len(graph) == 0:
        raise errors.EmptyInput("cannot sample from an empty graph")
    if target_size < 1:
        raise ValueError("target_size must be positive")
    kinds = [k for k in RelationKind if stage1_weights.get(k, 0.0) > 0.0]
    total_w = sum(stage1_weights.get(k, 0.0) for k in RelationKind)
    if abs(total_w - 1.0) > 1e-9:
        raise ValueError(f"stage-1 weights must sum to 1, got {total_w}")
    for k in kinds:
        p = stage2_accept.get(k, 0.0)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"stage-2 acceptance for {k} must be in [0, 1], got {p}")
    kinds = [k for k in kinds if stage2_accept.get(k, 0.0) > 0.0]
    if not kinds:
        raise ValueError("no relation kind has positive stage-1 and stage-2 weight")

    pools = {k: eligible_nodes(graph, k) for k in kinds}
    for k in kinds:
        if not pools[k]:
            raise errors.InsufficientEligibleNodes(k)
    pool_sizes = {k: len(pools[k]) for k in kinds}

    rng = substream(seed, "sample")
    entries: list[DatasetEntry] = []
    remaining = {k: list(pools[k]) for k in kinds}
    while len(entries) < target_size:
        weights = [
            stage1_weights[k] * stage2_accept[k] * len(remaining[k]) / pool_sizes[k]
            for k in kinds
        ]
        total = sum(weights)
        if total <= 0.0:
            exhausted = next(k for k in kinds if not remaining[k])
            raise errors.InsufficientEligibleNodes(exhausted)
        r = rng.random() * total
        acc = 0.0
        kind = kinds[-1]
        for k, w in zip(kinds, weights):
            acc += w
            if r < acc:
                kind = k
                break
        bucket = remaining[kind]
        idx = int(rng.integers(len(bucket)))
        bucket[idx], bucket[-1] = bucket[-1], bucket[idx]
        node = bucket.pop()
        entries.append(DatasetEntry(node, kind, KIND_TAGS[kind]))
    return SampledDataset(entries=entries, seed=seed)


def ingest_concept_list(
    graph: TaxonomyGraph, ids: Iterable[str], subset: str, seed: int = 0
) -> SampledDataset:
    """Wrap a caller-provided concept list (e.g. common-sense subsets) as a dataset."""
    if subset not in SUBSET_TAGS:
        raise ValueError(f"unknown subset tag {subset!r}")
    entries = []
    for id in ids:
        graph.get(id)
        entries.append(DatasetEntry(id, None, subset))
    if not entries:
        raise errors.EmptyInput("concept list is empty")
    return SampledDataset(entries=entries, seed=seed)
