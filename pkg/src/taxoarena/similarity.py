"""Taxonomy-aware similarity metrics per (concept, system image).

All four metrics are cosines between stored embeddings, or ratios of them:
the concept's own text vs the image, the mean over its hypernym texts, the
mean over its cohyponym texts, and the lemma/cohyponym ratio. Empty
neighbor sets make a metric absent (not zero) so roots and only-children
do not distort aggregates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

from . import errors
from .embeddings import EmbeddingStore, cosine, image_id
from .taxonomy import TaxonomyGraph, cohyponym_set, hypernym_set

METRIC_NAMES = ("lemma", "hypernym", "cohyponym", "specificity")


@dataclass(frozen=True)
class SimilarityRecord:
    concept_id: str
    system_id: str
    lemma_sim: float
    hypernym_sim: Optional[float] = None
    cohyponym_sim: Optional[float] = None
    specificity: Optional[float] = None

    def metric(self, name: str) -> Optional[float]:
        return {
            "lemma": self.lemma_sim,
            "hypernym": self.hypernym_sim,
            "cohyponym": self.cohyponym_sim,
            "specificity": self.specificity,
        }[name]


def lemma_similarity(text_store: EmbeddingStore, image_store: EmbeddingStore,
                     concept_id: str, image: str) -> float:
    return cosine(text_store.vector(concept_id), image_store.vector(image))


def _neighbor_mean(ids, text_store: EmbeddingStore, image_vec) -> Optional[float]:
    if not ids:
        return None
    sims = [cosine(text_store.vector(i), image_vec) for i in sorted(ids)]
    return sum(sims) / len(sims)


def hypernym_similarity(graph: TaxonomyGraph, text_store: EmbeddingStore,
                        image_store: EmbeddingStore, concept_id: str, image: str,
                        depth: Union[int, str] = 1) -> Optional[float]:
    """Mean cosine over the concept's hypernym texts; None when it has none."""
    return _neighbor_mean(hypernym_set(graph, concept_id, depth),
                          text_store, image_store.vector(image))


def cohyponym_similarity(graph: TaxonomyGraph, text_store: EmbeddingStore,
                         image_store: EmbeddingStore, concept_id: str,
                         image: str) -> Optional[float]:
    """Mean cosine over the concept's sibling texts; None for an only child."""
    return _neighbor_mean(cohyponym_set(graph, concept_id),
                          text_store, image_store.vector(image))


def specificity(lemma_sim: float, cohyponym_sim: float) -> float:
    """How much better the image fits the concept than its siblings."""
    if cohyponym_sim <= 0.0:
        raise errors.NonPositiveDenominator(cohyponym_sim)
    return lemma_sim / cohyponym_sim


def similarity_record(graph: TaxonomyGraph, text_store: EmbeddingStore,
                      image_store: EmbeddingStore, concept_id: str, system_id: str,
                      image: Optional[str] = None,
                      depth: Union[int, str] = 1) -> SimilarityRecord:
    """Compute all four metrics for one (concept, system) pair."""
    img = image if image is not None else image_id(system_id, concept_id)
    lemma = lemma_similarity(text_store, image_store, concept_id, img)
    hyper = hypernym_similarity(graph, text_store, image_store, concept_id, img, depth)
    cohypo = cohyponym_similarity(graph, text_store, image_store, concept_id, img)
    spec = None
    if cohypo is not None and cohypo > 0.0:
        spec = specificity(lemma, cohypo)
    return SimilarityRecord(concept_id, system_id, lemma, hyper, cohypo, spec)


@dataclass(frozen=True)
class MetricCell:
    mean: float
    sd: float
    count: int


@dataclass
class MetricReport:
    # (system, subset) -> metric name -> cell; cells exist only when count > 0
    cells: dict[tuple[str, str], dict[str, MetricCell]]

    def cell(self, system: str, subset: str, metric: str) -> Optional[MetricCell]:
        return self.cells.get((system, subset), {}).get(metric)

    def to_csv(self, sink: IO[str]) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["system", "subset", "metric", "mean", "sd", "count"])
        for (system, subset) in sorted(self.cells):
            group = self.cells[(system, subset)]
            for metric in METRIC_NAMES:
                if metric in group:
                    c = group[metric]
                    writer.writerow([system, subset, metric,
                                     f"{c.mean:.6f}", f"{c.sd:.6f}", c.count])


def aggregate(records: Iterable[SimilarityRecord],
              subset_of: Optional[dict[str, str]] = None) -> MetricReport:
    """Unweighted per-(system, subset) means; absent sub-metrics are skipped.

    `subset_of` maps concept ids onto subset tags; concepts without a tag
    fall into "all". Standard deviation uses the n-1 divisor.
    """
    records = list(records)
    if not records:
        raise errors.EmptyInput("no similarity records to aggregate")
    groups: dict[tuple[str, str], dict[str, list[float]]] = {}
    for rec in records:
        subset = (subset_of or {}).get(rec.concept_id, "all")
        bucket = groups.setdefault((rec.system_id, subset), {m: [] for m in METRIC_NAMES})
        for m in METRIC_NAMES:
            v = rec.metric(m)
            if v is not None:
                bucket[m].append(v)
    cells: dict[tuple[str, str], dict[str, MetricCell]] = {}
    for key, bucket in groups.items():
        out: dict[str, MetricCell] = {}
        for m, values in bucket.items():
            if not values:
                continue
            n = len(values)
            mean = sum(values) / n
            sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
            out[m] = MetricCell(mean=mean, sd=sd, count=n)
        if out:
            cells[key] = out
    return MetricReport(cells=cells)
