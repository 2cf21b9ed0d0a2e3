"""Explicit finite probabilistic worlds for validating the metric semantics.

A world is a likelihood table P(x | v) plus a prior over concepts. On these
worlds the similarity metrics have exact probabilistic meanings, so the
posterior-argmax equivalence and the divergence/mutual-information
monotonicity claims behind the specificity metric can be checked
numerically instead of symbolically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import IO, Optional, Sequence, Union

import numpy as np

from . import errors

_COLUMN_TOL = 1e-9


@dataclass
class DiscreteWorld:
    concepts: list[str]
    outcomes: list[str]
    likelihood: np.ndarray  # shape (|X|, |V|); each column sums to 1
    prior: np.ndarray  # shape (|V|,)

    def __post_init__(self):
        self.likelihood = np.asarray(self.likelihood, dtype=np.float64)
        self.prior = np.asarray(self.prior, dtype=np.float64)
        nx, nv = len(self.outcomes), len(self.concepts)
        if self.likelihood.shape != (nx, nv):
            raise ValueError(
                f"likelihood shape {self.likelihood.shape} != ({nx}, {nv})")
        if self.prior.shape != (nv,):
            raise ValueError(f"prior shape {self.prior.shape} != ({nv},)")
        if (self.likelihood < 0).any() or (self.prior < 0).any():
            raise ValueError("probabilities must be nonnegative")
        col_err = np.abs(self.likelihood.sum(axis=0) - 1.0).max()
        if col_err > _COLUMN_TOL:
            raise ValueError(f"likelihood columns must sum to 1 (err {col_err})")
        if abs(self.prior.sum() - 1.0) > _COLUMN_TOL:
            raise ValueError("prior must sum to 1")

    def outcome_index(self, x: Union[str, int]) -> int:
        if isinstance(x, int):
            if not 0 <= x < len(self.outcomes):
                raise ValueError(f"outcome index {x} out of range")
            return x
        try:
            return self.outcomes.index(x)
        except ValueError:
            raise ValueError(f"unknown outcome {x!r}") from None

    def evidence(self) -> np.ndarray:
        """Marginal P(x) under the prior."""
        return self.likelihood @ self.prior

    def with_uniform_prior(self) -> "DiscreteWorld":
        n = len(self.concepts)
        return replace(self, prior=np.full(n, 1.0 / n))

    def to_json(self, sink: IO[str]) -> None:
        json.dump({
            "concepts": self.concepts,
            "outcomes": self.outcomes,
            "likelihood": self.likelihood.tolist(),
            "prior": self.prior.tolist(),
        }, sink)
        sink.write("\n")

    @classmethod
    def from_json(cls, source: IO[str]) -> "DiscreteWorld":
        obj = json.load(source)
        return cls(
            concepts=list(obj["concepts"]),
            outcomes=list(obj["outcomes"]),
            likelihood=np.asarray(obj["likelihood"], dtype=np.float64),
            prior=np.asarray(obj["prior"], dtype=np.float64),
        )


def posterior(world: DiscreteWorld, x: Union[str, int]) -> np.ndarray:
    """Bayes rule P(v | x), normalized to 1."""
    xi = world.outcome_index(x)
    numer = world.likelihood[xi] * world.prior
    total = numer.sum()
    if total <= 0.0:
        raise errors.ZeroEvidence(world.outcomes[xi])
    return numer / total


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p || q) in nats; requires q > 0 wherever p > 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise errors.LengthMismatch(f"{p.shape} vs {q.shape}")
    support = p > 0
    if (q[support] <= 0).any():
        raise errors.AbsoluteContinuityViolation(
            "q has zero mass where p is positive")
    return float((p[support] * np.log(p[support] / q[support])).sum())


def mutual_information(world: DiscreteWorld) -> float:
    """I(V; X) in nats under the world's prior."""
    joint = world.likelihood * world.prior  # (x, v)
    px = joint.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(joint > 0, world.likelihood / px[:, None], 1.0)
        terms = np.where(joint > 0, joint * np.log(ratio), 0.0)
    return max(float(terms.sum()), 0.0)


def argmax_set(values: np.ndarray, rtol: float = 1e-9, atol: float = 1e-12) -> frozenset[int]:
    """Indices whose value ties the maximum within tolerance."""
    values = np.asarray(values, dtype=np.float64)
    top = values.max()
    return frozenset(np.flatnonzero(values >= top - (rtol * abs(top) + atol)))


def check_posterior_argmax(world: DiscreteWorld) -> tuple[bool, Optional[str]]:
    """Does likelihood-argmax equal posterior-argmax for every visible outcome?

    Guaranteed to hold under a uniform prior; a skewed prior can shift the
    posterior argmax, in which case the offending outcome is returned as
    a witness.
    """
    evidence = world.evidence()
    for xi, px in enumerate(evidence):
        if px <= 0.0:
            continue
        like_set = argmax_set(world.likelihood[xi])
        post_set = argmax_set(posterior(world, xi))
        if like_set != post_set:
            return False, world.outcomes[xi]
    return True, None


def cohyponym_mixture(world: DiscreteWorld, concept_index: int) -> np.ndarray:
    """Uniform mixture over every other concept's outcome distribution."""
    nv = len(world.concepts)
    if nv < 2:
        raise ValueError("need at least one cohyponym concept")
    others = [v for v in range(nv) if v != concept_index]
    return world.likelihood[:, others].mean(axis=1)


def specificity_profile(world: DiscreteWorld, concept_index: int) -> np.ndarray:
    """Spec(i, x) = P(x|i) / P(x|C(i)) over the support of P(.|i)."""
    own = world.likelihood[:, concept_index]
    mix = cohyponym_mixture(world, concept_index)
    support = own > 0
    with np.errstate(divide="ignore"):
        return np.where(mix[support] > 0, own[support] / mix[support], np.inf)


def _divergence_to_cohyponyms(world: DiscreteWorld, concept_index: int) -> float:
    own = world.likelihood[:, concept_index]
    mix = cohyponym_mixture(world, concept_index)
    support = own > 0
    if (mix[support] <= 0).any():
        return float("inf")
    return kl_divergence(own, np.where(mix > 0, mix, 1.0))


def check_specificity_divergence_monotone(
    family: Sequence[DiscreteWorld], concept_index: int = 0,
    slack: float = 1e-9,
) -> tuple[bool, Optional[tuple[int, int]]]:
    """Do KL-to-cohyponyms and I(V;X) grow with worst-case specificity?

    The family must share outcomes and the distribution of the tracked
    concept; only the cohyponym mixture may vary. Worlds are ordered by
    min-over-support specificity, then both the divergence and the uniform-
    prior mutual information must be nondecreasing along that order. On a
    violation, the offending adjacent pair of (sorted) family indices is
    returned.
    """
    if len(family) < 2:
        raise errors.MismatchedSupport("family needs at least 2 worlds")
    base = family[0]
    for w in family[1:]:
        if w.outcomes != base.outcomes:
            raise errors.MismatchedSupport("family worlds disagree on outcomes")
        if not np.allclose(w.likelihood[:, concept_index],
                           base.likelihood[:, concept_index], atol=1e-12):
            raise errors.MismatchedSupport(
                "family worlds disagree on the tracked concept's distribution")

    spec_min = [specificity_profile(w, concept_index).min() for w in family]
    order = sorted(range(len(family)), key=lambda i: spec_min[i])
    kls = [_divergence_to_cohyponyms(family[i], concept_index) for i in order]
    mis = [mutual_information(family[i].with_uniform_prior()) for i in order]
    for a, b in zip(range(len(order) - 1), range(1, len(order))):
        if kls[b] < kls[a] - slack or mis[b] < mis[a] - slack:
            return False, (order[a], order[b])
    return True, None


def random_world(rng: np.random.Generator, n_concepts: int, n_outcomes: int,
                 uniform_prior: bool = True) -> DiscreteWorld:
    """Random strictly-positive world, for property tests and argmax sweeps."""
    raw = rng.random((n_outcomes, n_concepts)) + 1e-3
    likelihood = raw / raw.sum(axis=0, keepdims=True)
    if uniform_prior:
        prior = np.full(n_concepts, 1.0 / n_concepts)
    else:
        p = rng.random(n_concepts) + 1e-3
        prior = p / p.sum()
    concepts = [f"v{i}" for i in range(n_concepts)]
    outcomes = [f"x{i}" for i in range(n_outcomes)]
    return DiscreteWorld(concepts, outcomes, likelihood, prior)
