"""Typed errors shared across the package.

Every error a pipeline stage can raise is a subclass of TaxoArenaError so the
CLI can map failures onto its exit-code classes (input / compute / network).
"""

from __future__ import annotations


class TaxoArenaError(Exception):
    """Base class for all package errors."""


class InputError(TaxoArenaError):
    """Malformed or inconsistent input data."""


class ComputeError(TaxoArenaError):
    """A numeric or statistical operation could not be completed."""


class NetworkError(TaxoArenaError):
    """An external-service call failed."""


# --- taxonomy ---------------------------------------------------------------

class EmptyInput(InputError):
    pass


class DuplicateId(InputError):
    def __init__(self, id: str):
        super().__init__(f"duplicate id: {id!r}")
        self.id = id


class DanglingHypernym(InputError):
    def __init__(self, id: str):
        super().__init__(f"hypernym id does not resolve: {id!r}")
        self.id = id


class CycleDetected(InputError):
    def __init__(self, path: list[str]):
        super().__init__(f"hypernym cycle: {' -> '.join(path + path[:1])}")
        self.path = path


class UnknownId(InputError):
    def __init__(self, id: str):
        super().__init__(f"unknown synset id: {id!r}")
        self.id = id


class InsufficientEligibleNodes(InputError):
    def __init__(self, kind):
        super().__init__(f"no eligible nodes left for relation kind {kind}")
        self.kind = kind


class MalformedRecord(InputError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


# --- embeddings -------------------------------------------------------------

class DimensionMismatch(InputError):
    def __init__(self, id: str | None, got: int, want: int):
        where = f" for {id!r}" if id is not None else ""
        super().__init__(f"dimension mismatch{where}: got {got}, want {want}")
        self.id, self.got, self.want = id, got, want


class NonFiniteComponent(InputError):
    def __init__(self, id: str | None = None):
        super().__init__(f"non-finite vector component" + (f" in {id!r}" if id else ""))
        self.id = id


class ZeroNormVector(ComputeError):
    pass


class EmptyConcept(InputError):
    pass


class MissingDefinition(InputError):
    pass


# --- similarity metrics -----------------------------------------------------

class MissingEmbedding(InputError):
    def __init__(self, id: str):
        super().__init__(f"no embedding stored for id {id!r}")
        self.id = id


class NonPositiveDenominator(ComputeError):
    def __init__(self, value: float):
        super().__init__(f"cohyponym similarity must be positive, got {value}")
        self.value = value


# --- distributional metrics -------------------------------------------------

class TooFewSamples(InputError):
    pass


class NonConvergentSqrt(ComputeError):
    pass


class TooFewRows(InputError):
    pass


class RowLengthMismatch(InputError):
    pass


# --- arena ------------------------------------------------------------------

class TooFewSystems(InputError):
    pass


class NoDecisiveVerdicts(ComputeError):
    pass


class TooManyFailedResamples(ComputeError):
    def __init__(self, failed: int, total: int):
        super().__init__(f"{failed}/{total} bootstrap resamples failed to fit")
        self.failed, self.total = failed, total


class LengthMismatch(InputError):
    pass


class TooShort(InputError):
    pass


class NoSharedBattles(InputError):
    pass


class EmptySample(InputError):
    pass


# --- discrete worlds --------------------------------------------------------

class ZeroEvidence(ComputeError):
    def __init__(self, outcome):
        super().__init__(f"outcome {outcome!r} has zero marginal probability")
        self.outcome = outcome


class AbsoluteContinuityViolation(ComputeError):
    pass


class MismatchedSupport(InputError):
    pass


# --- external clients -------------------------------------------------------

class TransportError(NetworkError):
    pass


class RateLimited(NetworkError):
    pass


class ParseError(NetworkError):
    def __init__(self, transcript: str):
        super().__init__("no verdict token found in judge response")
        self.transcript = transcript


class NoResult(NetworkError):
    def __init__(self, lemma: str):
        super().__init__(f"no image found for lemma {lemma!r}")
        self.lemma = lemma


class EmptyWord(InputError):
    pass


# --- annotation service -----------------------------------------------------

class UnknownAnnotator(InputError):
    def __init__(self, annotator: str):
        super().__init__(f"annotator not in roster: {annotator!r}")
        self.annotator = annotator


class NoOpenAssignment(InputError):
    pass


class DuplicateVerdict(InputError):
    pass


class StorageFailure(TaxoArenaError):
    """Durable append failed; the verdict was not acked and is safe to retry."""
