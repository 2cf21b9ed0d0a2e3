"""Embedding storage, cosine similarity, and prompt rendering.

Vectors are produced offline by any CLIP-style encoder; this module only
stores and compares them. Two interchangeable file formats exist:

- text: JSON lines ``{"id": str, "v": [float, ...]}``
- binary: magic ``EMB1``, little-endian u32 dim, u32 count, then per row a
  u16 id length, the UTF-8 id bytes, and dim float32 values.

The binary format round-trips bit-exactly; the text format is exact for
values that were written by this module (repr round-trip) and is required
to be within 1e-7 relative error otherwise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import numpy as np

from . import errors

MAGIC = b"EMB1"

KIND_CONCEPT_TEXT = "concept_text"
KIND_IMAGE = "image"


@dataclass
class EmbeddingStore:
    dim: int
    kind: str = KIND_CONCEPT_TEXT
    _ids: list[str] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict)
    _matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __contains__(self, id: str) -> bool:
        return id in self._index

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, id: str) -> np.ndarray:
        try:
            return self._matrix[self._index[id]]
        except KeyError:
            raise errors.MissingEmbedding(id) from None

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, np.ndarray]], kind: str = KIND_CONCEPT_TEXT,
                  expected_dim: Optional[int] = None) -> "EmbeddingStore":
        ids: list[str] = []
        index: dict[str, int] = {}
        vectors: list[np.ndarray] = []
        dim = expected_dim
        for id, vec in rows:
            vec = np.asarray(vec, dtype=np.float64)
            if dim is None:
                dim = int(vec.shape[-1])
            if vec.ndim != 1 or vec.shape[0] != dim:
                raise errors.DimensionMismatch(id, int(vec.shape[-1]), dim)
            if not np.isfinite(vec).all():
                raise errors.NonFiniteComponent(id)
            if id in index:
                raise errors.DuplicateId(id)
            index[id] = len(ids)
            ids.append(id)
            vectors.append(vec)
        if not ids:
            raise errors.EmptyInput("no embedding rows in input")
        matrix = np.vstack(vectors)
        if not (np.linalg.norm(matrix, axis=1) > 0).any():
            raise errors.ZeroNormVector("store contains only zero vectors")
        return cls(dim=dim, kind=kind, _ids=ids, _index=index, _matrix=matrix)


def load_embeddings_text(source: Union[IO[str], Iterable[str]], kind: str = KIND_CONCEPT_TEXT,
                         expected_dim: Optional[int] = None) -> EmbeddingStore:
    def rows():
        for lineno, raw in enumerate(source, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise errors.MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
            if "id" not in obj or "v" not in obj:
                raise errors.MalformedRecord(lineno, "row needs 'id' and 'v' fields")
            yield obj["id"], np.asarray(obj["v"], dtype=np.float64)

    return EmbeddingStore.from_rows(rows(), kind=kind, expected_dim=expected_dim)


def save_embeddings_text(store: EmbeddingStore, sink: IO[str]) -> None:
    for id in store.ids:
        vec = store.vector(id)
        sink.write(json.dumps({"id": id, "v": [float(x) for x in vec]}) + "\n")


def load_embeddings_binary(source: IO[bytes], kind: str = KIND_CONCEPT_TEXT,
                           expected_dim: Optional[int] = None) -> EmbeddingStore:
    header = source.read(12)
    if len(header) < 12 or header[:4] != MAGIC:
        raise errors.MalformedRecord(0, "not an EMB1 binary embedding file")
    dim, count = struct.unpack("<II", header[4:12])
    if expected_dim is not None and dim != expected_dim:
        raise errors.DimensionMismatch(None, dim, expected_dim)

    def rows():
        row_bytes = 4 * dim
        for _ in range(count):
            (id_len,) = struct.unpack("<H", source.read(2))
            id = source.read(id_len).decode("utf-8")
            buf = source.read(row_bytes)
            if len(buf) != row_bytes:
                raise errors.MalformedRecord(0, f"truncated row for id {id!r}")
            yield id, np.frombuffer(buf, dtype="<f4").astype(np.float64)

    return EmbeddingStore.from_rows(rows(), kind=kind, expected_dim=dim)


def save_embeddings_binary(store: EmbeddingStore, sink: IO[bytes]) -> None:
    sink.write(MAGIC)
    sink.write(struct.pack("<II", store.dim, len(store)))
    for id in store.ids:
        raw = id.encode("utf-8")
        sink.write(struct.pack("<H", len(raw)))
        sink.write(raw)
        sink.write(store.vector(id).astype("<f4").tobytes())


def load_embeddings(path: Union[str, Path], kind: str = KIND_CONCEPT_TEXT,
                    expected_dim: Optional[int] = None) -> EmbeddingStore:
    """Load either format, sniffed by the EMB1 magic."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        with path.open("rb") as fh:
            return load_embeddings_binary(fh, kind=kind, expected_dim=expected_dim)
    with path.open("r", encoding="utf-8") as fh:
        return load_embeddings_text(fh, kind=kind, expected_dim=expected_dim)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped into [-1, 1] after rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise errors.DimensionMismatch(None, b.shape[-1], a.shape[-1])
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise errors.ZeroNormVector("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


CONCEPT_SLOT = "<CONCEPT>"
DEFINITION_SLOT = "<DEFINITION>"


@dataclass(frozen=True)
class PromptTemplate:
    with_definition: bool
    pattern: str

    def __post_init__(self):
        if self.pattern.count(CONCEPT_SLOT) != 1:
            raise ValueError(f"pattern must contain {CONCEPT_SLOT} exactly once")
        if self.with_definition and DEFINITION_SLOT not in self.pattern:
            raise ValueError(f"with_definition pattern must contain {DEFINITION_SLOT}")


WITH_DEFINITION = PromptTemplate(True, "An image of <CONCEPT> (<DEFINITION>)")
WITHOUT_DEFINITION = PromptTemplate(False, "An image of <CONCEPT>")


def render_prompt(concept_text: str, definition: Optional[str],
                  template: PromptTemplate = WITH_DEFINITION) -> str:
    """Exact slot substitution, no added whitespace."""
    if not concept_text:
        raise errors.EmptyConcept("concept text must be nonempty")
    out = template.pattern.replace(CONCEPT_SLOT, concept_text)
    if template.with_definition:
        if definition is None:
            raise errors.MissingDefinition("template requires a definition")
        out = out.replace(DEFINITION_SLOT, definition)
    return out


def image_id(system: str, concept_id: str) -> str:
    """One store holds every system's images under '<system>/<concept>'."""
    return f"{system}/{concept_id}"
