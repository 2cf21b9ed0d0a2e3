import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taxoarena import embeddings as emb
from taxoarena import errors


def text_rows(rows):
    return io.StringIO("".join(json.dumps({"id": i, "v": v}) + "\n" for i, v in rows))


class TestLoad:
    def test_two_rows(self):
        store = emb.load_embeddings_text(text_rows([("a", [1, 2, 3]), ("b", [4, 5, 6])]))
        assert store.dim == 3
        assert len(store) == 2
        assert np.allclose(store.vector("b"), [4, 5, 6])

    def test_dimension_mismatch(self):
        with pytest.raises(errors.DimensionMismatch):
            emb.load_embeddings_text(text_rows([("a", [1, 2, 3]), ("b", [1, 2, 3, 4])]))

    def test_nan_rejected(self):
        with pytest.raises(errors.NonFiniteComponent):
            emb.load_embeddings_text(text_rows([("a", [1.0, float("nan")])]))

    def test_duplicate_id(self):
        with pytest.raises(errors.DuplicateId):
            emb.load_embeddings_text(text_rows([("a", [1.0]), ("a", [2.0])]))

    def test_expected_dim_enforced(self):
        with pytest.raises(errors.DimensionMismatch):
            emb.load_embeddings_text(text_rows([("a", [1, 2])]), expected_dim=3)

    def test_all_zero_rejected(self):
        with pytest.raises(errors.ZeroNormVector):
            emb.load_embeddings_text(text_rows([("a", [0.0, 0.0])]))

    def test_missing_lookup(self):
        store = emb.load_embeddings_text(text_rows([("a", [1.0])]))
        with pytest.raises(errors.MissingEmbedding):
            store.vector("b")


class TestFormats:
    def test_binary_roundtrip_bit_exact(self):
        rng = np.random.default_rng(3)
        rows = [(f"id/{i}", rng.normal(size=5).astype(np.float32).astype(float).tolist())
                for i in range(7)]
        store = emb.EmbeddingStore.from_rows(
            [(i, np.asarray(v)) for i, v in rows])
        buf = io.BytesIO()
        emb.save_embeddings_binary(store, buf)
        buf.seek(0)
        loaded = emb.load_embeddings_binary(buf)
        buf2 = io.BytesIO()
        emb.save_embeddings_binary(loaded, buf2)
        assert buf.getvalue() == buf2.getvalue()
        for id, _ in rows:
            assert (store.vector(id).astype("<f4") == loaded.vector(id).astype("<f4")).all()

    def test_text_roundtrip_within_tolerance(self):
        rng = np.random.default_rng(4)
        store = emb.EmbeddingStore.from_rows(
            [(f"r{i}", rng.normal(size=6)) for i in range(5)])
        buf = io.StringIO()
        emb.save_embeddings_text(store, buf)
        buf.seek(0)
        loaded = emb.load_embeddings_text(buf)
        for id in store.ids:
            a, b = store.vector(id), loaded.vector(id)
            assert np.abs(a - b).max() <= 1e-7 * np.abs(a).max()

    def test_magic_sniffing(self, tmp_path):
        store = emb.EmbeddingStore.from_rows([("a", np.array([1.0, 2.0]))])
        binpath = tmp_path / "store.emb1"
        with open(binpath, "wb") as fh:
            emb.save_embeddings_binary(store, fh)
        textpath = tmp_path / "store.jsonl"
        with open(textpath, "w") as fh:
            emb.save_embeddings_text(store, fh)
        for path in (binpath, textpath):
            loaded = emb.load_embeddings(path)
            assert np.allclose(loaded.vector("a"), [1.0, 2.0])

    def test_truncated_binary(self):
        store = emb.EmbeddingStore.from_rows([("a", np.array([1.0, 2.0]))])
        buf = io.BytesIO()
        emb.save_embeddings_binary(store, buf)
        data = buf.getvalue()[:-3]
        with pytest.raises(errors.MalformedRecord):
            emb.load_embeddings_binary(io.BytesIO(data))


class TestCosine:
    def test_identical(self):
        assert emb.cosine(np.array([1.0, 2, 3]), np.array([1.0, 2, 3])) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert emb.cosine(np.array([1.0, 0]), np.array([0.0, 1])) == 0.0

    def test_45_degrees(self):
        assert emb.cosine(np.array([1.0, 0]), np.array([1.0, 1])) == pytest.approx(
            0.7071067812, abs=1e-9)

    def test_zero_norm(self):
        with pytest.raises(errors.ZeroNormVector):
            emb.cosine(np.array([0.0, 0.0]), np.array([1.0, 0.0]))

    def test_dim_mismatch(self):
        with pytest.raises(errors.DimensionMismatch):
            emb.cosine(np.array([1.0]), np.array([1.0, 2.0]))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=8),
           st.floats(1e-3, 1e3))
    def test_scale_invariant_and_bounded(self, values, k):
        a = np.asarray(values)
        if np.linalg.norm(a) == 0:
            return
        b = np.ones_like(a)
        c1 = emb.cosine(a, b)
        c2 = emb.cosine(k * a, b)
        assert abs(c1) <= 1.0
        assert c1 == pytest.approx(c2, abs=1e-9)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
    def test_self_cosine_is_one(self, values):
        a = np.asarray(values)
        if np.linalg.norm(a) == 0:
            return
        assert emb.cosine(a, a) == pytest.approx(1.0, abs=1e-12)


class TestPrompt:
    def test_paper_style_example(self):
        out = emb.render_prompt("cigar lighter", "a lighter for cigars or cigarettes",
                                emb.WITH_DEFINITION)
        assert out == "An image of cigar lighter (a lighter for cigars or cigarettes)"

    def test_without_definition(self):
        assert emb.render_prompt("coin", None, emb.WITHOUT_DEFINITION) == "An image of coin"

    def test_empty_concept(self):
        with pytest.raises(errors.EmptyConcept):
            emb.render_prompt("", "d", emb.WITH_DEFINITION)

    def test_missing_definition(self):
        with pytest.raises(errors.MissingDefinition):
            emb.render_prompt("coin", None, emb.WITH_DEFINITION)

    def test_pattern_must_have_concept_slot_once(self):
        with pytest.raises(ValueError):
            emb.PromptTemplate(False, "no slot here")
        with pytest.raises(ValueError):
            emb.PromptTemplate(False, "<CONCEPT> twice <CONCEPT>")

    def test_image_id_convention(self):
        assert emb.image_id("sdxl", "coin.n.01") == "sdxl/coin.n.01"
