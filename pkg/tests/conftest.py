import io
import json

import numpy as np
import pytest

from taxoarena import taxonomy as tx


def synset_line(id, lemmas=None, definition=None, hypernyms=()):
    return json.dumps({
        "id": id,
        "lemmas": lemmas or [id],
        "definition": definition,
        "hypernyms": list(hypernyms),
    })


@pytest.fixture
def chain_graph():
    # c -> b -> a
    return tx.load_taxonomy([
        synset_line("a"),
        synset_line("b", hypernyms=["a"]),
        synset_line("c", hypernyms=["b"]),
    ])


@pytest.fixture
def star_graph():
    # p -> {a, b, c}
    return tx.load_taxonomy([
        synset_line("p"),
        synset_line("a", hypernyms=["p"]),
        synset_line("b", hypernyms=["p"]),
        synset_line("c", hypernyms=["p"]),
    ])


@pytest.fixture
def diamond_graph():
    # x has parents p and q; p -> {x, y}, q -> {x, z}
    return tx.load_taxonomy([
        synset_line("p"),
        synset_line("q"),
        synset_line("x", hypernyms=["p", "q"]),
        synset_line("y", hypernyms=["p"]),
        synset_line("z", hypernyms=["q"]),
    ])


def random_taxonomy_lines(rng: np.random.Generator, n_roots=3, n_internal=60,
                          n_leaves=200, multi_parent_rate=0.15):
    """Synthetic WordNet-shaped taxonomy as JSON lines."""
    lines = []
    roots = [f"r{i}" for i in range(n_roots)]
    for r in roots:
        lines.append(synset_line(r, definition=f"root {r}"))
    internal = []
    for i in range(n_internal):
        parents = [str(rng.choice(roots if not internal else roots + internal))]
        if internal and rng.random() < multi_parent_rate:
            other = str(rng.choice(roots + internal))
            if other not in parents:
                parents.append(other)
        name = f"i{i}"
        lines.append(synset_line(name, definition=f"internal {name}",
                                 hypernyms=parents))
        internal.append(name)
    for i in range(n_leaves):
        parents = [str(rng.choice(internal))]
        if rng.random() < multi_parent_rate:
            other = str(rng.choice(internal))
            if other not in parents:
                parents.append(other)
        lines.append(synset_line(f"l{i}", definition=f"leaf l{i}",
                                 hypernyms=parents))
    return lines


def make_embeddings_jsonl(ids, rng, dim=8):
    buf = io.StringIO()
    for id in ids:
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        buf.write(json.dumps({"id": id, "v": [float(x) for x in v]}) + "\n")
    buf.seek(0)
    return buf
