"""Shared fixtures: a tiny hand-checked corpus and small synthetic ones."""

import numpy as np
import pytest

from xslearn.corpus import SynthConfig, generate_synthetic, inject_novel_items, load_symbolic
from xslearn.model import Model, ObjectEncoder, WordEmbeddings

# word IDs: get=0 the=1 piggie=2 cow=3 see=4 doggie=5 and=6
# object IDs: PIG=0 COW=1 DOG=2
TINY_TEXT = """\
#gold piggie=PIG
#gold cow=COW
#gold doggie=DOG
get the piggie | PIG COW
the cow | COW
see the doggie | DOG PIG
piggie piggie | PIG
the doggie and the cow | DOG COW
"""


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpora") / "tiny.txt"
    path.write_text(TINY_TEXT, encoding="utf-8")
    return load_symbolic(path)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(
        n_words=15, n_objects=12, n_scenes=80, words_per_scene=3.0, objects_per_scene=2.0
    )
    return generate_synthetic(cfg, seed=7)


@pytest.fixture(scope="session")
def small_novel(small_synth):
    return inject_novel_items(small_synth, 3, 3)


def make_table_model(words, objects, seed=0) -> Model:
    """Model straight from two row matrices; no corpus involved."""
    return Model(
        WordEmbeddings(np.asarray(words, dtype=np.float64)),
        ObjectEncoder("table", table=np.asarray(objects, dtype=np.float64)),
        seed,
    )


@pytest.fixture
def model_factory():
    return make_table_model
