"""Word and object representations and their similarity.

Words always live in a learned embedding table. Objects are encoded one
of three ways:

  table       a second embedding table, one row per object (symbolic)
  projection  a trainable linear map of fixed per-instance features
  frozen      the same linear map, left at its random initialization

Similarity is the cosine between a word vector and an object encoding,
clamped to [-1, 1].

Models serialize to a little-endian binary file: a fixed header (magic,
version, encoder mode, sizes, init seed) followed by the raw float64
word table and then the object table or projection matrix. Round-trips
are bitwise exact. Projection models do not store the feature matrix;
load_model takes it back as an argument.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .numerics import VECTOR_DIM

MAGIC = b"XSWM"
VERSION = 1
_MODES = ("table", "projection", "frozen")
_HEADER = struct.Struct("<4sIBBxxIQQIq")


@dataclass
class WordEmbeddings:
    """The word vector table, shape (vocabulary size, dim)."""

    table: np.ndarray

    def __post_init__(self):
        self.table = np.ascontiguousarray(self.table, dtype=np.float64)
        if self.table.ndim != 2:
            raise ValueError("word table must be 2-d")

    @property
    def size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def vector(self, word_id: int) -> np.ndarray:
        if not 0 <= word_id < self.size:
            raise IndexError(f"word ID {word_id} out of range [0, {self.size})")
        return self.table[word_id]


@dataclass
class ObjectEncoder:
    """Maps object IDs to vectors; see the module docstring for modes."""

    mode: str
    table: np.ndarray | None = None
    proj: np.ndarray | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        if self.mode == "table":
            if self.table is None:
                raise ValueError("table mode needs an object table")
            self.table = np.ascontiguousarray(self.table, dtype=np.float64)
        else:
            if self.proj is None or self.features is None:
                raise ValueError(f"{self.mode} mode needs a projection and features")
            self.proj = np.ascontiguousarray(self.proj, dtype=np.float64)
            self.features = np.ascontiguousarray(self.features, dtype=np.float64)
            if self.proj.shape[1] != self.features.shape[1]:
                raise ValueError(
                    f"projection expects {self.proj.shape[1]}-d features, "
                    f"got {self.features.shape[1]}"
                )

    @property
    def trains_projection(self) -> bool:
        return self.mode == "projection"

    @property
    def size(self) -> int:
        return self.table.shape[0] if self.mode == "table" else self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1] if self.mode == "table" else self.proj.shape[0]

    def encode(self, object_id: int) -> np.ndarray:
        if not 0 <= object_id < self.size:
            raise IndexError(f"object ID {object_id} out of range [0, {self.size})")
        if self.mode == "table":
            return self.table[object_id]
        return self.proj @ self.features[object_id]

    def encode_all(self) -> np.ndarray:
        """All object encodings as one (n_objects, dim) matrix."""
        if self.mode == "table":
            return self.table
        return self.features @ self.proj.T


@dataclass
class Model:
    words: WordEmbeddings
    encoder: ObjectEncoder
    seed: int

    @property
    def dim(self) -> int:
        return self.words.dim

    @property
    def n_words(self) -> int:
        return self.words.size

    @property
    def n_objects(self) -> int:
        return self.encoder.size

    def similarity(self, word_id: int, object_id: int) -> float:
        """cos(word vector, object encoding), clamped to [-1, 1]."""
        from .numerics import cosine

        return cosine(self.words.vector(word_id), self.encoder.encode(object_id))

    def similarity_matrix(self) -> np.ndarray:
        """All similarities as a (n_words, n_objects) matrix.

        Raises ValueError if any row or encoding has zero norm (cosine
        undefined), which trained or freshly initialized models never
        have.
        """
        w = self.words.table
        e = self.encoder.encode_all()
        wn = np.linalg.norm(w, axis=1)
        en = np.linalg.norm(e, axis=1)
        if np.any(wn == 0.0):
            raise ValueError(f"word {int(np.argmin(wn))} has a zero-norm vector")
        if np.any(en == 0.0):
            raise ValueError(f"object {int(np.argmin(en))} has a zero-norm encoding")
        sims = (w / wn[:, None]) @ (e / en[:, None]).T
        return np.clip(sims, -1.0, 1.0)

    def clone(self) -> "Model":
        enc = ObjectEncoder(
            self.encoder.mode,
            None if self.encoder.table is None else self.encoder.table.copy(),
            None if self.encoder.proj is None else self.encoder.proj.copy(),
            self.encoder.features,  # read-only; shared
        )
        return Model(WordEmbeddings(self.words.table.copy()), enc, self.seed)


def _rejitter_zero_rows(table: np.ndarray, rng: np.random.Generator) -> None:
    # Uniform(-r, r) can in principle land a row on exact zero; the
    # cosine needs every row nonzero, so redraw tiny values for such rows.
    while True:
        norms = np.linalg.norm(table, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size == 0:
            return
        table[zero] = rng.uniform(-1e-6, 1e-6, size=(zero.size, table.shape[1]))


def init_model(
    corpus: Corpus,
    dim: int = VECTOR_DIM,
    init_range: float = 0.1,
    seed: int = 0,
    encoder: str = "auto",
) -> Model:
    """Fresh model for a corpus, entries drawn Uniform(-init_range, init_range).

    Draw order is fixed (word table first, then object table or
    projection), so models are bitwise reproducible per seed. encoder
    "auto" picks "table" without features and "projection" with them.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if init_range <= 0:
        raise ValueError("init_range must be positive")
    seed = int(seed)
    feats = corpus.inventory.features
    if encoder == "auto":
        encoder = "table" if feats is None else "projection"
    if encoder not in _MODES:
        raise ValueError(f"unknown encoder mode {encoder!r}")
    if encoder in ("projection", "frozen"):
        if feats is None:
            raise ValueError(f"{encoder} encoder needs a feature-bearing corpus")
        zero = np.flatnonzero(np.linalg.norm(feats, axis=1) == 0.0)
        if zero.size:
            raise ValueError(f"object {int(zero[0])} has an all-zero feature vector")

    rng = np.random.default_rng(seed)
    words = rng.uniform(-init_range, init_range, size=(corpus.vocabulary.size, dim))
    _rejitter_zero_rows(words, rng)
    if encoder == "table":
        table = rng.uniform(-init_range, init_range, size=(corpus.inventory.size, dim))
        _rejitter_zero_rows(table, rng)
        enc = ObjectEncoder("table", table=table)
    else:
        proj = rng.uniform(-init_range, init_range, size=(dim, feats.shape[1]))
        enc = ObjectEncoder(encoder, proj=proj, features=feats)
    return Model(WordEmbeddings(words), enc, seed)


def save_model(model: Model, path) -> None:
    """Write the binary model file (see module docstring)."""
    enc = model.encoder
    mode_code = _MODES.index(enc.mode)
    feat_dim = 0 if enc.mode == "table" else enc.features.shape[1]
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        mode_code,
        1 if enc.trains_projection or enc.mode == "table" else 0,
        model.dim,
        model.n_words,
        model.n_objects,
        feat_dim,
        model.seed,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(model.words.table).tobytes())
        if enc.mode == "table":
            f.write(np.ascontiguousarray(enc.table).tobytes())
        else:
            f.write(np.ascontiguousarray(enc.proj).tobytes())


def load_model(path, features: np.ndarray | None = None) -> Model:
    """Read a model file; projection models need their feature matrix back."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated model file")
    magic, version, mode_code, _, dim, n_words, n_objects, feat_dim, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported model file version {version}")
    if not 0 <= mode_code < len(_MODES):
        raise ValueError(f"{path}: unknown encoder mode code {mode_code}")
    mode = _MODES[mode_code]
    off = _HEADER.size
    n_word_floats = n_words * dim
    second = n_objects * dim if mode == "table" else dim * feat_dim
    expected = off + 8 * (n_word_floats + second)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    words = np.frombuffer(raw, dtype="<f8", count=n_word_floats, offset=off).reshape(n_words, dim)
    off += 8 * n_word_floats
    if mode == "table":
        table = np.frombuffer(raw, dtype="<f8", count=second, offset=off).reshape(n_objects, dim)
        enc = ObjectEncoder("table", table=table.copy())
    else:
        if features is None:
            raise ValueError(f"{path}: {mode}-mode model needs its feature matrix to load")
        feats = np.ascontiguousarray(features, dtype=np.float64)
        if feats.shape != (n_objects, feat_dim):
            raise ValueError(
                f"{path}: model was built for features {(n_objects, feat_dim)}, got {feats.shape}"
            )
        proj = np.frombuffer(raw, dtype="<f8", count=second, offset=off).reshape(dim, feat_dim)
        enc = ObjectEncoder(mode, proj=proj.copy(), features=feats)
    return Model(WordEmbeddings(words.copy()), enc, int(seed))
