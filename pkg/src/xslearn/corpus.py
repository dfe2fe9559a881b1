"""Corpora of word-object co-occurrence scenes.

A scene pairs the words of one utterance (or caption) with the objects
present in the situation. Training never sees alignments: every word in
a scene co-occurs with every object. Word and object IDs are dense ints
assigned in first-appearance order, and an item's novelty is derived,
not stored: novel means it occurs in no training scene (frequency 0).

Two on-disk formats are supported.

Symbolic (one scene per line, optional gold-pair header):

    #gold piggie=PIG
    get the piggie | PIG COW

Instance-based ("visual"): a JSONL scene file plus a feature table.
Each scene line is a JSON object with keys "image" (str), "caption_id"
(int), "objects" (list of {"instance": str, "label": str}) and "words"
(list of str). The feature table starts with a one-line integer header
giving the dimensionality, then one whitespace-separated line per
instance: ID followed by that many values.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    """A corpus file could not be parsed or failed referential checks."""


@dataclass(frozen=True)
class Scene:
    """One co-occurrence situation: a set of word IDs and a set of object IDs.

    Inputs are deduplicated and stored sorted; both sets must be
    non-empty.
    """

    words: tuple[int, ...]
    objects: tuple[int, ...]

    def __post_init__(self):
        w = tuple(sorted(set(int(x) for x in self.words)))
        o = tuple(sorted(set(int(x) for x in self.objects)))
        if not w:
            raise ValueError("a scene needs at least one word")
        if not o:
            raise ValueError("a scene needs at least one object")
        object.__setattr__(self, "words", w)
        object.__setattr__(self, "objects", o)


def pair_expand(scene: Scene) -> frozenset[tuple[int, int]]:
    """All word-object pairs the scene licenses: the full cross product."""
    return frozenset((w, o) for w in scene.words for o in scene.objects)


@dataclass(frozen=True)
class Vocabulary:
    """Word forms with their training frequencies.

    frequency[i] counts the scenes whose word set contains word i
    (repeat mentions inside one utterance collapse, since a scene's
    words form a set). Frequency 0 marks a novel word.
    """

    words: tuple[str, ...]
    frequency: tuple[int, ...]

    def __post_init__(self):
        if len(self.words) != len(self.frequency):
            raise ValueError("words and frequency differ in length")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate word forms")
        if any(f < 0 for f in self.frequency):
            raise ValueError("negative frequency")

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self._index[word]
        except AttributeError:
            object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})
            return self._index[word]

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def is_novel(self, word_id: int) -> bool:
        return self.frequency[word_id] == 0

    def novel_ids(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.frequency) if f == 0)

    def familiar_ids(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.frequency) if f > 0)

    def novel_mask(self) -> np.ndarray:
        return np.array([f == 0 for f in self.frequency], dtype=bool)


@dataclass(frozen=True, eq=False)
class ObjectInventory:
    """Object identities, optionally with category labels and feature rows.

    frequency[i] counts the scenes containing object i; 0 marks a novel
    object. categories holds the first label seen for each instance in
    instance-based corpora. features, when present, is a (n, dim)
    float64 matrix aligned with object IDs.
    """

    names: tuple[str, ...]
    frequency: tuple[int, ...]
    categories: tuple[str, ...] | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        if len(self.names) != len(self.frequency):
            raise ValueError("names and frequency differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate object names")
        if any(f < 0 for f in self.frequency):
            raise ValueError("negative frequency")
        if self.categories is not None and len(self.categories) != len(self.names):
            raise ValueError("categories and names differ in length")
        if self.features is not None:
            feats = np.ascontiguousarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != len(self.names):
                raise ValueError(f"features must be ({len(self.names)}, dim), got {feats.shape}")
            object.__setattr__(self, "features", feats)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObjectInventory):
            return NotImplemented
        if (self.names, self.frequency, self.categories) != (other.names, other.frequency, other.categories):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    @property
    def size(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except AttributeError:
            object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})
            return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def is_novel(self, object_id: int) -> bool:
        return self.frequency[object_id] == 0

    def novel_ids(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.frequency) if f == 0)

    def familiar_ids(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.frequency) if f > 0)

    def novel_mask(self) -> np.ndarray:
        return np.array([f == 0 for f in self.frequency], dtype=bool)

    def ids_of_category(self, label: str) -> tuple[int, ...]:
        if self.categories is None:
            return ()
        return tuple(i for i, c in enumerate(self.categories) if c == label)


@dataclass(frozen=True)
class GoldLexicon:
    """The reference word-object mapping used for scoring, never training.

    Each entry pairs a word ID with either an object ID (symbolic
    corpora) or a category label (instance-based corpora, where any
    instance of the category counts as correct).
    """

    entries: frozenset

    def __post_init__(self):
        ent = frozenset((int(w), o if isinstance(o, str) else int(o)) for w, o in self.entries)
        object.__setattr__(self, "entries", ent)

    def __len__(self) -> int:
        return len(self.entries)

    def word_ids(self) -> frozenset[int]:
        return frozenset(w for w, _ in self.entries)

    def object_pairs(self, inventory: ObjectInventory) -> frozenset[tuple[int, int]]:
        """Entries as (word ID, object ID) pairs, category labels expanded."""
        pairs = set()
        for w, ref in self.entries:
            if isinstance(ref, str):
                for oid in inventory.ids_of_category(ref):
                    pairs.add((w, oid))
            else:
                pairs.add((w, ref))
        return frozenset(pairs)

    def objects_for(self, word_id: int, inventory: ObjectInventory) -> frozenset[int]:
        return frozenset(o for w, o in self.object_pairs(inventory) if w == word_id)


@dataclass(frozen=True)
class CorpusStats:
    n_scenes: int
    n_words: int
    n_objects: int
    mean_words_per_scene: float
    mean_objects_per_scene: float
    n_gold_entries: int
    n_pairs: int


Alignments = tuple[tuple[tuple[int, int], ...], ...]


@dataclass(frozen=True, eq=False)
class Corpus:
    """Scenes plus the vocabulary, object inventory and optional gold pairs.

    alignments, when present (instance-based corpora), gives for each
    scene the annotated (word ID, object ID) referent pairs; it is
    evaluation data, never a training signal.
    """

    scenes: tuple[Scene, ...]
    vocabulary: Vocabulary
    inventory: ObjectInventory
    gold: GoldLexicon | None = None
    alignments: Alignments | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        if self.alignments is not None:
            object.__setattr__(
                self,
                "alignments",
                tuple(tuple(sorted((int(w), int(o)) for w, o in al)) for al in self.alignments),
            )
        self._validate()

    def _validate(self):
        if not self.scenes:
            raise ValueError("a corpus needs at least one scene")
        nw, no = self.vocabulary.size, self.inventory.size
        wcount = [0] * nw
        ocount = [0] * no
        for s in self.scenes:
            for w in s.words:
                if not 0 <= w < nw:
                    raise ValueError(f"scene word ID {w} out of range")
                wcount[w] += 1
            for o in s.objects:
                if not 0 <= o < no:
                    raise ValueError(f"scene object ID {o} out of range")
                ocount[o] += 1
        if tuple(wcount) != self.vocabulary.frequency:
            raise ValueError("vocabulary frequencies do not match the scenes")
        if tuple(ocount) != self.inventory.frequency:
            raise ValueError("inventory frequencies do not match the scenes")
        if self.gold is not None:
            for w, ref in self.gold.entries:
                if not 0 <= w < nw:
                    raise ValueError(f"gold entry references unknown word ID {w}")
                if isinstance(ref, str):
                    if not self.inventory.ids_of_category(ref):
                        raise ValueError(f"gold entry references unknown category {ref!r}")
                elif not 0 <= ref < no:
                    raise ValueError(f"gold entry references unknown object ID {ref}")
        if self.alignments is not None:
            if len(self.alignments) != len(self.scenes):
                raise ValueError("alignments and scenes differ in length")
            for s, al in zip(self.scenes, self.alignments):
                for w, o in al:
                    if w not in s.words or o not in s.objects:
                        raise ValueError(f"alignment ({w}, {o}) references items outside its scene")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.scenes == other.scenes
            and self.vocabulary == other.vocabulary
            and self.inventory == other.inventory
            and self.gold == other.gold
            and self.alignments == other.alignments
        )

    @property
    def n_scenes(self) -> int:
        return len(self.scenes)

    def stats(self) -> CorpusStats:
        """Summary statistics, recomputed from the scenes on every call."""
        n = len(self.scenes)
        return CorpusStats(
            n_scenes=n,
            n_words=self.vocabulary.size,
            n_objects=self.inventory.size,
            mean_words_per_scene=sum(len(s.words) for s in self.scenes) / n,
            mean_objects_per_scene=sum(len(s.objects) for s in self.scenes) / n,
            n_gold_entries=0 if self.gold is None else len(self.gold),
            n_pairs=sum(len(s.words) * len(s.objects) for s in self.scenes),
        )


def pair_arrays(corpus: Corpus) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten all scenes into parallel (word, object, scene index) arrays.

    Deterministic order: scenes in corpus order, pairs in sorted-ID
    order within a scene. This is the training input.
    """
    pw, po, ps = [], [], []
    for si, scene in enumerate(corpus.scenes):
        for w in scene.words:
            for o in scene.objects:
                pw.append(w)
                po.append(o)
                ps.append(si)
    return (
        np.asarray(pw, dtype=np.int64),
        np.asarray(po, dtype=np.int64),
        np.asarray(ps, dtype=np.int64),
    )


def token_weights(corpus: Corpus) -> dict[int, float]:
    """Inverse-frequency weight per familiar word: 1 / frequency.

    Novel (frequency 0) words have no weight; they never occur in a
    training pair.
    """
    return {i: 1.0 / f for i, f in enumerate(corpus.vocabulary.frequency) if f > 0}


# ---------------------------------------------------------------------------
# construction from name-level scenes (shared by loaders and generators)


def _corpus_from_name_scenes(
    name_scenes: list[tuple[list[str], list[str]]],
    gold_names: list[tuple[str, str]] | None = None,
    categories_by_name: dict[str, str] | None = None,
    features_by_name: dict[str, np.ndarray] | None = None,
    alignments_by_name: list[list[tuple[str, str]]] | None = None,
) -> Corpus:
    # Assign IDs in first-appearance order over the scene list, then
    # translate everything into ID space and recount frequencies.
    word_id: dict[str, int] = {}
    obj_id: dict[str, int] = {}
    for words, objs in name_scenes:
        for w in words:
            if w not in word_id:
                word_id[w] = len(word_id)
        for o in objs:
            if o not in obj_id:
                obj_id[o] = len(obj_id)

    scenes = tuple(
        Scene(tuple(word_id[w] for w in words), tuple(obj_id[o] for o in objs))
        for words, objs in name_scenes
    )
    wfreq = [0] * len(word_id)
    ofreq = [0] * len(obj_id)
    for s in scenes:
        for w in s.words:
            wfreq[w] += 1
        for o in s.objects:
            ofreq[o] += 1

    words_sorted = sorted(word_id, key=word_id.get)
    objs_sorted = sorted(obj_id, key=obj_id.get)
    vocabulary = Vocabulary(tuple(words_sorted), tuple(wfreq))

    categories = None
    if categories_by_name is not None:
        categories = tuple(categories_by_name[n] for n in objs_sorted)
    features = None
    if features_by_name is not None:
        features = np.stack([features_by_name[n] for n in objs_sorted]) if objs_sorted else None

    inventory = ObjectInventory(tuple(objs_sorted), tuple(ofreq), categories, features)

    gold = None
    if gold_names is not None:
        entries = set()
        for wname, oref in gold_names:
            if wname not in word_id:
                raise CorpusFormatError(f"gold entry references unknown word {wname!r}")
            if oref in obj_id:
                entries.add((word_id[wname], obj_id[oref]))
            elif categories is not None and oref in categories:
                entries.add((word_id[wname], oref))
            else:
                raise CorpusFormatError(f"gold entry references unknown object {oref!r}")
        gold = GoldLexicon(frozenset(entries))

    alignments = None
    if alignments_by_name is not None:
        alignments = tuple(
            tuple(sorted((word_id[w], obj_id[o]) for w, o in al)) for al in alignments_by_name
        )

    return Corpus(scenes, vocabulary, inventory, gold, alignments)


# ---------------------------------------------------------------------------
# symbolic format

_GOLD_RE = re.compile(r"^#gold\s+(\S+)\s*=\s*(\S+)\s*$")


def load_symbolic(path) -> Corpus:
    """Parse the line-oriented symbolic scene format (see module docstring)."""
    text = Path(path).read_text(encoding="utf-8")
    gold_names: list[tuple[str, str]] = []
    name_scenes: list[tuple[list[str], list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _GOLD_RE.match(line)
            if m is None:
                raise CorpusFormatError(f"line {lineno}: unrecognized header line {line!r}")
            if name_scenes:
                raise CorpusFormatError(f"line {lineno}: gold header after the first scene")
            gold_names.append((m.group(1), m.group(2)))
            continue
        if line.count("|") != 1:
            raise CorpusFormatError(f"line {lineno}: a scene needs exactly one '|' separator")
        left, right = line.split("|")
        words = left.split()
        objs = right.split()
        if not words:
            raise CorpusFormatError(f"line {lineno}: scene has no words")
        if not objs:
            raise CorpusFormatError(f"line {lineno}: scene has no objects")
        name_scenes.append((words, objs))
    if not name_scenes:
        raise CorpusFormatError(f"{path}: no scenes found")
    return _corpus_from_name_scenes(name_scenes, gold_names or None)


def save_symbolic(corpus: Corpus, path) -> None:
    """Write the symbolic format; load_symbolic(save_symbolic(c)) == c.

    Refuses corpora the format cannot represent: feature-bearing
    inventories, novel (frequency-0) items, or category-label gold
    entries.
    """
    if corpus.inventory.features is not None:
        raise ValueError("feature-bearing corpora use save_visual, not the symbolic format")
    if corpus.vocabulary.novel_ids() or corpus.inventory.novel_ids():
        raise ValueError("the symbolic format cannot represent novel (frequency-0) items")
    lines = []
    if corpus.gold is not None:
        for w, ref in sorted(corpus.gold.entries, key=lambda e: (e[0], str(e[1]))):
            if isinstance(ref, str):
                raise ValueError("the symbolic format cannot represent category-label gold entries")
            lines.append(f"#gold {corpus.vocabulary.words[w]}={corpus.inventory.names[ref]}")
    for scene in corpus.scenes:
        ws = " ".join(corpus.vocabulary.words[w] for w in scene.words)
        os_ = " ".join(corpus.inventory.names[o] for o in scene.objects)
        lines.append(f"{ws} | {os_}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# instance-based ("visual") format


def load_visual(scenes_path, features_path) -> Corpus:
    """Load a JSONL scene file plus its feature table (see module docstring)."""
    features_by_name, dim = _read_feature_table(features_path)

    name_scenes: list[tuple[list[str], list[str]]] = []
    alignments: list[list[tuple[str, str]]] = []
    first_label: dict[str, str] = {}
    text = Path(scenes_path).read_text(encoding="utf-8")
    n_lines = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        n_lines += 1
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"scene line {lineno}: invalid JSON ({e})") from None
        if not isinstance(rec, dict):
            raise CorpusFormatError(f"scene line {lineno}: expected a JSON object")
        for key in ("image", "caption_id", "objects", "words"):
            if key not in rec:
                raise CorpusFormatError(f"scene line {lineno}: missing field {key!r}")
        words = rec["words"]
        objs = rec["objects"]
        if not isinstance(words, list) or not all(isinstance(w, str) for w in words) or not words:
            raise CorpusFormatError(f"scene line {lineno}: 'words' must be a non-empty list of strings")
        if not isinstance(objs, list) or not objs:
            raise CorpusFormatError(f"scene line {lineno}: 'objects' must be a non-empty list")
        inst_labels: list[tuple[str, str]] = []
        for entry in objs:
            if not isinstance(entry, dict) or "instance" not in entry or "label" not in entry:
                raise CorpusFormatError(
                    f"scene line {lineno}: each object entry needs 'instance' and 'label'"
                )
            inst = entry["instance"]
            label = entry["label"]
            if inst not in features_by_name:
                raise CorpusFormatError(
                    f"scene line {lineno}: no feature vector for instance ID {inst!r}"
                )
            inst_labels.append((inst, label))
            first_label.setdefault(inst, label)
        word_set = set(words)
        name_scenes.append((list(words), [i for i, _ in inst_labels]))
        alignments.append(
            sorted({(label, inst) for inst, label in inst_labels if label in word_set})
        )
    if n_lines == 0:
        raise CorpusFormatError(f"{scenes_path}: no scenes found")

    referenced = {i for _, objs in name_scenes for i in objs}
    unused = len(features_by_name) - len(referenced)
    if unused:
        logger.info("feature table has %d instances never referenced by a scene; dropped", unused)

    return _corpus_from_name_scenes(
        name_scenes,
        gold_names=None,
        categories_by_name=first_label,
        features_by_name=features_by_name,
        alignments_by_name=alignments,
    )


def _read_feature_table(path) -> tuple[dict[str, np.ndarray], int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    it = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    if not it:
        raise CorpusFormatError(f"{path}: empty feature table")
    header_no, header = it[0]
    try:
        dim = int(header)
    except ValueError:
        raise CorpusFormatError(
            f"features line {header_no}: header must be the integer dimensionality, got {header!r}"
        ) from None
    if dim < 1:
        raise CorpusFormatError(f"features line {header_no}: dimensionality must be positive")
    table: dict[str, np.ndarray] = {}
    for lineno, line in it[1:]:
        parts = line.split()
        if len(parts) != dim + 1:
            raise CorpusFormatError(
                f"features line {lineno}: expected ID + {dim} values, got {len(parts)} fields"
            )
        name = parts[0]
        if name in table:
            raise CorpusFormatError(f"features line {lineno}: duplicate instance ID {name!r}")
        try:
            table[name] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError:
            raise CorpusFormatError(f"features line {lineno}: non-numeric feature value") from None
    return table, dim


def save_visual(corpus: Corpus, scenes_path, features_path) -> None:
    """Write the instance-based format.

    Per-scene object labels are taken from the inventory's stored
    category per instance, so corpora whose instances were labeled
    inconsistently across scenes do not round-trip alignments exactly.
    """
    inv = corpus.inventory
    if inv.features is None or inv.categories is None:
        raise ValueError("save_visual needs an inventory with categories and features")
    dim = inv.features.shape[1]
    flines = [str(dim)]
    for i, name in enumerate(inv.names):
        vals = " ".join(repr(float(x)) for x in inv.features[i])
        flines.append(f"{name} {vals}")
    Path(features_path).write_text("\n".join(flines) + "\n", encoding="utf-8")

    slines = []
    for si, scene in enumerate(corpus.scenes):
        rec = {
            "image": f"scene{si:06d}",
            "caption_id": 0,
            "objects": [
                {"instance": inv.names[o], "label": inv.categories[o]} for o in scene.objects
            ],
            "words": [corpus.vocabulary.words[w] for w in scene.words],
        }
        slines.append(json.dumps(rec, sort_keys=True))
    Path(scenes_path).write_text("\n".join(slines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the symbolic scene generator.

    The first min(n_words, n_objects) word IDs are the gold labels of
    the same-numbered objects; any remaining words are non-referential
    distractors. Each scene draws its object count from a shifted
    Poisson (at least 1) and emits the gold word of each drawn object
    with probability 1 - noise. Distractor words are then added with a
    Poisson count sized so the corpus-wide mean scene word count centers
    on words_per_scene; gold words are never trimmed, so with no
    distractors (n_words == n_objects) the mean can exceed the target.
    """

    n_words: int
    n_objects: int
    n_scenes: int
    words_per_scene: float = 4.1
    objects_per_scene: float = 2.4
    noise: float = 0.0
    word_distribution: str = "zipf"
    zipf_exponent: float = 1.0

    def __post_init__(self):
        if self.n_words < 1 or self.n_objects < 1 or self.n_scenes < 1:
            raise ValueError("n_words, n_objects and n_scenes must be at least 1")
        if not 1.0 <= self.words_per_scene <= self.n_words:
            raise ValueError("words_per_scene must lie in [1, n_words]")
        if not 1.0 <= self.objects_per_scene <= self.n_objects:
            raise ValueError("objects_per_scene must lie in [1, n_objects]")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.word_distribution not in ("zipf", "uniform"):
            raise ValueError(f"unknown word_distribution {self.word_distribution!r}")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be positive")


def _rank_weights(n: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.word_distribution == "uniform":
        return np.full(n, 1.0 / n)
    ranks = rng.permutation(n)
    w = 1.0 / (ranks + 1.0) ** cfg.zipf_exponent
    return w / w.sum()


def generate_synthetic(cfg: SynthConfig, seed) -> Corpus:
    """Generate a symbolic corpus with a known gold lexicon.

    Deterministic in (cfg, seed). Words or objects that end up in no
    scene are dropped, so the returned sizes can fall short of the
    configured ones for rare items; IDs are first-appearance order as
    with the loaders.
    """
    rng = np.random.default_rng(seed)
    n_gold = min(cfg.n_words, cfg.n_objects)
    wnames = [f"w{i:03d}" for i in range(cfg.n_words)]
    onames = [f"O{i:03d}" for i in range(cfg.n_objects)]
    word_w = _rank_weights(cfg.n_words, cfg, rng)
    obj_w = _rank_weights(cfg.n_objects, cfg, rng)
    distractors = np.arange(n_gold, cfg.n_words)

    # pass 1: objects and the gold words noise lets through
    scene_objs: list[np.ndarray] = []
    scene_gold: list[list[int]] = []
    for _ in range(cfg.n_scenes):
        k = int(1 + rng.poisson(cfg.objects_per_scene - 1.0))
        k = min(max(k, 1), cfg.n_objects)
        objs = rng.choice(cfg.n_objects, size=k, replace=False, p=obj_w)
        scene_objs.append(objs)
        scene_gold.append(
            [int(o) for o in objs if o < n_gold and rng.random() >= cfg.noise]
        )

    # pass 2: distractor counts sized so that the overall mean scene word
    # count centers on words_per_scene (gold words are never trimmed)
    mean_gold = sum(len(g) for g in scene_gold) / cfg.n_scenes
    lam = max(0.0, cfg.words_per_scene - mean_gold)
    name_scenes: list[tuple[list[str], list[str]]] = []
    for objs, words in zip(scene_objs, scene_gold):
        if distractors.size:
            pool = distractors.tolist()
            d = min(int(rng.poisson(lam)), len(pool))
            if not words and d == 0:
                d = 1  # a scene needs at least one word
            for _ in range(d):
                p = word_w[pool]
                idx = int(rng.choice(len(pool), p=p / p.sum()))
                words.append(pool.pop(idx))
        if not words:
            # everything withheld by noise and no distractors available:
            # keep the scene trainable with its first object's gold word
            gold_capable = [int(o) for o in objs if o < n_gold]
            words.append(gold_capable[0] if gold_capable else 0)
        name_scenes.append(([wnames[w] for w in words], [onames[int(o)] for o in objs]))

    gold_names = [(wnames[i], onames[i]) for i in range(n_gold)]
    present = {w for ws, _ in name_scenes for w in ws}
    present_o = {o for _, os_ in name_scenes for o in os_}
    gold_names = [(w, o) for w, o in gold_names if w in present and o in present_o]
    return _corpus_from_name_scenes(name_scenes, gold_names)


@dataclass(frozen=True)
class FeatureSynthConfig:
    """Knobs for the instance-based generator used by the feature pipeline.

    Instances of a category share a Gaussian feature cluster: category
    centers are drawn N(0, center_scale^2 I) and instances scatter
    around them with within_sd. Caption words are exactly the category
    labels of the drawn instances, and alignments annotate each label
    with its instance.
    """

    n_categories: int
    instances_per_category: int
    feature_dim: int
    n_scenes: int
    objects_per_scene: float = 2.2
    within_sd: float = 0.35
    center_scale: float = 1.0
    zipf_exponent: float = 1.0

    def __post_init__(self):
        if min(self.n_categories, self.instances_per_category, self.feature_dim, self.n_scenes) < 1:
            raise ValueError("all size fields must be at least 1")
        if not 1.0 <= self.objects_per_scene <= self.n_categories:
            raise ValueError("objects_per_scene must lie in [1, n_categories]")
        if self.within_sd < 0 or self.center_scale <= 0:
            raise ValueError("within_sd must be >= 0 and center_scale > 0")


def generate_feature_corpus(cfg: FeatureSynthConfig, seed) -> Corpus:
    """Generate an instance-based corpus with clustered object features.

    Scenes draw distinct categories (Zipf-weighted) and one instance of
    each; gold entries map each category word to its category label.
    """
    rng = np.random.default_rng(seed)
    C = cfg.n_categories
    centers = rng.normal(0.0, cfg.center_scale, size=(C, cfg.feature_dim))
    feats: dict[str, np.ndarray] = {}
    labels: dict[str, str] = {}
    for c in range(C):
        for j in range(cfg.instances_per_category):
            name = f"cat{c:02d}_{j:03d}"
            feats[name] = centers[c] + rng.normal(0.0, cfg.within_sd, size=cfg.feature_dim)
            labels[name] = f"cat{c:02d}"

    ranks = rng.permutation(C)
    cat_w = 1.0 / (ranks + 1.0) ** cfg.zipf_exponent
    cat_w = cat_w / cat_w.sum()

    name_scenes: list[tuple[list[str], list[str]]] = []
    alignments: list[list[tuple[str, str]]] = []
    for _ in range(cfg.n_scenes):
        k = int(1 + rng.poisson(cfg.objects_per_scene - 1.0))
        k = min(max(k, 1), C)
        cats = rng.choice(C, size=k, replace=False, p=cat_w)
        insts = [f"cat{c:02d}_{int(rng.integers(cfg.instances_per_category)):03d}" for c in cats]
        words = [f"cat{c:02d}" for c in cats]
        name_scenes.append((words, insts))
        alignments.append(sorted(zip(words, insts)))

    present_labels = sorted({labels[i] for _, objs in name_scenes for i in objs})
    gold_names = [(lab, lab) for lab in present_labels]
    used = {i for _, objs in name_scenes for i in objs}
    return _corpus_from_name_scenes(
        name_scenes,
        gold_names=gold_names,
        categories_by_name=labels,
        features_by_name={k: v for k, v in feats.items() if k in used},
        alignments_by_name=alignments,
    )


# ---------------------------------------------------------------------------
# novelty


def inject_novel_items(
    corpus: Corpus,
    n_novel_words: int,
    n_novel_objects: int,
    word_prefix: str = "dax",
    object_prefix: str = "DAX",
) -> Corpus:
    """Append frequency-0 words and objects for comprehension tests.

    Training scenes are untouched, so the new items are novel by
    construction. Feature-bearing inventories refuse novel objects
    (there is nothing principled to put in their feature rows); use
    holdout_category on those corpora instead.
    """
    if n_novel_words < 0 or n_novel_objects < 0:
        raise ValueError("novel item counts must be non-negative")
    if n_novel_words == 0 and n_novel_objects == 0:
        return corpus
    if corpus.inventory.features is not None and n_novel_objects > 0:
        raise ValueError(
            "cannot inject novel objects into a feature-bearing inventory; use holdout_category"
        )
    new_words = tuple(f"{word_prefix}{i + 1}" for i in range(n_novel_words))
    new_objs = tuple(f"{object_prefix}{i + 1}" for i in range(n_novel_objects))
    for w in new_words:
        if w in corpus.vocabulary:
            raise ValueError(f"novel word name {w!r} collides with an existing word")
    for o in new_objs:
        if o in corpus.inventory:
            raise ValueError(f"novel object name {o!r} collides with an existing object")
    vocab = Vocabulary(
        corpus.vocabulary.words + new_words,
        corpus.vocabulary.frequency + (0,) * n_novel_words,
    )
    categories = corpus.inventory.categories
    if categories is not None:
        categories = categories + new_objs
    inventory = ObjectInventory(
        corpus.inventory.names + new_objs,
        corpus.inventory.frequency + (0,) * n_novel_objects,
        categories,
        corpus.inventory.features,
    )
    return Corpus(corpus.scenes, vocab, inventory, corpus.gold, corpus.alignments)


def holdout_category(
    corpus: Corpus,
    words: set[str],
    labels: set[str],
    keep_ambiguous: bool = False,
) -> tuple[Corpus, list[Scene]]:
    """Remove a category from training; return (train corpus, eval scenes).

    words are word forms to strip from every scene; labels are category
    labels whose instances are stripped. Scenes left without words or
    without objects are dropped from training. Held items stay in the
    vocabulary/inventory and, now at frequency 0, are novel.

    Eval scenes are the original scenes that contain at least one held
    instance and at least two objects; scenes with two or more held
    instances are ambiguous prompts and are skipped unless
    keep_ambiguous.
    """
    held_wids = {corpus.vocabulary.id_of(w) for w in words if w in corpus.vocabulary}
    missing = sorted(w for w in words if w not in corpus.vocabulary)
    if missing:
        logger.info("holdout: %d word forms not in the vocabulary: %s", len(missing), missing)
    held_oids: set[int] = set()
    for lab in sorted(labels):
        held_oids.update(corpus.inventory.ids_of_category(lab))
    if not held_oids:
        raise ValueError(f"no instances carry any of the held-out labels {sorted(labels)}")

    train_scenes: list[Scene] = []
    train_aligns: list[tuple[tuple[int, int], ...]] = []
    dropped = 0
    for si, scene in enumerate(corpus.scenes):
        wkeep = tuple(w for w in scene.words if w not in held_wids)
        okeep = tuple(o for o in scene.objects if o not in held_oids)
        if not wkeep or not okeep:
            dropped += 1
            continue
        train_scenes.append(Scene(wkeep, okeep))
        if corpus.alignments is not None:
            train_aligns.append(
                tuple(
                    (w, o)
                    for w, o in corpus.alignments[si]
                    if w not in held_wids and o not in held_oids
                )
            )
    if dropped:
        logger.info("holdout: dropped %d scenes emptied by the holdout", dropped)
    if not train_scenes:
        raise ValueError("holdout removed every training scene")

    wfreq = [0] * corpus.vocabulary.size
    ofreq = [0] * corpus.inventory.size
    for s in train_scenes:
        for w in s.words:
            wfreq[w] += 1
        for o in s.objects:
            ofreq[o] += 1
    train = Corpus(
        tuple(train_scenes),
        Vocabulary(corpus.vocabulary.words, tuple(wfreq)),
        ObjectInventory(
            corpus.inventory.names,
            tuple(ofreq),
            corpus.inventory.categories,
            corpus.inventory.features,
        ),
        corpus.gold,
        tuple(train_aligns) if corpus.alignments is not None else None,
    )

    eval_scenes: list[Scene] = []
    ambiguous = 0
    for scene in corpus.scenes:
        held_here = [o for o in scene.objects if o in held_oids]
        if not held_here or len(scene.objects) < 2:
            continue
        if len(held_here) > 1 and not keep_ambiguous:
            ambiguous += 1
            continue
        eval_scenes.append(scene)
    if ambiguous:
        logger.info("holdout: skipped %d eval scenes with multiple held instances", ambiguous)
    return train, eval_scenes
