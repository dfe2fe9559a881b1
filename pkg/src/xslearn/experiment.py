"""The experiment pipeline: config files, sweeps, result files.

A config is an INI-style file (flat key = value under bracketed
sections); see parse_config for every key and default. A sweep trains
every configured loss for the configured number of runs, evaluates both
selection strategies on comprehension trials, and writes:

  results.csv     condition,loss,strategy,seed,metric,value (one metric per row)
  aggregates.csv  condition,metric,mean,sd,n
  manifest.json   config echo + hash, run-index -> seed map, failures

Run seeds are base_seed + run index, identical across losses, so any
single condition can be re-run in isolation and reproduce its rows
byte for byte. Rows are fully sorted and floats written via repr, so
repeated runs of the same config produce identical bytes regardless of
worker scheduling.
"""

from __future__ import annotations

import configparser
import csv
import functools
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    Corpus,
    FeatureSynthConfig,
    SynthConfig,
    generate_feature_corpus,
    generate_synthetic,
    inject_novel_items,
    holdout_category,
    load_symbolic,
    load_visual,
)
from .evaluation import (
    METRIC_BEST_F,
    METRIC_CHANCE,
    METRIC_FAMILIAR,
    METRIC_NOVEL,
    METRIC_TIE,
    Aggregate,
    RunResult,
    TestScene,
    best_f,
    build_familiar_test_scenes,
    build_holdout_test_scenes,
    build_novel_test_scenes,
    score_scenes,
)
from .model import init_model
from .selection import NORMALIZATIONS, STRATEGIES
from .training import LOSS_KINDS, TrainConfig, train

logger = logging.getLogger(__name__)

CORPUS_KINDS = ("symbolic", "synthetic", "visual", "synthetic_visual")
# similarity matrices bigger than this skip the lexicon-F1 sweep under "auto"
BEST_F_AUTO_LIMIT = 2_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "synthetic"
    path: str = ""
    scenes_path: str = ""
    features_path: str = ""
    corpus_seed: int = 7
    n_words: int = 36
    n_objects: int = 22
    n_scenes: int = 620
    words_per_scene: float = 4.1
    objects_per_scene: float = 2.4
    noise: float = 0.0
    word_distribution: str = "zipf"
    zipf_exponent: float = 1.0
    n_categories: int = 25
    instances_per_category: int = 40
    feature_dim: int = 64
    within_sd: float = 0.35
    center_scale: float = 1.0
    novel_words: int = 5
    novel_objects: int = 5
    scenes_per_word: int = 20
    familiar_per_scene: int = 2
    holdout_words: tuple[str, ...] = ()
    holdout_labels: tuple[str, ...] = ()
    holdout_per_word: bool = False
    losses: tuple[str, ...] = LOSS_KINDS
    lr: float = 0.1
    dim: int = 200
    init_range: float = 0.1
    k_negatives: int = 5
    max_epochs: int = 20
    margin: float = 1.0
    weighted: bool | None = None
    exclude_scene: bool = False
    backend: str = "auto"
    encoder: str = "auto"
    strategies: tuple[str, ...] = STRATEGIES
    normalization: str = "shift"
    compute_best_f: str = "auto"
    familiar_eval: bool = True
    runs: int = 25
    base_seed: int = 1000
    workers: int = 1

    def flat_dict(self) -> dict:
        d = {}
        for section, keys in _SCHEMA.items():
            for key, (field, _, _) in keys.items():
                v = getattr(self, field)
                d[f"{section}.{key}"] = list(v) if isinstance(v, tuple) else v
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.flat_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# section -> key -> (field name, parser, help)
def _split(s: str) -> tuple[str, ...]:
    # list values accept spaces, commas, or both
    return tuple(t for t in s.replace(",", " ").split() if t)


def _tribool(s: str) -> bool | None:
    s = s.strip().lower()
    if s == "auto":
        return None
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected auto/true/false, got {s!r}")


def _bool(s: str) -> bool:
    v = _tribool(s)
    if v is None:
        raise ValueError("expected true or false")
    return v


_SCHEMA: dict[str, dict[str, tuple]] = {
    "corpus": {
        "kind": ("kind", str, "symbolic | synthetic | visual | synthetic_visual"),
        "path": ("path", str, "symbolic scene file"),
        "scenes": ("scenes_path", str, "visual scene JSONL"),
        "features": ("features_path", str, "visual feature table"),
        "seed": ("corpus_seed", int, "generator seed"),
        "n_words": ("n_words", int, ""),
        "n_objects": ("n_objects", int, ""),
        "n_scenes": ("n_scenes", int, ""),
        "words_per_scene": ("words_per_scene", float, ""),
        "objects_per_scene": ("objects_per_scene", float, ""),
        "noise": ("noise", float, "chance a gold word is withheld"),
        "word_distribution": ("word_distribution", str, "zipf | uniform"),
        "zipf_exponent": ("zipf_exponent", float, ""),
        "n_categories": ("n_categories", int, "synthetic_visual"),
        "instances_per_category": ("instances_per_category", int, "synthetic_visual"),
        "feature_dim": ("feature_dim", int, "synthetic_visual"),
        "within_sd": ("within_sd", float, "synthetic_visual"),
        "center_scale": ("center_scale", float, "synthetic_visual"),
    },
    "novel": {
        "n_words": ("novel_words", int, ""),
        "n_objects": ("novel_objects", int, ""),
        "scenes_per_word": ("scenes_per_word", int, ""),
        "familiar_per_scene": ("familiar_per_scene", int, ""),
    },
    "holdout": {
        "words": ("holdout_words", _split, "word forms stripped from training"),
        "labels": ("holdout_labels", _split, "category labels stripped from training"),
        "per_word": ("holdout_per_word", _bool, ""),
    },
    "train": {
        "losses": ("losses", _split, "subset of objects words joint"),
        "lr": ("lr", float, ""),
        "dim": ("dim", int, ""),
        "init_range": ("init_range", float, ""),
        "k_negatives": ("k_negatives", int, ""),
        "max_epochs": ("max_epochs", int, ""),
        "margin": ("margin", float, ""),
        "weighted": ("weighted", _tribool, "auto: on for symbolic, off with features"),
        "exclude_scene": ("exclude_scene", _bool, ""),
        "backend": ("backend", str, "auto | compiled | python"),
        "encoder": ("encoder", str, "auto | table | projection | frozen"),
    },
    "eval": {
        "strategies": ("strategies", _split, "subset of similarity bayes"),
        "normalization": ("normalization", str, "shift | softmax"),
        "compute_best_f": ("compute_best_f", str, "auto | true | false"),
        "familiar": ("familiar_eval", _bool, ""),
    },
    "run": {
        "runs": ("runs", int, ""),
        "base_seed": ("base_seed", int, ""),
        "workers": ("workers", int, ""),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the INI config grammar; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ValueError(f"bad config: {e}") from None
    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            field, parse, _ = _SCHEMA[section][key]
            try:
                values[field] = parse(raw)
            except ValueError as e:
                raise ValueError(f"bad value for {section}.{key}: {e}") from None
    cfg = ExperimentConfig(**values)
    _validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _validate_config(cfg: ExperimentConfig) -> None:
    if cfg.kind not in CORPUS_KINDS:
        raise ValueError(f"corpus.kind must be one of {CORPUS_KINDS}, got {cfg.kind!r}")
    if cfg.kind == "symbolic" and not cfg.path:
        raise ValueError("corpus.kind = symbolic needs corpus.path")
    if cfg.kind == "visual" and not (cfg.scenes_path and cfg.features_path):
        raise ValueError("corpus.kind = visual needs corpus.scenes and corpus.features")
    if not cfg.losses or any(l not in LOSS_KINDS for l in cfg.losses):
        raise ValueError(f"train.losses must be a non-empty subset of {LOSS_KINDS}")
    if not cfg.strategies or any(s not in STRATEGIES for s in cfg.strategies):
        raise ValueError(f"eval.strategies must be a non-empty subset of {STRATEGIES}")
    if cfg.normalization not in NORMALIZATIONS:
        raise ValueError(f"eval.normalization must be one of {NORMALIZATIONS}")
    if cfg.compute_best_f not in ("auto", "true", "false"):
        raise ValueError("eval.compute_best_f must be auto, true or false")
    if cfg.runs < 1:
        raise ValueError("run.runs must be at least 1")
    if cfg.workers < 1:
        raise ValueError("run.workers must be at least 1")
    if cfg.kind in ("visual", "synthetic_visual") and not cfg.holdout_labels:
        raise ValueError(f"corpus.kind = {cfg.kind} needs [holdout] labels")


# ---------------------------------------------------------------------------
# task assembly


@dataclass(frozen=True)
class TaskData:
    """Everything shared by the runs of one sweep."""

    train: Corpus
    fixed_novel: tuple[TestScene, ...] | None  # None: built per run (symbolic)
    familiar: tuple[TestScene, ...] | None
    best_f_on: bool


def _load_base_corpus(cfg: ExperimentConfig) -> Corpus:
    if cfg.kind == "symbolic":
        return load_symbolic(cfg.path)
    if cfg.kind == "visual":
        return load_visual(cfg.scenes_path, cfg.features_path)
    if cfg.kind == "synthetic":
        return generate_synthetic(synth_config(cfg), cfg.corpus_seed)
    return generate_feature_corpus(feature_synth_config(cfg), cfg.corpus_seed)


def synth_config(cfg: ExperimentConfig) -> SynthConfig:
    return SynthConfig(
        n_words=cfg.n_words,
        n_objects=cfg.n_objects,
        n_scenes=cfg.n_scenes,
        words_per_scene=cfg.words_per_scene,
        objects_per_scene=cfg.objects_per_scene,
        noise=cfg.noise,
        word_distribution=cfg.word_distribution,
        zipf_exponent=cfg.zipf_exponent,
    )


def feature_synth_config(cfg: ExperimentConfig) -> FeatureSynthConfig:
    return FeatureSynthConfig(
        n_categories=cfg.n_categories,
        instances_per_category=cfg.instances_per_category,
        feature_dim=cfg.feature_dim,
        n_scenes=cfg.n_scenes,
        objects_per_scene=cfg.objects_per_scene,
        within_sd=cfg.within_sd,
        center_scale=cfg.center_scale,
        zipf_exponent=cfg.zipf_exponent,
    )


@functools.lru_cache(maxsize=4)
def build_task(cfg: ExperimentConfig) -> TaskData:
    """Corpus plus the evaluation trials that do not vary per run."""
    base = _load_base_corpus(cfg)
    if cfg.kind in ("symbolic", "synthetic"):
        train_corpus = inject_novel_items(base, cfg.novel_words, cfg.novel_objects)
        fixed_novel = None
    else:
        words = set(cfg.holdout_words)
        labels = set(cfg.holdout_labels)
        train_corpus, eval_scenes = holdout_category(base, words, labels)
        prompt_words = words if words else labels  # labels double as word forms
        fixed_novel = tuple(
            build_holdout_test_scenes(base, eval_scenes, prompt_words, labels, cfg.holdout_per_word)
        )
        if not fixed_novel:
            raise ValueError("the holdout produced no evaluation scenes")

    familiar = None
    if cfg.familiar_eval and (train_corpus.alignments is not None or train_corpus.gold is not None):
        familiar = tuple(build_familiar_test_scenes(train_corpus))
        if not familiar:
            familiar = None

    if cfg.compute_best_f == "true":
        if train_corpus.gold is None:
            raise ValueError("compute_best_f = true needs a corpus with gold entries")
        best_f_on = True
    elif cfg.compute_best_f == "false":
        best_f_on = False
    else:
        size = train_corpus.vocabulary.size * train_corpus.inventory.size
        best_f_on = train_corpus.gold is not None and size <= BEST_F_AUTO_LIMIT
    return TaskData(train_corpus, fixed_novel, familiar, best_f_on)


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunInfo:
    loss: str
    run_index: int
    seed: int
    best_epoch: int
    snapshot_loss: float
    best_f: float | None


@dataclass(frozen=True)
class Failure:
    loss: str
    run_index: int
    seed: int
    error: str


@dataclass(frozen=True)
class SweepResult:
    results: tuple[RunResult, ...]
    infos: tuple[RunInfo, ...]
    failures: tuple[Failure, ...]


def child_seed(seed: int, stream: int) -> int:
    """Derive an independent integer seed for one of a run's RNG streams."""
    state = np.random.SeedSequence((seed, stream)).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def train_config_for(cfg: ExperimentConfig, loss: str, train_seed: int) -> TrainConfig:
    return TrainConfig(
        loss=loss,
        lr=cfg.lr,
        k_negatives=cfg.k_negatives,
        max_epochs=cfg.max_epochs,
        margin=cfg.margin,
        weighted=cfg.weighted,
        exclude_scene=cfg.exclude_scene,
        backend=cfg.backend,
        seed=train_seed,
    )


def run_single(cfg: ExperimentConfig, loss: str, run_index: int) -> tuple[list[RunResult], RunInfo]:
    """Train and evaluate one (loss, run index) cell of the sweep."""
    task = build_task(cfg)
    seed = cfg.base_seed + run_index
    model0 = init_model(
        task.train, dim=cfg.dim, init_range=cfg.init_range, seed=child_seed(seed, 0),
        encoder=cfg.encoder,
    )
    result = train(model0, task.train, train_config_for(cfg, loss, child_seed(seed, 1)))
    snapshot = result.model

    if task.fixed_novel is not None:
        novel_scenes = list(task.fixed_novel)
    else:
        novel_scenes = build_novel_test_scenes(
            task.train,
            n_novel_words=cfg.novel_words,
            scenes_per_word=cfg.scenes_per_word,
            familiar_per_scene=cfg.familiar_per_scene,
            seed=child_seed(seed, 2),
        )
    bf = best_f(snapshot, task.train) if task.best_f_on else None

    results = []
    for strategy in cfg.strategies:
        summary = score_scenes(snapshot, novel_scenes, strategy, cfg.normalization)
        fam = None
        if task.familiar is not None:
            fam = score_scenes(snapshot, list(task.familiar), strategy, cfg.normalization).accuracy
        results.append(
            RunResult(
                condition=f"{loss}-{strategy}",
                loss=loss,
                strategy=strategy,
                seed=seed,
                accuracy=summary.accuracy,
                tie_rate=summary.tie_rate,
                chance=summary.chance,
                best_f=bf,
                familiar_accuracy=fam,
            )
        )
    info = RunInfo(loss, run_index, seed, result.best_epoch,
                   result.trajectory[result.best_epoch], bf)
    return results, info


def _run_task(args: tuple[ExperimentConfig, str, int]):
    cfg, loss, run_index = args
    try:
        return args, run_single(cfg, loss, run_index), None
    except Exception as e:  # recorded, not fatal to the sweep
        return args, None, f"{type(e).__name__}: {e}"


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """All losses x all run indices; failures are recorded, not raised."""
    tasks = [(cfg, loss, idx) for loss in cfg.losses for idx in range(cfg.runs)]
    outputs = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]

    results: list[RunResult] = []
    infos: list[RunInfo] = []
    failures: list[Failure] = []
    for (c, loss, idx), payload, err in outputs:
        if err is not None:
            failures.append(Failure(loss, idx, c.base_seed + idx, err))
            logger.error("run failed (loss=%s, run=%d): %s", loss, idx, err)
            continue
        run_results, info = payload
        results.extend(run_results)
        infos.append(info)
    results.sort(key=lambda r: (r.condition, r.seed))
    infos.sort(key=lambda i: (i.loss, i.run_index))
    failures.sort(key=lambda f: (f.loss, f.run_index))
    return SweepResult(tuple(results), tuple(infos), tuple(failures))


# ---------------------------------------------------------------------------
# result files

Row = tuple[str, str, str, int, str, float]


def result_rows(sweep: SweepResult) -> list[Row]:
    """Explode a sweep into metric rows; loss-level metrics use strategy '-'."""
    rows: list[Row] = []
    for r in sweep.results:
        rows.append((r.condition, r.loss, r.strategy, r.seed, METRIC_NOVEL, r.accuracy))
        rows.append((r.condition, r.loss, r.strategy, r.seed, METRIC_TIE, r.tie_rate))
        if r.chance is not None:
            rows.append((r.condition, r.loss, r.strategy, r.seed, METRIC_CHANCE, r.chance))
        if r.familiar_accuracy is not None:
            rows.append((r.condition, r.loss, r.strategy, r.seed, METRIC_FAMILIAR, r.familiar_accuracy))
    for i in sweep.infos:
        rows.append((i.loss, i.loss, "-", i.seed, "snapshot_loss", i.snapshot_loss))
        rows.append((i.loss, i.loss, "-", i.seed, "snapshot_epoch", float(i.best_epoch)))
        if i.best_f is not None:
            rows.append((i.loss, i.loss, "-", i.seed, METRIC_BEST_F, i.best_f))
    rows.sort(key=lambda r: (r[0], r[2], r[4], r[3]))
    return rows


def aggregate_rows(rows: list[Row]) -> list[Aggregate]:
    """Mean / sample SD / n over (condition, metric) groups of rows."""
    groups: dict[tuple[str, str], list[float]] = {}
    for condition, _, _, _, metric, value in rows:
        groups.setdefault((condition, metric), []).append(float(value))
    out = []
    for (condition, metric), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out.append(Aggregate(condition, metric, float(arr.mean()), sd, int(arr.size)))
    return out


def write_results_csv(rows: list[Row], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "loss", "strategy", "seed", "metric", "value"])
    for condition, loss, strategy, seed, metric, value in rows:
        w.writerow([condition, loss, strategy, seed, metric, repr(float(value))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_aggregates_csv(aggregates: list[Aggregate], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "metric", "mean", "sd", "n"])
    for a in aggregates:
        w.writerow([a.condition, a.metric, repr(a.mean), repr(a.sd), a.n])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_manifest(cfg: ExperimentConfig, sweep: SweepResult, path) -> None:
    doc = {
        "config": cfg.flat_dict(),
        "config_hash": config_hash(cfg),
        "runs": [
            {
                "loss": i.loss,
                "run_index": i.run_index,
                "seed": i.seed,
                "best_epoch": i.best_epoch,
                "snapshot_loss": i.snapshot_loss,
            }
            for i in sweep.infos
        ],
        "failures": [
            {"loss": f.loss, "run_index": f.run_index, "seed": f.seed, "error": f.error}
            for f in sweep.failures
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_sweep_outputs(cfg: ExperimentConfig, sweep: SweepResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result_rows(sweep)
    write_results_csv(rows, out / "results.csv")
    write_aggregates_csv(aggregate_rows(rows), out / "aggregates.csv")
    write_manifest(cfg, sweep, out / "manifest.json")


# ---------------------------------------------------------------------------
# report


def read_results_csv(path) -> list[Row]:
    rows: list[Row] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["condition", "loss", "strategy", "seed", "metric", "value"]:
            raise ValueError(f"{path}: not a results file (bad header {header})")
        for rec in reader:
            if len(rec) != 6:
                raise ValueError(f"{path}: malformed row {rec}")
            rows.append((rec[0], rec[1], rec[2], int(rec[3]), rec[4], float(rec[5])))
    return rows


def read_aggregates_csv(path) -> list[Aggregate]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["condition", "metric", "mean", "sd", "n"]:
            raise ValueError(f"{path}: not an aggregates file (bad header {header})")
        for rec in reader:
            out.append(Aggregate(rec[0], rec[1], float(rec[2]), float(rec[3]), int(rec[4])))
    return out


def render_report(results_dir) -> tuple[str, list[tuple[str, str, float, float, float | None]]]:
    """Recompute aggregates from rows, verify the stored file, render a table.

    Returns (table text, plot rows); plot rows carry the chance baseline
    for accuracy metrics. A stored aggregate that differs from the
    recomputation beyond 1e-12 is an error.
    """
    results_dir = Path(results_dir)
    rows = read_results_csv(results_dir / "results.csv")
    stored = {(a.condition, a.metric): a for a in read_aggregates_csv(results_dir / "aggregates.csv")}
    fresh = aggregate_rows(rows)
    if set(stored) != {(a.condition, a.metric) for a in fresh}:
        raise ValueError("aggregates.csv does not cover the same groups as results.csv")
    for a in fresh:
        s = stored[(a.condition, a.metric)]
        if abs(s.mean - a.mean) > 1e-12 or abs(s.sd - a.sd) > 1e-12 or s.n != a.n:
            raise ValueError(
                f"stored aggregate for ({a.condition}, {a.metric}) does not match the rows: "
                f"mean {s.mean!r} vs {a.mean!r}, sd {s.sd!r} vs {a.sd!r}, n {s.n} vs {a.n}"
            )

    chance_by_condition = {a.condition: a.mean for a in fresh if a.metric == METRIC_CHANCE}
    accuracy_metrics = (METRIC_NOVEL, METRIC_FAMILIAR, METRIC_BEST_F)
    plot: list[tuple[str, str, float, float, float | None]] = []
    lines = [f"{'condition':<20} {'metric':<18} {'mean':>9} {'sd':>9} {'n':>4} {'chance':>9}"]
    for a in fresh:
        if a.metric == METRIC_CHANCE:
            continue
        baseline = chance_by_condition.get(a.condition) if a.metric in accuracy_metrics else None
        base_txt = f"{baseline:9.3f}" if baseline is not None else f"{'-':>9}"
        lines.append(
            f"{a.condition:<20} {a.metric:<18} {a.mean:9.3f} {a.sd:9.3f} {a.n:4d} {base_txt}"
        )
        if a.metric in accuracy_metrics:
            plot.append((a.condition, a.metric, a.mean, a.sd, baseline))
    return "\n".join(lines), plot


def write_plot_data(plot_rows, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "metric", "mean", "sd", "baseline"])
    for condition, metric, mean, sd, baseline in plot_rows:
        w.writerow([condition, metric, repr(mean), repr(sd), "" if baseline is None else repr(baseline)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
