"""Cross-situational word learning with max-margin embedding models.

The package trains word and object embeddings from co-occurrence scenes
(each scene pairs a set of words with a set of objects), snapshots the
model at its first training-loss minimum, and evaluates referent
selection for novel and familiar words by raw similarity or by a
Bayesian speaker score. See the README for the file formats and the
command line.
"""

from .backend import compiled_available, get_backend
from .corpus import (
    Corpus,
    CorpusFormatError,
    CorpusStats,
    FeatureSynthConfig,
    GoldLexicon,
    ObjectInventory,
    Scene,
    SynthConfig,
    Vocabulary,
    generate_feature_corpus,
    generate_synthetic,
    holdout_category,
    inject_novel_items,
    load_symbolic,
    load_visual,
    pair_arrays,
    pair_expand,
    save_symbolic,
    save_visual,
    token_weights,
)
from .evaluation import (
    Aggregate,
    RunResult,
    ScoreSummary,
    TestScene,
    aggregate_runs,
    best_f,
    build_familiar_test_scenes,
    build_holdout_test_scenes,
    build_novel_test_scenes,
    familiar_accuracy,
    novel_accuracy,
    score_scenes,
)
from .experiment import (
    ExperimentConfig,
    SweepResult,
    build_task,
    config_hash,
    load_config,
    parse_config,
    run_single,
    run_sweep,
    write_sweep_outputs,
)
from .model import Model, ObjectEncoder, WordEmbeddings, init_model, load_model, save_model
from .numerics import VECTOR_DIM, cosine, cosine_grad, sgd_step
from .selection import (
    SelectionOutcome,
    bayes_oracle,
    select_by_bayes,
    select_by_similarity,
    speaker_prob,
)
from .training import (
    SearchSpace,
    TrainConfig,
    TrainingError,
    TrainResult,
    loss_joint,
    loss_over_objects,
    loss_over_words,
    pair_gradients,
    random_search,
    sample_negatives,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregate",
    "Corpus",
    "CorpusFormatError",
    "CorpusStats",
    "ExperimentConfig",
    "FeatureSynthConfig",
    "GoldLexicon",
    "Model",
    "ObjectEncoder",
    "ObjectInventory",
    "RunResult",
    "Scene",
    "ScoreSummary",
    "SearchSpace",
    "SelectionOutcome",
    "SweepResult",
    "SynthConfig",
    "TestScene",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "VECTOR_DIM",
    "Vocabulary",
    "WordEmbeddings",
    "__version__",
    "aggregate_runs",
    "bayes_oracle",
    "best_f",
    "build_familiar_test_scenes",
    "build_holdout_test_scenes",
    "build_novel_test_scenes",
    "build_task",
    "compiled_available",
    "config_hash",
    "cosine",
    "cosine_grad",
    "familiar_accuracy",
    "generate_feature_corpus",
    "generate_synthetic",
    "get_backend",
    "holdout_category",
    "init_model",
    "inject_novel_items",
    "load_config",
    "load_model",
    "load_symbolic",
    "load_visual",
    "loss_joint",
    "loss_over_objects",
    "loss_over_words",
    "novel_accuracy",
    "pair_arrays",
    "pair_expand",
    "pair_gradients",
    "parse_config",
    "random_search",
    "run_single",
    "run_sweep",
    "sample_negatives",
    "save_model",
    "save_symbolic",
    "save_visual",
    "score_scenes",
    "select_by_bayes",
    "select_by_similarity",
    "sgd_step",
    "speaker_prob",
    "token_weights",
    "train",
    "write_sweep_outputs",
]
