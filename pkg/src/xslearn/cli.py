"""Command line front end.

    xslearn synth  --config c.ini --out corpus.txt [--seed N]
    xslearn train  --config c.ini --out dir [--loss L] [--seed N] [--search N]
    xslearn eval   --config c.ini --model m.xsm [--strategy S] [--out rows.csv]
    xslearn run    --config c.ini --out dir [--runs N] [--workers N]
                   [--seed N] [--loss L] [--strategy S]
    xslearn report --out dir

Exit codes: 0 success, 1 usage error, 2 bad data or config
(unreadable files, malformed corpora, invalid values), 3 training or
run failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .backend import backend_name, get_backend
from .corpus import CorpusFormatError, generate_feature_corpus, generate_synthetic, save_symbolic, save_visual
from .evaluation import (
    METRIC_CHANCE,
    METRIC_FAMILIAR,
    METRIC_NOVEL,
    METRIC_TIE,
    build_novel_test_scenes,
    score_scenes,
)
from .experiment import (
    ExperimentConfig,
    build_task,
    child_seed,
    config_hash,
    feature_synth_config,
    load_config,
    render_report,
    run_sweep,
    synth_config,
    train_config_for,
    write_plot_data,
    write_results_csv,
    write_sweep_outputs,
)
from .model import init_model, load_model, save_model
from .selection import STRATEGIES
from .training import (
    LOSS_KINDS,
    TrainingError,
    random_search,
    train,
    write_sweep_log,
    write_trial_log,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map codes ourselves
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xslearn", description="cross-situational word learning experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="generate a corpus and write it to disk")
    sp.add_argument("--config", required=True, help="experiment config (INI)")
    sp.add_argument("--out", required=True, help="corpus file (or directory for feature corpora)")
    sp.add_argument("--seed", type=int, default=None, help="override corpus.seed")

    tp = sub.add_parser("train", help="train one model and save it")
    tp.add_argument("--config", required=True)
    tp.add_argument("--out", required=True, help="output directory")
    tp.add_argument("--loss", choices=LOSS_KINDS, default=None, help="default: first configured loss")
    tp.add_argument("--seed", type=int, default=None, help="override run.base_seed")
    tp.add_argument("--search", type=int, default=0, metavar="N",
                    help="random search over N hyperparameter draws instead of one run")

    ep = sub.add_parser("eval", help="evaluate a saved model on comprehension trials")
    ep.add_argument("--config", required=True)
    ep.add_argument("--model", required=True)
    ep.add_argument("--strategy", choices=STRATEGIES + ("both",), default="both")
    ep.add_argument("--seed", type=int, default=None, help="override run.base_seed")
    ep.add_argument("--out", default=None, help="also write metric rows as CSV")

    rp = sub.add_parser("run", help="full sweep: train + evaluate every loss for N runs")
    rp.add_argument("--config", required=True)
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--runs", type=int, default=None)
    rp.add_argument("--workers", type=int, default=None)
    rp.add_argument("--seed", type=int, default=None, help="override run.base_seed")
    rp.add_argument("--loss", choices=LOSS_KINDS, default=None, help="restrict to one loss")
    rp.add_argument("--strategy", choices=STRATEGIES + ("both",), default=None)

    op = sub.add_parser("report", help="verify and pretty-print a sweep directory")
    op.add_argument("--out", required=True, help="directory written by `xslearn run`")
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if getattr(args, "loss", None) is not None:
        changes["losses"] = (args.loss,)
    strategy = getattr(args, "strategy", None)
    if strategy is not None and strategy != "both":
        changes["strategies"] = (strategy,)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_synth(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    seed = cfg.corpus_seed if args.seed is None else args.seed
    if cfg.kind == "synthetic":
        corpus = generate_synthetic(synth_config(cfg), seed)
        save_symbolic(corpus, args.out)
        print(f"wrote {args.out}")
    elif cfg.kind == "synthetic_visual":
        corpus = generate_feature_corpus(feature_synth_config(cfg), seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_visual(corpus, out / "scenes.jsonl", out / "features.txt")
        print(f"wrote {out / 'scenes.jsonl'} and {out / 'features.txt'}")
    else:
        raise ValueError(f"synth needs corpus.kind = synthetic or synthetic_visual, got {cfg.kind!r}")
    s = corpus.stats()
    print(
        f"{s.n_scenes} scenes, {s.n_words} words, {s.n_objects} objects, "
        f"{s.mean_words_per_scene:.2f} words/scene, {s.mean_objects_per_scene:.2f} objects/scene"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    loss = args.loss or cfg.losses[0]
    task = build_task(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.base_seed

    if args.search > 0:
        base = train_config_for(cfg, loss, 0)
        result, trials = random_search(task.train, budget=args.search, seed=seed,
                                       base_config=base, encoder=cfg.encoder)
        write_sweep_log(trials, out / "sweep_log.csv")
        best = min(trials, key=lambda t: (t.snapshot_loss, t.index))
        print(f"searched {len(trials)} draws; best lr={best.lr:.4g} "
              f"init_range={best.init_range:.4g} dim={best.dim}")
    else:
        model0 = init_model(task.train, dim=cfg.dim, init_range=cfg.init_range,
                            seed=child_seed(seed, 0), encoder=cfg.encoder)
        result = train(model0, task.train, train_config_for(cfg, loss, child_seed(seed, 1)))

    save_model(result.model, out / "model.xsm")
    write_trial_log(result, out / "trial_log.csv")
    backend = backend_name(get_backend(cfg.backend))
    print(
        f"loss={loss} backend={backend} epochs={len(result.trajectory)} "
        f"snapshot_epoch={result.best_epoch} "
        f"snapshot_loss={result.trajectory[result.best_epoch]:.6f}"
    )
    print(f"wrote {out / 'model.xsm'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    strategies = STRATEGIES if args.strategy == "both" else (args.strategy,)
    task = build_task(cfg)
    model = load_model(args.model, features=task.train.inventory.features)
    seed = cfg.base_seed

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

    rows = []
    for strategy in strategies:
        summary = score_scenes(model, novel_scenes, strategy, cfg.normalization)
        rows.append((strategy, "-", strategy, seed, METRIC_NOVEL, summary.accuracy))
        rows.append((strategy, "-", strategy, seed, METRIC_TIE, summary.tie_rate))
        rows.append((strategy, "-", strategy, seed, METRIC_CHANCE, summary.chance))
        if task.familiar is not None:
            fam = score_scenes(model, list(task.familiar), strategy, cfg.normalization)
            rows.append((strategy, "-", strategy, seed, METRIC_FAMILIAR, fam.accuracy))
    for condition, _, _, _, metric, value in rows:
        print(f"{condition:<12} {metric:<18} {value:.4f}")
    if args.out:
        write_results_csv(rows, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    logger.info("sweep %s: %d losses x %d runs", config_hash(cfg), len(cfg.losses), cfg.runs)
    sweep = run_sweep(cfg)
    write_sweep_outputs(cfg, sweep, args.out)
    table, _ = render_report(args.out)
    print(table)
    print(f"wrote {Path(args.out) / 'results.csv'}")
    if sweep.failures:
        for f in sweep.failures:
            print(f"FAILED loss={f.loss} run={f.run_index} seed={f.seed}: {f.error}",
                  file=sys.stderr)
        return 3
    return 0


def cmd_report(args) -> int:
    table, plot_rows = render_report(args.out)
    print(table)
    write_plot_data(plot_rows, Path(args.out) / "plot_data.csv")
    print(f"wrote {Path(args.out) / 'plot_data.csv'}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return 3
    except (CorpusFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
