"""Time the compiled epoch kernels against the pure-numpy fallback.

Both backends mutate their tables in place, so every timed call gets a
fresh copy of the same random inputs. Reported numbers are the best of
--repeats wall-clock runs, in microseconds per training pair.

  python3 benchmarks/bench_backends.py
  python3 benchmarks/bench_backends.py --pairs 20000 --dim 200 --mode both
"""

import argparse
import time

import numpy as np

from xslearn import backend


def build_inputs(args, rng):
    words = rng.normal(size=(args.words, args.dim))
    objects = rng.normal(size=(args.objects, args.dim))
    feats = rng.normal(size=(args.objects, args.feature_dim))
    proj = rng.normal(size=(args.dim, args.feature_dim))
    pair_words = rng.integers(0, args.words, size=args.pairs).astype(np.int64)
    pair_objects = rng.integers(0, args.objects, size=args.pairs).astype(np.int64)

    def negs(n_pop, exclude):
        r = rng.integers(0, n_pop - 1, size=(args.pairs, args.k))
        return (r + (r >= exclude[:, None])).astype(np.int64)

    return {
        "words": words,
        "objects": objects,
        "feats": feats,
        "proj": proj,
        "pair_words": pair_words,
        "pair_objects": pair_objects,
        "obj_negs": negs(args.objects, pair_objects),
        "word_negs": negs(args.words, pair_words),
        "weights": np.ones(args.pairs),
        "jitter": rng.uniform(-1e-6, 1e-6, size=(16, args.dim)),
    }


def run_once(kernels, mode, inp, lr, margin):
    words = inp["words"].copy()
    if mode == "table":
        objects = inp["objects"].copy()
        t0 = time.perf_counter()
        total, _ = kernels.train_epoch_tables(
            words, objects, inp["pair_words"], inp["pair_objects"],
            inp["obj_negs"], inp["word_negs"], inp["weights"], lr, margin,
            inp["jitter"],
        )
        return time.perf_counter() - t0, total, words, objects
    proj = inp["proj"].copy()
    t0 = time.perf_counter()
    total, _ = kernels.train_epoch_projection(
        words, proj, inp["feats"], inp["pair_words"], inp["pair_objects"],
        inp["obj_negs"], inp["word_negs"], inp["weights"], lr, margin,
        inp["jitter"],
    )
    return time.perf_counter() - t0, total, words, proj


def bench(name, mode, inp, args):
    kernels = backend.get_backend(name)
    best = float("inf")
    total = params = None
    for _ in range(args.repeats):
        dt, total, *params = run_once(kernels, mode, inp, args.lr, args.margin)
        best = min(best, dt)
    return best, total, params


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=10000, help="training pairs per epoch")
    ap.add_argument("--words", type=int, default=200)
    ap.add_argument("--objects", type=int, default=100)
    ap.add_argument("--dim", type=int, default=100, help="embedding dimension")
    ap.add_argument("--feature-dim", type=int, default=64, help="projection-mode input width")
    ap.add_argument("--k", type=int, default=5, help="negatives per side")
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--margin", type=float, default=1.0)
    ap.add_argument("--repeats", type=int, default=5, help="timed runs; best is reported")
    ap.add_argument("--mode", choices=("table", "projection", "both"), default="both")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not backend.compiled_available():
        print("compiled extension not importable; timing the python fallback only")
    modes = ("table", "projection") if args.mode == "both" else (args.mode,)
    rng = np.random.default_rng(args.seed)
    inp = build_inputs(args, rng)

    print(
        f"{args.pairs} pairs, {args.words} words x {args.objects} objects, "
        f"dim {args.dim}, k {args.k}, best of {args.repeats}"
    )
    for mode in modes:
        py_t, py_loss, py_params = bench("python", mode, inp, args)
        line = f"{mode:>10}  python   {1e6 * py_t / args.pairs:8.2f} us/pair  (epoch loss {py_loss:.4f})"
        print(line)
        if backend.compiled_available():
            c_t, c_loss, c_params = bench("compiled", mode, inp, args)
            agree = abs(c_loss - py_loss) < 1e-6 * max(1.0, abs(py_loss)) and all(
                np.allclose(a, b, atol=1e-9) for a, b in zip(py_params, c_params)
            )
            print(
                f"{mode:>10}  compiled {1e6 * c_t / args.pairs:8.2f} us/pair  "
                f"speedup {py_t / c_t:5.1f}x  results match: {'yes' if agree else 'NO'}"
            )
            if not agree:
                return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
