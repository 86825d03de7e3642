"""Compare the pure-numpy and compiled kernel backends.

Times each hot kernel on training-shaped inputs, then a full optimizer
step of the tiny preset under each backend. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats N] [--steps N]
"""
import argparse
import contextlib
import time

import numpy as np

import cmlm.kernels as dispatch
from cmlm.kernels import pure

try:
    from cmlm.kernels import _core as compiled
except ImportError:
    compiled = None

from cmlm.model import PRESETS
from cmlm.train import TrainConfig, train

KERNEL_NAMES = ("softmax_xent_fwbw", "layernorm_fw", "layernorm_bw",
                "gelu_fw", "gelu_bw", "causal_softmax_fw",
                "causal_softmax_bw", "adam_step")


def best_of(fn, repeats: int) -> float:
    """Minimum wall time of fn() over `repeats` timed runs, in seconds."""
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng: np.random.Generator):
    """(name, callable-factory) pairs on training-shaped float64 inputs."""
    t, dim, ffn, heads, vocab = 256, 64, 256, 4, 1297
    logits = rng.normal(size=(t, vocab))
    targets = rng.integers(0, vocab, size=t)
    weights = (rng.random(t) < 0.9).astype(np.float64)
    x_ln = rng.normal(size=(t, dim))
    gain, bias = rng.normal(size=dim), rng.normal(size=dim)
    dy = rng.normal(size=(t, dim))
    x_gelu = rng.normal(size=(t, ffn))
    dy_gelu = rng.normal(size=(t, ffn))
    scores = rng.normal(size=(heads, t, t))
    dprobs = rng.normal(size=(heads, t, t))
    param = rng.normal(size=(vocab, dim))
    grad = rng.normal(size=(vocab, dim))

    def cases(mod):
        probs = mod.causal_softmax_fw(scores)
        _, mean, rstd = mod.layernorm_fw(x_ln, gain, bias)
        scratch = param.copy()
        m, v = np.zeros_like(param), np.zeros_like(param)
        return {
            "softmax_xent_fwbw":
                lambda: mod.softmax_xent_fwbw(logits, targets, weights),
            "layernorm_fw": lambda: mod.layernorm_fw(x_ln, gain, bias),
            "layernorm_bw":
                lambda: mod.layernorm_bw(dy, x_ln, gain, mean, rstd),
            "gelu_fw": lambda: mod.gelu_fw(x_gelu),
            "gelu_bw": lambda: mod.gelu_bw(x_gelu, dy_gelu),
            "causal_softmax_fw": lambda: mod.causal_softmax_fw(scores),
            "causal_softmax_bw":
                lambda: mod.causal_softmax_bw(probs, dprobs),
            "adam_step":
                lambda: mod.adam_step(scratch, grad, m, v,
                                      1e-3, 0.9, 0.98, 1e-8, 1),
        }

    return cases


@contextlib.contextmanager
def backend(mod):
    """Temporarily point the kernel dispatch module at one backend."""
    saved = {name: getattr(dispatch, name) for name in KERNEL_NAMES}
    for name in KERNEL_NAMES:
        setattr(dispatch, name, getattr(mod, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(dispatch, name, fn)


def bench_train_step(mod, steps: int, seed: int = 0) -> float:
    """Seconds per optimizer step of the tiny preset under one backend."""
    rng = np.random.default_rng(seed)
    docs = [([int(x) for x in rng.integers(0, 1280, size=48)] + [1296],
             [1.0] * 49) for _ in range(64)]
    cfg = TrainConfig(peak_lr=1e-3, warmup_updates=steps,
                      total_updates=steps, batch_size=4, max_seq_len=56,
                      seed=seed)
    with backend(mod):
        t0 = time.perf_counter()
        train(PRESETS["tiny"], cfg, docs)
        return (time.perf_counter() - t0) / steps


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timed runs per kernel (default: 20)")
    parser.add_argument("--steps", type=int, default=30,
                        help="optimizer steps for the end-to-end row "
                             "(default: 30)")
    args = parser.parse_args()

    cases = kernel_cases(np.random.default_rng(0))
    pure_cases = cases(pure)
    compiled_cases = cases(compiled) if compiled is not None else None
    width = max(len(n) for n in KERNEL_NAMES) + 2
    print(f"{'kernel':<{width}}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for name in KERNEL_NAMES:
        t_pure = best_of(pure_cases[name], args.repeats)
        if compiled_cases is None:
            print(f"{name:<{width}}{t_pure * 1e3:>10.3f}ms"
                  f"{'n/a':>12}{'':>10}")
            continue
        t_comp = best_of(compiled_cases[name], args.repeats)
        print(f"{name:<{width}}{t_pure * 1e3:>10.3f}ms"
              f"{t_comp * 1e3:>10.3f}ms{t_pure / t_comp:>9.2f}x")

    t_pure = bench_train_step(pure, args.steps)
    line = (f"{'tiny train step':<{width}}{t_pure * 1e3:>10.1f}ms")
    if compiled is not None:
        t_comp = bench_train_step(compiled, args.steps)
        line += f"{t_comp * 1e3:>10.1f}ms{t_pure / t_comp:>9.2f}x"
    else:
        line += f"{'n/a':>12}"
    print(line)
    print(f"\nactive backend for this install: {dispatch.BACKEND}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
