"""Compare the numba kernels with their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each row times one kernel on both paths (best of N after a warm-up call, so
JIT compilation is excluded) and checks that the outputs agree.
"""

import argparse
import json
import sys
import time

import numpy as np

from dfcdit import _kernels as K
from dfcdit import lossnet as ln, pipelines as pl
from dfcdit.config import TaskConfig
from dfcdit.imageio import encode_hdr
from dfcdit.synthetic import synthetic_corpus, synthetic_hdr


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    xp = rng.standard_normal((8, 32, 66, 66)).astype(np.float32)
    cols = K.im2col_numpy(xp, 3, 3, 1, 1)
    pool_in = rng.standard_normal((8, 32, 64, 64)).astype(np.float32)
    _, idx = K.maxpool2x2_numpy(pool_in)
    gout = rng.standard_normal((8, 32, 32, 32)).astype(np.float32)
    data = encode_hdr(synthetic_hdr(256, 1e4))
    pos = data.index(b"-Y")
    pos = data.index(b"\n", pos) + 1
    buf = np.frombuffer(data, dtype=np.uint8)

    yield "im2col 8x32x64x64 k3", lambda: K.im2col_numpy(xp, 3, 3, 1, 1), lambda: K.im2col_numba(xp, 3, 3, 1, 1)
    yield ("col2im 8x32x64x64 k3", lambda: K.col2im_numpy(cols, xp.shape, 3, 3, 1, 1),
           lambda: K.col2im_numba(cols, xp.shape, 3, 3, 1, 1))
    yield "maxpool 8x32x64x64", lambda: K.maxpool2x2_numpy(pool_in), lambda: K.maxpool2x2_numba(pool_in)
    yield ("maxpool backward", lambda: K.maxpool2x2_backward_numpy(gout, idx, pool_in.shape),
           lambda: K.maxpool2x2_backward_numba(gout, idx, pool_in.shape))
    yield ("RGBE RLE decode 256x256", lambda: K.decode_rgbe_scanlines_python(buf, pos, 256, 256),
           lambda: K.decode_rgbe_scanlines_numba(buf, pos, 256, 256))


def _agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), atol=1e-4) for x, y in zip(a, b))


def training_step_time(repeat):
    corpus = synthetic_corpus(8, 64, seed=0)
    net_l = ln.random_lossnet(seed=0)
    cfg = TaskConfig(learning_rate=0.002, batch_size=8, iterations=1, train_size=64)

    def step():
        pl.train_downscaler(corpus, cfg, net_l)

    out = {}
    for name, flag in (("numpy", False), ("numba", True)):
        K.set_backend(flag)
        out[name] = best_of(step, repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    prev = K.USE_NUMBA
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, np_fn, nb_fn in kernel_cases(rng):
        ok = _agree(np_fn(), nb_fn())
        t_np, t_nb = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "agree": ok})
        print(f"{name:28s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.2f}x  {ok}")
    step = training_step_time(max(1, args.repeat // 2))
    rows.append({"kernel": "downscale training step", "numpy_s": step["numpy"], "numba_s": step["numba"], "agree": True})
    print(f"{'downscale training step':28s} {step['numpy'] * 1e3:10.2f} {step['numba'] * 1e3:10.2f} "
          f"{step['numpy'] / step['numba']:8.2f}x")
    K.set_backend(prev)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
