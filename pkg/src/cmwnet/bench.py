"""Benchmark: numba kernels vs the pure-numpy fallback.

Times the three hot kernels (conv2d fwd/bwd, transposed conv, maxpool) at
toy and full-network sizes, plus a complete toy forward+backward pass.
Run with: python -m cmwnet.bench [--repeat N] [--full]
"""

import argparse
import time

import numpy as np

from . import backend
from .core import AblationSpec, NetworkConfig
from .loss import scaled_ground_truth, total_loss
from .netops import TensorParams
from .network import forward
from .params import init_parameters

KERNEL_CASES = [
    # name, (C,H,W), (K,C,k,k), stride, pad, dilation
    ("conv3x3 toy 8ch 64px", (8, 64, 64), (8, 8, 3, 3), 1, 1, 1),
    ("conv3x3 mid 64ch 72px", (64, 72, 72), (64, 64, 3, 3), 1, 1, 1),
    ("conv3x3 big 256ch 72px", (256, 72, 72), (256, 256, 3, 3), 1, 1, 1),
    ("conv7x7 mid 64ch 144px", (64, 144, 144), (32, 64, 7, 7), 1, 3, 1),
    ("conv3x3 dilated r5 64ch 72px", (64, 72, 72), (32, 64, 3, 3), 1, 5, 5),
]


def _time(fn, repeat):
    fn()  # warmup / jit compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat, dtype):
    rng = np.random.default_rng(0)
    rows = []
    for name, xshape, wshape, stride, pad, dil in KERNEL_CASES:
        x = rng.standard_normal(xshape).astype(dtype)
        w = (rng.standard_normal(wshape) * 0.1).astype(dtype)
        times = {}
        for b in ("numpy", "numba") if backend.have_numba() else ("numpy",):
            backend.set_backend(b)
            k = backend.kernels()
            y = k.conv2d_fwd(x, w, stride, pad, dil)
            times[b + "/fwd"] = _time(lambda: k.conv2d_fwd(x, w, stride, pad, dil), repeat)
            times[b + "/bwd_x"] = _time(
                lambda: k.conv2d_bwd_x(y, w, x.shape, stride, pad, dil), repeat)
            times[b + "/bwd_w"] = _time(
                lambda: k.conv2d_bwd_w(y, x, w.shape, stride, pad, dil), repeat)
        rows.append((name, times))
    return rows


def bench_forward_backward(repeat, dtype_name):
    cfg = NetworkConfig(input_resolution=64, block_channels=(8, 16, 16, 16, 16),
                        decoder_channels=(16, 16, 8), seed=0, dtype=dtype_name)
    ab = AblationSpec()
    rng = np.random.default_rng(1)
    rgb = rng.random((3, 64, 64)).astype(cfg.np_dtype)
    depth = rng.random((1, 64, 64)).astype(cfg.np_dtype)
    gt = (rng.random((1, 64, 64)) > 0.7).astype(np.float64)
    times = {}
    for b in ("numpy", "numba") if backend.have_numba() else ("numpy",):
        backend.set_backend(b)
        store = init_parameters(cfg, ab)
        tp = TensorParams(store, requires_grad=True)

        def step():
            tp.zero_grad()
            res = forward(rgb, depth, tp, cfg, ab, validate=False)
            shapes = {k: v.data.shape[1:] for k, v in res.predictions.items()}
            loss, _ = total_loss(res.predictions, scaled_ground_truth(gt, shapes),
                                 ablation=ab)
            loss.backward()

        times[b] = _time(step, repeat)
    return times


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m cmwnet.bench")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    args = parser.parse_args(argv)
    if not backend.have_numba():
        print("numba not importable; only the numpy fallback will run")
    dtype = np.float32 if args.dtype == "f32" else np.float64

    print(f"kernel benchmarks ({args.dtype}, repeat={args.repeat})")
    for name, times in bench_kernels(args.repeat, dtype):
        print(f"\n  {name}")
        for op in ("fwd", "bwd_x", "bwd_w"):
            np_t = times.get(f"numpy/{op}")
            nb_t = times.get(f"numba/{op}")
            if nb_t is None:
                print(f"    {op:6s} numpy {np_t * 1e3:8.3f} ms")
            else:
                print(f"    {op:6s} numpy {np_t * 1e3:8.3f} ms   numba {nb_t * 1e3:8.3f} ms"
                      f"   speedup x{np_t / nb_t:.2f}")

    print(f"\nfull toy forward+backward (64px, 8-16 channels, {args.dtype})")
    times = bench_forward_backward(args.repeat, args.dtype)
    for b, t in times.items():
        print(f"  {b:6s} {t * 1e3:9.2f} ms/sample")
    if "numba" in times:
        print(f"  speedup x{times['numpy'] / times['numba']:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
