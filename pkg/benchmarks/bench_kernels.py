"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--size small|medium] [--repeat N]

Times one call per kernel after a warm-up (the warm-up also absorbs JIT
compilation), and prints a table with the speedup of the numba path.
"""

import argparse
import time

import numpy as np

from cbrec.kernels import _numpy as knp

try:
    from cbrec.kernels import _numba as knb
except ImportError:
    knb = None

SIZES = {
    "small": dict(det=32, n_s=47, n_mu=45, n_t=91, vol=24, n_lam=12),
    "medium": dict(det=96, n_s=137, n_mu=120, n_t=272, vol=48, n_lam=45),
}


def _geometry(n_lam):
    lam = 2 * np.pi * np.arange(n_lam) / n_lam
    srcs = np.stack([66 * np.cos(lam), 66 * np.sin(lam), 0 * lam], axis=1)
    eus = np.stack([-np.sin(lam), np.cos(lam), 0 * lam], axis=1)
    evs = np.stack([0 * lam, 0 * lam, 1 + 0 * lam], axis=1)
    ews = -np.stack([np.cos(lam), np.sin(lam), 0 * lam], axis=1)
    return srcs, eus, evs, ews


def build_cases(size):
    p = SIZES[size]
    rng = np.random.default_rng(0)
    det = p["det"]
    nv = p["vol"]
    spacing = 24.0 / nv
    org = -0.5 * (nv - 1) * spacing
    det_sp = 60.0 / det
    img = rng.standard_normal((det, det))
    sino = rng.standard_normal((p["n_mu"], p["n_s"]))
    vol = rng.standard_normal((nv, nv, nv))
    stack = rng.standard_normal((p["n_lam"], det, det))
    srcs, eus, evs, ews = _geometry(p["n_lam"])
    dlam = np.full(p["n_lam"], 2 * np.pi / p["n_lam"])
    t_max = 0.5 * np.hypot(det * det_sp, det * det_sp)

    cases = {
        "radon2d_forward": (
            "radon2d_forward",
            (img, det_sp, det_sp, 0.0, 0.0, p["n_s"], 2 * t_max / p["n_s"],
             p["n_mu"], t_max, p["n_t"]),
        ),
        "radon2d_adjoint": (
            "radon2d_adjoint",
            (sino, det, det, det_sp, det_sp, 0.0, 0.0, 2 * t_max / p["n_s"],
             t_max, p["n_t"], 1.0),
        ),
        "cone_forward": (
            "cone_forward",
            (vol, spacing, org, org, org, srcs, eus, evs, ews, 199.0,
             det, det, det_sp, det_sp, 0.0, 0.0, 0.5 * spacing),
        ),
        "cone_backproject_adjoint": (
            "cone_backproject_adjoint",
            (vol, spacing, org, org, org, srcs, eus, evs, ews, 199.0,
             det, det, det_sp, det_sp, 0.0, 0.0, 1.0),
        ),
    }
    accum_args = (spacing, org, org, org, srcs, eus, evs, ews, 199.0,
                  det_sp, det_sp, 0.0, 0.0, dlam, 0, 66.0)
    return cases, stack, vol.shape, accum_args


def time_call(fn, args, repeat):
    fn(*args)  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def time_accum(mod, stack, vol_shape, args, repeat):
    out = np.zeros(vol_shape)
    mod.cone_backproject_accum(out, stack, *args)
    best = np.inf
    for _ in range(repeat):
        out = np.zeros(vol_shape)
        t0 = time.perf_counter()
        mod.cone_backproject_accum(out, stack, *args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", choices=sorted(SIZES), default="small")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases, stack, vol_shape, accum_args = build_cases(args.size)
    print(f"size={args.size}  repeat={args.repeat}  (best-of timings, seconds)")
    header = f"{'kernel':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    rows = list(cases.items()) + [("cone_backproject_accum", None)]
    for name, spec in rows:
        if spec is None:
            t_np = time_accum(knp, stack, vol_shape, accum_args, args.repeat)
            t_nb = (
                time_accum(knb, stack, vol_shape, accum_args, args.repeat)
                if knb
                else None
            )
        else:
            fn_name, call_args = spec
            t_np = time_call(getattr(knp, fn_name), call_args, args.repeat)
            t_nb = time_call(getattr(knb, fn_name), call_args, args.repeat) if knb else None
        if t_nb is None:
            print(f"{name:28s} {t_np:10.4f} {'n/a':>10s} {'n/a':>9s}")
        else:
            print(f"{name:28s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}x")
    if knb is None:
        print("numba not available; only the fallback was timed")


if __name__ == "__main__":
    main()
