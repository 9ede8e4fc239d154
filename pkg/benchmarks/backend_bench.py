"""Head-to-head timing of the numba kernels against their numpy twins.

Runs the three hot kernels plus the full inner solve on scene-shaped inputs
at several point counts and prints microseconds per call for both backends.

    python3 benchmarks/backend_bench.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from gmlpnp import _numba_impl, _numpy_impl, bench
from gmlpnp.linear_init import solve_linear_init

SIZES = (20, 50, 200, 1000)


def make_inputs(n, seed=0):
    scene = bench.generate_scene(
        bench.SceneConfig(n_points=n, rng_seed=seed),
        bench.NoiseConfig(sigma_obj=0.1, sigma_img=1.0),
    )
    init = solve_linear_init(scene.points, scene.rays)
    L, _ = _numpy_impl.cholesky3(scene.truth.covariance)
    W = _numpy_impl.whitening_from_cholesky(L)
    R = np.ascontiguousarray(init.rotation)
    t = np.ascontiguousarray(init.translation)
    s = _numpy_impl.optimal_scales(scene.points, scene.rays, R, t, W)
    e = _numpy_impl.residual_array(scene.points, scene.rays, R, t, s)
    return scene, W, R, t, s, e


def time_call(fn, args, repeats):
    fn(*args)  # warmup / JIT compile
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats * 1e6


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    kernels = {
        "optimal_scales": lambda impl, d: (
            impl.optimal_scales,
            (d[0].points, d[0].rays, d[2], d[3], d[1]),
        ),
        "normal_equations": lambda impl, d: (
            impl.normal_equations,
            (d[0].rays, d[2], d[4], d[5], d[1]),
        ),
        "whitened_cost": lambda impl, d: (impl.whitened_cost, (d[5], d[1])),
        "inner_solve": lambda impl, d: (
            impl.inner_solve,
            (d[0].points, d[0].rays, d[1], d[2], d[3], 20, 1e-10, 1e-12, 1e-6),
        ),
    }

    print(f"{'kernel':<18} {'n':>5} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    print("-" * 60)
    for name, build in kernels.items():
        for n in SIZES:
            data = make_inputs(n)
            fn_np, args_np = build(_numpy_impl, data)
            fn_nb, args_nb = build(_numba_impl, data)
            t_np = time_call(fn_np, args_np, args.repeats)
            t_nb = time_call(fn_nb, args_nb, args.repeats)
            print(
                f"{name:<18} {n:>5} {t_np:>12.1f} {t_nb:>12.1f} {t_np / t_nb:>7.1f}x"
            )


if __name__ == "__main__":
    main()
