"""Compiled loops vs numpy for each hot kernel.

    python benchmarks/bench_kernels.py [--repeat N]

Times the plant integrator, the backward difference and the network
forward / vector-Jacobian kernels on the default training data, once through
the numba-compiled loop and once through the numpy (or interpreted) path.
Both outputs are compared so a timing never hides a numerical mismatch.
"""
import argparse
import time

import numpy as np

from pgff import kernels
from pgff._accel import HAS_NUMBA, njit
from pgff.experiment import ExperimentConfig
from pgff.neuralnet import ACTIVATIONS, init_network
from pgff.objectives import FitProblem
from pgff.plant import synthesize_dataset


def best_of(fn, repeat):
    fn()  # warm-up, also triggers compilation
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    if not HAS_NUMBA:
        print("numba unavailable or disabled (PGFF_DISABLE_NUMBA); both columns run uncompiled code")

    cfg = ExperimentConfig()
    dataset = synthesize_dataset(cfg.references, cfg.plant)
    problem = FitProblem(dataset)
    plant = cfg.plant
    f = np.ascontiguousarray(dataset[-1].optimal_input.samples)
    r = np.ascontiguousarray(problem.F)
    net = init_network([3, 5, 5, 1], "tanh", np.random.default_rng(0))
    params, sizes, act = net.flatten(), net.sizes, ACTIVATIONS["tanh"]
    X = problem.X
    cot = np.random.default_rng(1).standard_normal(X.shape[0])

    sim_c = njit(kernels.simulate_stribeck_loop)
    diff_c = njit(kernels.backward_difference_loop)
    sim_args = (f, plant.mass, plant.c1, plant.c2, plant.alpha, plant.sample_rate, 1e-12, 100)

    rows = [
        ("stribeck integrator", len(f),
         lambda: sim_c(*sim_args)[0], lambda: kernels.simulate_stribeck_loop(*sim_args)[0]),
        ("backward difference", len(r),
         lambda: diff_c(r, 100.0, 0.0), lambda: kernels.backward_difference_np(r, 100.0, 0.0)),
        ("mlp forward", X.shape[0],
         lambda: kernels.mlp_forward_compiled(params, sizes, act, X),
         lambda: kernels.mlp_forward_np(params, sizes, act, X)),
        ("mlp forward+vjp", X.shape[0],
         lambda: kernels.mlp_vjp_compiled(params, sizes, act, X, cot)[1],
         lambda: kernels.mlp_vjp_np(params, sizes, act, X, cot)[1]),
    ]
    print(f"{'kernel':<22}{'n':>7}{'loop [us]':>13}{'numpy [us]':>13}{'speedup':>10}{'max diff':>11}")
    for name, n, compiled, reference in rows:
        diff = float(np.max(np.abs(compiled() - reference())))
        t_c = best_of(compiled, args.repeat)
        t_r = best_of(reference, args.repeat)
        print(f"{name:<22}{n:>7}{t_c * 1e6:>13.1f}{t_r * 1e6:>13.1f}{t_r / t_c:>9.1f}x{diff:>11.1e}")
    print("(the integrator's non-compiled path is the same loop run by the interpreter)")


if __name__ == "__main__":
    main()
