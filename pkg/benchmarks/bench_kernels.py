"""Throughput of the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Both backends consume identical noise, so the script also reports the
largest difference between their increment streams.
"""

import argparse
import time

import numpy as np

from sdeirrev.estimate import make_stream
from sdeirrev.integrate import initial_state
from sdeirrev.kernels import NativeChain, available_backends, draw_noise
from sdeirrev.model import DiffusionModel, Domain, LangevinSpec, ModelSpec, PotentialModel

CASES = {
    "em quartic torus d=2": ("em", ModelSpec.overdamped(
        PotentialModel.quartic_radial(20.0, 2), DiffusionModel.additive(np.sqrt(0.1), 2), Domain.torus(4.0)), 0.05),
    "em sigma_eps": ("em", ModelSpec.overdamped(PotentialModel.quadratic(1), DiffusionModel.sigma_eps(1.0)), 0.01),
    "milstein sigma_eps": ("milstein", ModelSpec.overdamped(
        PotentialModel.quadratic(1), DiffusionModel.sigma_eps(1.0)), 0.01),
    "bbk harmonic N=5": ("bbk", ModelSpec.langevin_model(
        PotentialModel.quadratic(5), LangevinSpec(n_particles=5, dim=1, mass=1.0, gamma=4.0, sigma=0.1)), 0.02),
}


def time_backend(backend, scheme, model, dt, noise, repeat):
    best, w = np.inf, None
    for _ in range(repeat):
        state = initial_state(model, make_stream(0))
        chain = NativeChain(scheme, model, dt, state, "dropped", backend)
        w = np.empty(len(noise))
        t0 = time.perf_counter()
        chain.advance(noise, w)
        best = min(best, time.perf_counter() - t0)
    return best, w


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}; {args.steps} steps, best of {args.repeat}")
    print(f"{'case':<24}" + "".join(f"{b + ' steps/s':>18}" for b in backends) + f"{'speedup':>10}{'max |dw|':>11}")
    for name, (scheme, model, dt) in CASES.items():
        noise = draw_noise(make_stream(1), scheme, model, args.steps, dt)
        res = {b: time_backend(b, scheme, model, dt, noise, args.repeat) for b in backends}
        rates = {b: args.steps / t for b, (t, _) in res.items()}
        line = f"{name:<24}" + "".join(f"{rates[b]:>18.3g}" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(res["cython"][1] - res["python"][1])))
            line += f"{rates['cython'] / rates['python']:>10.1f}{diff:>11.2g}"
        print(line)


if __name__ == "__main__":
    main()
