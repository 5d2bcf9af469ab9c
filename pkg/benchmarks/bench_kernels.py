"""Compare the numba and pure-numpy generation kernels.

Each backend runs in its own interpreter because the backend is fixed at
import time by GWIMOMENTS_DISABLE_NUMBA. Workloads cover the stationary
sampler on four models and the M_alpha(k) path estimator.

    python3 benchmarks/bench_kernels.py --samples 100000 --repeat 3
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from gwimoments import backend_name
from gwimoments.analysis import estimate_Mk_sequence
from gwimoments.distributions import *
from gwimoments.process import GWIModel, stationary_samples

n, repeat = int(sys.argv[1]), int(sys.argv[2])
models = {
    "single_bernoulli": GWIModel(OffspringSpec((independent(Bernoulli(0.5)),)), independent(Poisson(1.0))),
    "two_type_poisson": GWIModel(OffspringSpec((independent(Poisson(0.5), Poisson(0.2)),
                                                independent(Deterministic(0), Poisson(0.3)))),
                                 independent(Poisson(3.0), Poisson(1.0))),
    "periodic_heavy": GWIModel(OffspringSpec((independent(Deterministic(0), Poisson(2.0)),
                                              independent(Bernoulli(0.05), Deterministic(0)))),
                               independent(DiscretePareto(1.5), Poisson(5.0))),
    "finite_pmf_offspring": GWIModel(OffspringSpec((independent(FinitePMF((0, 1, 3), (0.5, 0.3, 0.2))),)),
                                     independent(Poisson(4.0))),
}
out = {"backend": backend_name(), "results": {}}
for name, model in models.items():
    stationary_samples(model, 1000, 0)  # compile / warm caches
    best = min(
        (lambda t0: (stationary_samples(model, n, 1), time.perf_counter() - t0)[1])(time.perf_counter())
        for _ in range(repeat)
    )
    out["results"]["stationary/" + name] = best
    t0 = time.perf_counter()
    estimate_Mk_sequence(model, [1.0, 2.0], 25, n, 2)
    out["results"]["mk_sequence/" + name] = time.perf_counter() - t0
print(json.dumps(out))
"""


def run_backend(disable, samples, repeat):
    env = dict(os.environ, GWIMOMENTS_DISABLE_NUMBA="1" if disable else "0", GWIMOMENTS_WORKERS="1")
    res = subprocess.run([sys.executable, "-c", WORKER, str(samples), str(repeat)],
                         capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print raw timings as JSON")
    args = ap.parse_args()

    fast = run_backend(False, args.samples, args.repeat)
    slow = run_backend(True, args.samples, args.repeat)
    if args.json:
        print(json.dumps({"numba": fast, "numpy": slow}, indent=1))
        return
    print(f"samples = {args.samples}, best of {args.repeat} (stationary), single run (mk_sequence)")
    print(f"{'workload':<34}{fast['backend']:>10}{slow['backend']:>10}{'speedup':>10}")
    for key, t_fast in fast["results"].items():
        t_slow = slow["results"][key]
        print(f"{key:<34}{t_fast:>9.3f}s{t_slow:>9.3f}s{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
