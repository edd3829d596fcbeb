"""Timing comparison of the numba kernels against the numpy fallback.

Runs each backend in a subprocess (the backend is frozen at import time
by SOVLAB_NUMBA) on the two hot paths: batched trajectory second moments
and the twin-trajectory Lyapunov sweep.  Also cross-checks that both
backends produce bit-identical results for the same noise.

Usage: python benchmarks/bench_kernels.py [--realizations N] [--steps N]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json
import sys
import time

import numpy as np

from sovlab import _kernels

realizations = int(sys.argv[1])
n_steps = int(sys.argv[2])
dt = 1e-3
rng = np.random.default_rng(2024)
dw = rng.normal(0.0, np.sqrt(dt), size=(realizations, n_steps))

# warm-up triggers jit compilation so it is not billed to the timing
_kernels.qvar_batch(1.0, 0.25, 1.0, 0.0, dt, 64, 8, dw[:2, :64])
_kernels.benettin_batch(1.0, 0.25, (0.0, 0.0), (1e-3, 0.0), 1e-8, dt, 64, 32,
                        dw[:2, :64])

t0 = time.perf_counter()
qvar = _kernels.qvar_batch(1.0, 0.25, 1.0, 0.0, dt, n_steps, 100, dw)
t_qvar = time.perf_counter() - t0

t0 = time.perf_counter()
ben = _kernels.benettin_batch(1.0, 0.25, (0.0, 0.0), (1e-3, 0.0), 1e-8, dt,
                              n_steps, 500, dw, discard=2)
t_ben = time.perf_counter() - t0

digest = {
    "backend": _kernels.backend_name(),
    "t_qvar": t_qvar,
    "t_benettin": t_ben,
    "qvar_sum": float(np.nansum(qvar[0])),
    "benettin_sum": float(np.sum(ben[0])),
}
print(json.dumps(digest))
"""


def run_backend(flag: str, realizations: int, steps: int) -> dict:
    env = dict(os.environ, SOVLAB_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, str(realizations), str(steps)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--realizations", type=int, default=400)
    parser.add_argument("--steps", type=int, default=20000)
    args = parser.parse_args()

    numba = run_backend("1", args.realizations, args.steps)
    numpy_ = run_backend("0", args.realizations, args.steps)
    if numba["backend"] != "numba":
        print("warning: numba unavailable, both runs used the fallback")

    print(f"batch size {args.realizations}, {args.steps} steps, dt=1e-3")
    for key, label in (("t_qvar", "trajectory moments"),
                       ("t_benettin", "benettin sweep   ")):
        ratio = numpy_[key] / numba[key]
        print(f"{label}  numba {numba[key]:8.3f} s   numpy {numpy_[key]:8.3f} s"
              f"   speedup x{ratio:.1f}")

    same = (numba["qvar_sum"] == numpy_["qvar_sum"]
            and numba["benettin_sum"] == numpy_["benettin_sum"])
    print("cross-check:", "bit-identical results" if same else
          f"MISMATCH {numba} vs {numpy_}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
