"""Compare the compiled and NumPy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 20]

Times the two hot kernels on the sizes the pricer uses (an Euler grid of
N+1 frequencies, a 21-strike ladder) and one full snapshot repricing, and
reports the largest difference between the two backends.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from voltsmile import _kernels_py

try:
    from voltsmile import _kernels as _compiled
except ImportError:
    _compiled = None


def kernel_cases(n_nodes):
    v = np.linspace(0.0, 40.0, n_nodes + 1)
    w = np.full(v.size, v[1])
    strikes = np.linspace(32.0, 40.0, 21)
    args_cf = (v, 0.189, 0.0586, 0.0005, 0.0002, 0.0137, np.exp(0.0044 * 27) - 1.0, 0.0044, 27.0, 0.0129)
    logpsi = _kernels_py.two_factor_log_cf(*args_cf)
    args_tv = (v, w, logpsi, 36.0, strikes, 0.5)
    return {"two_factor_log_cf": args_cf, "mt_time_values": args_tv}


def snapshot_seconds(pure: bool, repeat: int) -> float:
    """Reprice the 113-quote synthetic snapshot in a fresh interpreter."""
    code = (
        "import timeit\n"
        "from voltsmile.market_data import synthetic_market, published_contracts, published_two_factor\n"
        "from voltsmile.published import VALUATION_DATE\n"
        "from voltsmile.fourier_pricer import PricingGrid\n"
        "g = PricingGrid(quad_mode='euler_sum', N=2048)\n"
        "p, c = published_two_factor(), published_contracts()\n"
        f"print(min(timeit.repeat(lambda: synthetic_market(p, c, VALUATION_DATE, g), number=1, repeat={repeat})))\n"
    )
    env = dict(os.environ, VOLTSMILE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--nodes", type=int, default=4096)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the NumPy backend is available")
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}{'max |diff|':>13}")
    for name, call_args in kernel_cases(args.nodes).items():
        fpy = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: fpy(*call_args), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<20}{t_py:>12.3f}{'n/a':>13}")
            continue
        fc = getattr(_compiled, name)
        t_c = min(timeit.repeat(lambda: fc(*call_args), number=1, repeat=args.repeat)) * 1e3
        diff = np.max(np.abs(np.asarray(fc(*call_args)) - np.asarray(fpy(*call_args))))
        print(f"{name:<20}{t_py:>12.3f}{t_c:>13.3f}{t_py / t_c:>10.1f}{diff:>13.2e}")
    reps = max(3, args.repeat // 4)
    t_py = snapshot_seconds(True, reps)
    line = f"{'snapshot (113 quotes)':<20}{t_py * 1e3:>12.1f}"
    if _compiled is not None:
        t_c = snapshot_seconds(False, reps)
        line += f"{t_c * 1e3:>13.1f}{t_py / t_c:>10.1f}"
    print(line)


if __name__ == "__main__":
    main()
