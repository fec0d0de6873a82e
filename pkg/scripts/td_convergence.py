"""Time-domain estimator: error and standard error against the shot count.

    python3 scripts/td_convergence.py --eta 0.1 --seed 0
"""

import argparse
import math

import numpy as np

from xasim.model import HamiltonianModel, choose_tau
from xasim.oracle import SpectralLine, exact_c_eta
from xasim.qsim import EigenDecomposition
from xasim.td_estimator import run_time_domain


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=64)
    args = p.parse_args()

    energies = np.array([0.0, 0.8, 1.5, 2.6])
    weights = np.array([0.5, 0.3, 0.2, 0.0])
    eig = EigenDecomposition(energies, np.eye(4, dtype=complex))
    psi0 = np.sqrt(weights).astype(complex)
    lines = [SpectralLine(e, w) for e, w in zip(energies, weights) if w > 0]
    kernel = choose_tau(HamiltonianModel(2, np.diag(energies)), args.eta, args.eps)
    grid = np.linspace(-math.pi, math.pi, args.points, endpoint=False)
    exact = exact_c_eta(kernel, lines, grid)

    print(f"tau={kernel.tau:.4f} j_max={kernel.j_max} L_total={kernel.L_total:.3f} bound={kernel.truncation_bound:.2e}")
    print(f"{'N_s':>9} {'max|err|':>10} {'mean se':>10} {'frac<=4se':>10}")
    rows = []
    for n in (10**2, 10**3, 10**4, 10**5, 10**6):
        est = run_time_domain(psi0, eig, kernel, grid, n, seed=args.seed)
        err = np.abs(est.value - exact)
        rows.append((n, est.stderr.mean()))
        print(f"{n:>9d} {err.max():>10.3e} {est.stderr.mean():>10.3e} {np.mean(err <= 4 * est.stderr):>10.2f}")
    n, se = np.array(rows).T
    print(f"log-log slope of stderr: {np.polyfit(np.log(n), np.log(se), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
