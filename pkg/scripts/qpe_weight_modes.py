"""QPE sampling with one-sided, symmetric and uniform ancilla weights.

Each mode is reconstructed with the windowed estimator and with kernel density
smoothing; the table shows the exact-distribution bias and a sampled error.

    python3 scripts/qpe_weight_modes.py --n-ancilla 9 --shots 100000
"""

import argparse
import math

import numpy as np

from xasim.model import KernelSpec
from xasim.oracle import SpectralLine, exact_c_eta
from xasim.qpe_estimator import kde_expectation, kde_smooth, run_qpe_sampling, windowed_expectation, windowed_spectrum
from xasim.qsim import EigenDecomposition, qpe_distribution


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--n-ancilla", type=int, default=9)
    p.add_argument("--shots", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    energies = np.array([-2.0, 0.37, 1.9])
    weights = np.array([0.5, 0.3, 0.2])
    eig = EigenDecomposition(energies, np.eye(3, dtype=complex))
    psi0 = np.sqrt(weights).astype(complex)
    lines = [SpectralLine(e, w) for e, w in zip(energies, weights)]
    kernel = KernelSpec(eta=args.eta, tau=1.0, delta=0.01, j_max=1000)
    n = args.n_ancilla
    grid = np.linspace(-math.pi, math.pi, 128, endpoint=False)
    exact = exact_c_eta(kernel, lines, grid)

    print(f"{'mode':<12}{'method':<10}{'max bias':>12}{'max|err|':>12}")
    for mode in ("lorentzian", "symmetric", "uniform"):
        probs = qpe_distribution(psi0, eig, kernel, n, weights=mode)
        hist = run_qpe_sampling(psi0, eig, kernel, n, args.shots, args.seed, mode=mode)
        win_mean = np.array([windowed_expectation(probs, n, x, kernel.width) for x in grid])
        win = windowed_spectrum(hist, kernel, grid)
        kde_mean = kde_expectation(probs, kernel, n, grid)
        kde = kde_smooth(hist, kernel, grid)
        for name, mean, est in (("window", win_mean, win), ("kde", kde_mean, kde)):
            print(f"{mode:<12}{name:<10}{np.max(np.abs(mean - exact)):>12.3e}{np.max(np.abs(est.value - exact)):>12.3e}")


if __name__ == "__main__":
    main()
