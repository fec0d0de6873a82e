"""Monte-Carlo time-domain estimator of the broadened spectrum C_eta(x).

A Fourier mode J is drawn with probability proportional to exp(-eta tau |J|),
two Hadamard tests of exp(-i H' tau J) give +-1 outcomes X and Y, and
``L_total (X + iY) exp(iJx)`` is an unbiased estimate of the truncated Fourier
series of C_eta at every x.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from xasim.errors import ValidationError
from xasim.model import KernelSpec, j_max_for
from xasim.oracle import periodic_lorentzian
from xasim.qsim import (
    EigenDecomposition,
    amplitudes,
    hadamard_test_expectation,
    hadamard_test_sample,
    rng_stream,
    time_evolve,
)
from xasim.spectrum import SpectrumEstimate

DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class TimeDomainSample:
    j: int
    x_outcome: int
    y_outcome: int


def mode_probabilities(kernel: KernelSpec) -> np.ndarray:
    c = kernel.coeffs
    return c / c.sum()


def sample_modes(kernel: KernelSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws of J over ``-j_max..j_max``."""
    cdf = np.cumsum(mode_probabilities(kernel))
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return kernel.js[np.minimum(idx, cdf.size - 1)]


def sample_mode(kernel: KernelSpec, rng: np.random.Generator) -> int:
    return int(sample_modes(kernel, rng, 1)[0])


def _evolution(eig: EigenDecomposition, t: float):
    return lambda v: time_evolve(v, eig, t)


def run_shot(psi0, eig: EigenDecomposition, kernel: KernelSpec, j: int, rng: np.random.Generator) -> TimeDomainSample:
    if abs(j) > kernel.j_max:
        raise ValidationError(f"|J|={abs(j)} exceeds j_max={kernel.j_max}")
    u = _evolution(eig, kernel.tau * j)
    x = hadamard_test_sample(psi0, u, "I", rng).signed
    y = hadamard_test_sample(psi0, u, "Sdg", rng).signed
    return TimeDomainSample(int(j), x, y)


def estimator_value(x, sample: TimeDomainSample, kernel: KernelSpec):
    """``L_total (X + iY) exp(iJx)``; vectorizes over ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > math.pi):
        raise ValidationError("|x| must not exceed pi")
    val = kernel.L_total * (sample.x_outcome + 1j * sample.y_outcome) * np.exp(1j * sample.j * x)
    return complex(val) if val.ndim == 0 else val


@dataclass
class RunningSums:
    """Mergeable accumulators for the estimator over a fixed grid."""

    sum_re: np.ndarray
    sumsq_re: np.ndarray
    sum_im: np.ndarray
    count: int = 0
    calls: int = 0

    @classmethod
    def zeros(cls, n_grid: int) -> RunningSums:
        return cls(np.zeros(n_grid), np.zeros(n_grid), np.zeros(n_grid))

    def __add__(self, other: RunningSums) -> RunningSums:
        return RunningSums(
            self.sum_re + other.sum_re,
            self.sumsq_re + other.sumsq_re,
            self.sum_im + other.sum_im,
            self.count + other.count,
            self.calls + other.calls,
        )


class _HadamardTable:
    """Exact ancilla probabilities per mode J, computed on first use."""

    def __init__(self, psi0, eig, kernel):
        self.psi0 = amplitudes(psi0)
        self.eig = eig
        self.kernel = kernel
        self.cache: dict[int, tuple[float, float]] = {}

    def probs(self, js: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uniq, inv = np.unique(js, return_inverse=True)
        px = np.empty(uniq.size)
        py = np.empty(uniq.size)
        for i, j in enumerate(uniq):
            j = int(j)
            if j not in self.cache:
                u = _evolution(self.eig, self.kernel.tau * j)
                self.cache[j] = (
                    hadamard_test_expectation(self.psi0, u, "I"),
                    hadamard_test_expectation(self.psi0, u, "Sdg"),
                )
            px[i], py[i] = self.cache[j]
        return px[inv], py[inv]

    def warm(self) -> None:
        self.probs(self.kernel.js)


def _run_chunk(table: _HadamardTable, grid: np.ndarray, seed: int, index: int, size: int) -> RunningSums:
    rng = rng_stream(seed, index)
    kernel = table.kernel
    js = sample_modes(kernel, rng, size)
    px, py = table.probs(js)
    xs = np.where(rng.random(size) < px, 1.0, -1.0)
    ys = np.where(rng.random(size) < py, 1.0, -1.0)
    phase = np.multiply.outer(js, grid)
    cos, sin = np.cos(phase), np.sin(phase)
    re = kernel.L_total * (xs[:, None] * cos - ys[:, None] * sin)
    im = kernel.L_total * (xs[:, None] * sin + ys[:, None] * cos)
    return RunningSums(re.sum(axis=0), (re**2).sum(axis=0), im.sum(axis=0), size, int(np.abs(js).sum()))


def _chunk_sizes(n_samples: int, chunk: int) -> list[int]:
    full, rest = divmod(n_samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_time_domain(
    psi0,
    eig: EigenDecomposition,
    kernel: KernelSpec,
    grid,
    n_samples: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
    n_workers: int = 1,
) -> SpectrumEstimate:
    """Average ``n_samples`` estimator draws at every grid point.

    All grid points reuse the same draws, so errors are correlated across the
    grid. Chunk ``k`` of the run draws from ``rng_stream(seed, k)``; results do not
    depend on ``n_workers``.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be at least 1")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) > math.pi):
        raise ValidationError("|x| must not exceed pi")
    table = _HadamardTable(psi0, eig, kernel)
    table.warm()
    sizes = _chunk_sizes(n_samples, chunk_size)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(table, grid, seed, *a), enumerate(sizes)))
    else:
        parts = [_run_chunk(table, grid, seed, k, s) for k, s in enumerate(sizes)]
    total = RunningSums.zeros(grid.size)
    for part in parts:
        total = total + part
    return finalize(total, grid, kernel, seed)


def finalize(total: RunningSums, grid: np.ndarray, kernel: KernelSpec, seed: int | None) -> SpectrumEstimate:
    n = total.count
    mean = total.sum_re / n
    warnings = []
    if n > 1:
        var = np.maximum(total.sumsq_re - n * mean**2, 0.0) / (n - 1)
        stderr = np.sqrt(var / n)
    else:
        var = np.zeros_like(mean)
        stderr = np.zeros_like(mean)
        warnings.append("insufficient samples")
    expected = float(np.sum(np.abs(kernel.js) * mode_probabilities(kernel)))
    return SpectrumEstimate(
        grid=grid,
        value=mean,
        stderr=stderr,
        n_samples=n,
        seed=seed,
        quantity="c_eta",
        meta={
            "imag_mean": total.sum_im / n,
            "sample_variance": var,
            "evolution_calls": total.calls,
            "expected_evolution_calls": expected * n,
            "max_calls_per_run": kernel.j_max,
            "correlated_grid": True,
            "warnings": warnings,
        },
    )


class TDCost(NamedTuple):
    n_samples: int
    expected_calls: float
    max_calls: int
    n_samples_exact: float


def td_cost_model(eps: float, eta: float, tau: float) -> TDCost:
    """Shot count and per-run evolution calls for target error ``eps`` in G.

    ``n_samples = ceil(2 L^2 / (eps / tau)^2)`` with ``L`` the kernel peak
    ``L_eta(0) = coth(eta tau / 2) / (2 pi)``, which bounds the estimator magnitude
    for every truncation. Per run, ``E|J|`` calls on average and ``j_max`` at most.
    """
    if not (eps > 0 and eta > 0 and tau > 0):
        raise ValidationError("eps, eta, tau must be positive")
    width = eta * tau
    peak = float(periodic_lorentzian(0.0, width))
    exact = 2.0 * peak**2 / (eps / tau) ** 2
    j_max = j_max_for(width, eps / tau)
    js = np.arange(-j_max, j_max + 1)
    w = np.exp(-width * np.abs(js))
    expected = float(np.sum(np.abs(js) * w) / w.sum())
    return TDCost(math.ceil(exact), expected, j_max, exact)
