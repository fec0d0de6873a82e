"""QPE sampling: draw phase-register outcomes and rebuild the broadened spectrum.

Two reconstructions are provided. ``kde_smooth`` places a periodic Lorentzian on
every outcome (natural for textbook, uniformly weighted phase estimation).
``windowed_estimate`` reads the spectrum directly from the outcome density in a
small window, which is correct when the ancilla register was prepared with the
one-sided Lorentzian weights ``l_j ~ exp(-eta tau j)``: then
``P(x) 2^n / (2 pi) = C_eta(x)`` on the lattice, up to ``exp(-eta tau 2^n)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from xasim.errors import ValidationError
from xasim.model import KernelSpec
from xasim.oracle import exact_c_eta, periodic_lorentzian
from xasim.qsim import EigenDecomposition, qpe_distribution, qpe_grid, rng_stream
from xasim.spectrum import SpectrumEstimate, atomic_write_text

DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class QPEHistogram:
    n_ancilla: int
    counts: np.ndarray
    mode: str = "lorentzian"
    seed: int | None = None

    @property
    def grid(self) -> np.ndarray:
        return qpe_grid(self.n_ancilla)

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def is_empty(self) -> bool:
        return self.n_samples == 0

    @property
    def spacing(self) -> float:
        return 2 * math.pi / 2**self.n_ancilla

    def frequencies(self) -> np.ndarray:
        if self.is_empty:
            raise ValidationError("empty histogram")
        return self.counts / self.n_samples


def run_qpe_sampling(
    psi0,
    eig: EigenDecomposition,
    kernel: KernelSpec,
    n_ancilla: int | None,
    n_samples: int,
    seed: int,
    mode: str = "lorentzian",
    chunk_size: int = DEFAULT_CHUNK,
) -> QPEHistogram:
    """Histogram of ``n_samples`` phase-register outcomes.

    ``mode`` selects the ancilla preparation: ``lorentzian`` (one-sided kernel
    weights), ``symmetric`` or ``uniform``. ``n_samples == 0`` gives an empty
    histogram whose ``is_empty`` flag is set.
    """
    if n_ancilla is None:
        n_ancilla = kernel.n_ancilla
    if n_samples < 0:
        raise ValidationError("n_samples must be nonnegative")
    probs = qpe_distribution(psi0, eig, kernel, n_ancilla, weights=mode)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    counts = np.zeros(probs.size, dtype=np.int64)
    full, rest = divmod(n_samples, chunk_size)
    sizes = [chunk_size] * full + ([rest] if rest else [])
    for k, size in enumerate(sizes):
        counts += rng_stream(seed, k).multinomial(size, probs)
    return QPEHistogram(n_ancilla, counts, mode, seed)


def kde_smooth(hist: QPEHistogram, kernel: KernelSpec, grid) -> SpectrumEstimate:
    """Average of periodic Lorentzians centred on the outcomes."""
    if hist.is_empty:
        raise ValidationError("cannot smooth an empty histogram")
    grid = np.asarray(grid, dtype=float)
    occupied = np.flatnonzero(hist.counts)
    c = hist.counts[occupied].astype(float)
    vals = periodic_lorentzian(np.subtract.outer(grid, hist.grid[occupied]), kernel.width)
    n = hist.n_samples
    mean = vals @ c / n
    if n > 1:
        var = ((vals - mean[:, None]) ** 2) @ c / (n - 1)
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    return SpectrumEstimate(grid, mean, stderr, n, hist.seed, "c_eta", {"method": "kde", "mode": hist.mode})


def kde_expectation(probs: np.ndarray, kernel: KernelSpec, n_ancilla: int, grid) -> np.ndarray:
    """Exact mean of ``kde_smooth`` given the outcome distribution."""
    return periodic_lorentzian(np.subtract.outer(np.asarray(grid, float), qpe_grid(n_ancilla)), kernel.width) @ probs


def window_cells(delta: float, n_ancilla: int) -> int:
    """Odd number of lattice cells closest to a window of length ``delta``."""
    h = 2 * math.pi / 2**n_ancilla
    k = max(0, int(round((delta / h - 1.0) / 2.0)))
    return 2 * k + 1


def _window_indices(x: float, n_ancilla: int, cells: int) -> np.ndarray:
    n_pts = 2**n_ancilla
    h = 2 * math.pi / n_pts
    centre = int(round((x + math.pi) / h)) % n_pts
    half = cells // 2
    return (centre + np.arange(-half, half + 1)) % n_pts


def windowed_estimate(hist: QPEHistogram, kernel: KernelSpec, x: float, delta: float | None = None):
    """``C_eta(x)`` from the fraction of outcomes in a window around ``x``.

    The window is an odd number of cells centred on the lattice point nearest
    ``x``, wrapping periodically; ``delta`` defaults to ``eta tau``. Returns
    ``(estimate, stderr)`` with the Bernoulli standard error.
    """
    if hist.is_empty:
        raise ValidationError("empty histogram")
    delta = kernel.width if delta is None else delta
    cells = window_cells(delta, hist.n_ancilla)
    width = cells * hist.spacing
    mass = hist.counts[_window_indices(x, hist.n_ancilla, cells)].sum() / hist.n_samples
    return float(mass / width), float(math.sqrt(mass * (1 - mass) / hist.n_samples) / width)


def windowed_expectation(probs: np.ndarray, n_ancilla: int, x: float, delta: float) -> float:
    """Exact mean of ``windowed_estimate`` given the outcome distribution."""
    cells = window_cells(delta, n_ancilla)
    width = cells * 2 * math.pi / 2**n_ancilla
    return float(probs[_window_indices(x, n_ancilla, cells)].sum() / width)


def window_bias_bound(kernel: KernelSpec, lines, n_ancilla: int, x: float, delta: float | None = None) -> float:
    """Bound on ``|E[windowed_estimate] - C_eta(x)|`` for the one-sided Lorentzian register.

    Cell ``i`` has probability ``h C_eta(x_i) f_i`` with
    ``f_i`` in ``[(1-q)/(1+q), (1+q)/(1-q)]``, ``q = exp(-eta tau 2^n)``, so the
    mean is the window average of ``C_eta`` over lattice cells up to that
    factor. Lines are ``SpectralLine`` objects in energy units.
    """
    delta = kernel.width if delta is None else delta
    cells = window_cells(delta, n_ancilla)
    xs = qpe_grid(n_ancilla)[_window_indices(x, n_ancilla, cells)]
    avg = float(np.mean(exact_c_eta(kernel, lines, xs)))
    q = math.exp(-kernel.width * 2**n_ancilla)
    return abs(avg - float(exact_c_eta(kernel, lines, x))) + avg * 2 * q / (1 - q)


def windowed_spectrum(hist: QPEHistogram, kernel: KernelSpec, grid, delta: float | None = None) -> SpectrumEstimate:
    grid = np.asarray(grid, dtype=float)
    est = np.array([windowed_estimate(hist, kernel, x, delta) for x in grid])
    return SpectrumEstimate(
        grid, est[:, 0], est[:, 1], hist.n_samples, hist.seed, "c_eta", {"method": "window", "mode": hist.mode}
    )


class QPECost(NamedTuple):
    n_samples: int
    n_samples_exact: float


def qpe_cost_model(eps: float, eta: float, tau: float, c_eta_at_x: float) -> QPECost:
    """``ceil(q (1 - q) / (eps eta)^2)`` with window probability ``q = C_eta(x) eta tau``."""
    if not (eps > 0 and eta > 0 and tau > 0) or c_eta_at_x < 0:
        raise ValidationError("eps, eta, tau must be positive and C_eta nonnegative")
    q = c_eta_at_x * eta * tau
    if q > 1:
        raise ValidationError(f"C_eta * eta * tau = {q} exceeds 1")
    exact = q * (1 - q) / (eps * eta) ** 2
    return QPECost(math.ceil(exact), exact)


def histogram_csv_text(hist: QPEHistogram) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["grid_index", "x", "count"])
    for i, (x, c) in enumerate(zip(hist.grid, hist.counts)):
        writer.writerow([i, f"{x:.17g}", int(c)])
    return buf.getvalue()


def write_histogram(path, hist: QPEHistogram) -> None:
    atomic_write_text(path, histogram_csv_text(hist))
