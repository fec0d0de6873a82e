"""Exact classical reference spectra.

Every estimator in the package is checked against these functions. ``C_eta`` is
defined with the sign that makes it a nonnegative density,
``C_eta(x) = -Im G(x/tau) / (pi tau)`` up to periodic images; the ``1/pi``
comes from normalizing the kernel to unit area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from xasim.errors import ValidationError
from xasim.model import DipoleOperator, HamiltonianModel, KernelSpec
from xasim.qsim import amplitudes
from xasim.spectrum import SpectrumEstimate

WEIGHT_FLOOR = 1e-14
DEGENERACY_TOL = 1e-10
# speed of light in atomic units (hbar = 1, energies in Hartree)
SPEED_OF_LIGHT_AU = 1.0 / constants.fine_structure


@dataclass(frozen=True)
class SpectralLine:
    delta_e: float
    weight: float


def _dense(op) -> np.ndarray:
    return np.asarray(getattr(op, "dense", op), dtype=complex)


def exact_lines(ham, m, initial) -> list[SpectralLine]:
    """Transition energies ``E_F - E_I`` and weights ``|<F|m|I>|^2``.

    Degenerate final states are merged so the weights do not depend on the
    eigenbasis chosen inside a degenerate subspace.
    """
    h = _dense(ham)
    initial = amplitudes(initial)
    if abs(np.linalg.norm(initial) - 1.0) > 1e-10:
        raise ValidationError("initial state not normalized")
    e_i = float(np.vdot(initial, h @ initial).real)
    evals, evecs = np.linalg.eigh(h)
    amps = evecs.conj().T @ (_dense(m) @ initial)
    weights = np.abs(amps) ** 2
    lines = []
    k = 0
    while k < evals.size:
        stop = k + 1
        while stop < evals.size and evals[stop] - evals[k] <= DEGENERACY_TOL:
            stop += 1
        w = float(weights[k:stop].sum())
        if w > WEIGHT_FLOOR:
            lines.append(SpectralLine(float(evals[k:stop].mean()) - e_i, w))
        k = stop
    return lines


def _line_arrays(lines) -> tuple[np.ndarray, np.ndarray]:
    de = np.array([ln.delta_e for ln in lines], dtype=float)
    w = np.array([ln.weight for ln in lines], dtype=float)
    return de, w


def green_from_lines(lines, omega, eta: float):
    """Normalized ``G(omega) = sum_F p_F / (dE_F - omega + i eta)``."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    de, w = _line_arrays(lines)
    p = w / w.sum()
    om = np.asarray(omega, dtype=float)
    out = (p[None, :] / (de[None, :] - om.reshape(-1, 1) + 1j * eta)).sum(axis=1)
    return out.reshape(om.shape) if om.ndim else complex(out[0])


def green_resolvent(ham, m, initial, omega, eta: float, normalized: bool = True):
    """``<I|m (H - E_I - omega + i eta)^-1 m|I>`` by dense linear solves."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    h = _dense(ham)
    initial = amplitudes(initial)
    e_i = float(np.vdot(initial, h @ initial).real)
    vec = _dense(m) @ initial
    nrm2 = float(np.vdot(vec, vec).real)
    if normalized:
        vec = vec / math.sqrt(nrm2)
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    eye = np.eye(h.shape[0])
    out = np.empty(om.size, dtype=complex)
    for i, w in enumerate(om):
        out[i] = np.vdot(vec, np.linalg.solve(h - (e_i + w - 1j * eta) * eye, vec))
    return out.reshape(np.shape(omega)) if np.ndim(omega) else complex(out[0])


def exact_green(ham, m, initial, omega, eta: float, method: str = "lines"):
    if method == "lines":
        return green_from_lines(exact_lines(ham, m, initial), omega, eta)
    if method == "resolvent":
        return green_resolvent(ham, m, initial, omega, eta)
    raise ValidationError(f"unknown method {method!r}")


def time_green(lines, t) -> np.ndarray:
    """``G~(t) = sum_k p_k exp(-i t dE_k)``, the expectation of ``exp(-i H' t)`` in psi0."""
    de, w = _line_arrays(lines)
    p = w / w.sum()
    t = np.asarray(t, dtype=float)
    return (p * np.exp(-1j * np.multiply.outer(t, de))).sum(axis=-1)


# ---------------------------------------------------------------------------
# Periodic Lorentzian kernel
# ---------------------------------------------------------------------------


def periodic_lorentzian(y, width: float):
    """``(1/pi) sum_n a / ((y - 2 pi n)^2 + a^2)`` in closed form, ``a = width``.

    Written as ``sinh(a) / (4 pi (sinh^2(a/2) + sin^2(y/2)))`` to avoid cancellation
    near the peak.
    """
    y = np.asarray(y, dtype=float)
    return np.sinh(width) / (4 * math.pi * (np.sinh(width / 2) ** 2 + np.sin(y / 2) ** 2))


def periodic_lorentzian_images(y, width: float, n_images: int = 10_000, tail: bool = True):
    """Direct image sum over ``|n| <= n_images``.

    With ``tail`` the images beyond the cutoff are added as the midpoint-rule
    integral ``atan(a / (2 pi (N + 1/2) -+ y)) / (2 pi^2)`` on each side; without it
    the truncation error is about ``a / (2 pi^3 N)``.
    """
    y_in = np.asarray(y, dtype=float)
    yy = np.atleast_1d(y_in)
    n = np.arange(-n_images, n_images + 1)
    # sum smallest terms first
    order = np.argsort(-np.abs(n), kind="stable")
    shifted = yy[:, None] - 2 * math.pi * n[order][None, :]
    out = (width / (shifted**2 + width**2)).sum(axis=1) / math.pi
    if tail:
        edge = 2 * math.pi * (n_images + 0.5)
        out = out + (np.arctan(width / (edge - yy)) + np.arctan(width / (edge + yy))) / (2 * math.pi**2)
    return out.reshape(y_in.shape) if y_in.ndim else float(out[0])


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < -math.pi) or np.any(x >= math.pi):
        raise ValidationError("x must lie in [-pi, pi)")
    return x


def exact_c_eta(kernel: KernelSpec, lines, x):
    """``C_eta(x) = sum_k p_k L_eta(x - tau dE_k)`` with the closed-form kernel."""
    x = _check_x(x)
    de, w = _line_arrays(lines)
    p = w / w.sum()
    y = np.subtract.outer(x, kernel.tau * de)
    return (periodic_lorentzian(y, kernel.width) * p).sum(axis=-1)


def truncated_c_eta(kernel: KernelSpec, lines, x):
    """Fourier series ``(1/2 pi) sum_{|j|<=j_max} L_j G~(tau j) exp(i j x)`` (real part).

    This is the exact expectation of the time-domain estimator; it differs from
    ``exact_c_eta`` by at most ``kernel.truncation_bound``.
    """
    x = _check_x(x)
    js = kernel.js
    gt = time_green(lines, kernel.tau * js)
    series = (kernel.coeffs * gt)[None, :] * np.exp(1j * np.multiply.outer(np.atleast_1d(x), js))
    out = series.sum(axis=1) / (2 * math.pi)
    return out.real.reshape(x.shape) if x.ndim else float(out.real[0])


# ---------------------------------------------------------------------------
# Cross section
# ---------------------------------------------------------------------------


def cross_section_prefactor(omega) -> np.ndarray:
    """``4 pi omega / (3 c)`` in atomic units."""
    return 4 * math.pi * np.asarray(omega, dtype=float) / (3 * SPEED_OF_LIGHT_AU)


def _components(dipoles):
    if isinstance(dipoles, dict):
        return list(dipoles.values())
    if isinstance(dipoles, (DipoleOperator, np.ndarray)):
        return [dipoles]
    return list(dipoles)


def cross_section_direct(ham, dipoles, initial, omega, eta: float, prefactor_on: bool = False) -> np.ndarray:
    """Kramers-Heisenberg sum over final states ``F != I``."""
    initial = amplitudes(initial)
    om = np.asarray(omega, dtype=float)
    total = np.zeros(om.shape)
    for m in _components(dipoles):
        md = _dense(m)
        # removing the I component of m|I> drops the F = I term
        m_inel = md - np.vdot(initial, md @ initial) * np.eye(md.shape[0])
        for line in exact_lines(ham, m_inel, initial):
            total += line.weight * eta / ((line.delta_e - om) ** 2 + eta**2)
    return total * cross_section_prefactor(om) if prefactor_on else total


def exact_cross_section(
    ham,
    dipoles,
    initial,
    omega_grid,
    eta: float,
    prefactor_on: bool = False,
    method: str = "resolvent",
) -> SpectrumEstimate:
    """Cross section through the Green's function route.

    ``sigma = -pref * sum_rho [ Im calG_rho(omega) - |<I|m|I>|^2 Im 1/(-omega + i eta) ]``
    with ``calG_rho = ||m_rho|I>||^2 G_rho``. The second term vanishes for
    expectation-subtracted dipoles.
    """
    om = np.asarray(omega_grid, dtype=float)
    if om.size > 1 and np.any(np.diff(om) <= 0):
        raise ValidationError("omega grid must be ascending")
    initial = amplitudes(initial)
    total = np.zeros(om.shape)
    for m in _components(dipoles):
        md = _dense(m)
        vec = md @ initial
        nrm2 = float(np.vdot(vec, vec).real)
        if nrm2 <= WEIGHT_FLOOR:
            continue
        g = exact_green(ham, md, initial, om, eta, method=method)
        elastic = abs(np.vdot(initial, vec)) ** 2 * np.imag(1.0 / (-om + 1j * eta))
        total += -(nrm2 * np.imag(g) - elastic)
    sigma = total * cross_section_prefactor(om) if prefactor_on else total
    return SpectrumEstimate(
        grid=om,
        value=sigma,
        stderr=np.zeros(om.shape),
        n_samples=0,
        quantity="sigma",
        meta={"prefactor_on": prefactor_on, "method": method},
    )
