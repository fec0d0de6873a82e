"""Frequency-domain resolvent estimator.

The circuit is ``U = U_QPE^dag U_CR U_QPE`` inside a Hadamard test with the
S^dagger gate, so the ancilla statistics satisfy ``2 p0 - 1 = c Im G(omega)``.
Phase estimation is ideal: the register holds ``lambda_k``, either exactly or
rounded to the ``n``-bit lattice of spacing ``2 pi / (tau 2^n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from xasim.errors import ValidationError
from xasim.qsim import EigenDecomposition, amplitudes, rng_stream
from xasim.spectrum import SpectrumEstimate


def round_to_register(values, tau: float, n_ancilla: int) -> np.ndarray:
    step = 2 * math.pi / (tau * 2**n_ancilla)
    return np.round(np.asarray(values, dtype=float) / step) * step


@dataclass(frozen=True, eq=False)
class ResolventAction:
    """Per-eigenstate effect of the resolvent circuit on ``sum_k beta_k |E_k>``.

    ``success[k] = c / (lambda_k + i eta)`` is the amplitude on rotation-qubit
    outcome 0 and ``failure[k]`` the (real) amplitude on outcome 1.
    """

    weights: np.ndarray
    lam: np.ndarray
    success: np.ndarray
    failure: np.ndarray
    c: float

    @property
    def expectation(self) -> complex:
        """``<0,0,psi0| U |0,0,psi0>``; the register returns to 0 after uncompute."""
        return complex(np.sum(self.weights * self.success))

    @property
    def p0(self) -> float:
        """Hadamard-ancilla probability of 0 with the S^dagger gate."""
        return float(min(1.0, max(0.0, 0.5 * (1.0 + self.expectation.imag))))


def apply_resolvent_circuit(
    psi0,
    eig: EigenDecomposition,
    omega: float,
    eta: float,
    c: float | None = None,
    n_ancilla: int | None = None,
    tau: float | None = None,
) -> ResolventAction:
    """Analytic action of the resolvent circuit; ``n_ancilla=None`` keeps ``lambda_k`` exact."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    c = eta if c is None else float(c)
    if not c > 0:
        raise ValidationError("c must be positive")
    weights = eig.weights(psi0)
    lam = eig.eigenvalues - omega
    if n_ancilla is not None:
        if tau is None:
            raise ValidationError("rounding to the phase register needs tau")
        lam = round_to_register(lam, tau, n_ancilla)
    mag = np.sqrt(lam**2 + eta**2)
    live = weights > 0
    if np.any(c > mag[live] * (1 + 1e-12)):
        raise ValidationError(f"c={c} exceeds min sqrt(lambda^2 + eta^2)={mag[live].min()}")
    success = c / (lam + 1j * eta)
    failure = np.sqrt(np.clip(1.0 - (c / mag) ** 2, 0.0, None))
    return ResolventAction(weights, lam, success, failure, c)


def resolvent_circuit_statevector(
    psi0,
    eig: EigenDecomposition,
    omega: float,
    eta: float,
    c: float,
    n_ancilla: int,
    tau: float,
) -> complex:
    """``<0,0,psi0|U|0,0,psi0>`` from an explicit rotation x register x system state.

    Ideal phase estimation shifts the register by the signed integer
    ``round((E_k - omega) tau 2^n / 2 pi)`` on each eigencomponent; the controlled
    rotation reads the register back as ``lambda``.
    """
    n_pts = 2**n_ancilla
    step = 2 * math.pi / (tau * n_pts)
    psi0 = amplitudes(psi0)
    beta = eig.eigenvectors.conj().T @ psi0
    shift = np.round((eig.eigenvalues - omega) / step).astype(int)
    signed = np.where(np.arange(n_pts) < n_pts // 2, np.arange(n_pts), np.arange(n_pts) - n_pts)
    lam_of_reg = signed * step
    mag = np.sqrt(lam_of_reg**2 + eta**2)
    rot0 = c / (lam_of_reg + 1j * eta)
    rot1 = np.sqrt(np.clip(1.0 - (c / mag) ** 2, 0.0, None))
    # state[rotation, register, eigencomponent]
    state = np.zeros((2, n_pts, beta.size), dtype=complex)
    state[0, 0, :] = beta
    # U_QPE
    state = np.stack([np.stack([np.roll(state[b][:, k], shift[k]) for k in range(beta.size)], axis=1) for b in range(2)])
    # U_CR, rotation qubit starts in 0
    new = np.zeros_like(state)
    new[0] = rot0[:, None] * state[0]
    new[1] = rot1[:, None] * state[0]
    # U_QPE^dag
    state = np.stack([np.stack([np.roll(new[b][:, k], -shift[k]) for k in range(beta.size)], axis=1) for b in range(2)])
    ref = np.zeros_like(state)
    ref[0, 0, :] = beta
    return complex(np.vdot(ref, state))


class FDEstimate(NamedTuple):
    im_g: float
    stderr: float
    p0_hat: float


def fd_point_estimate(
    psi0,
    eig: EigenDecomposition,
    omega: float,
    eta: float,
    n_samples: int,
    seed: int,
    c: float | None = None,
    n_ancilla: int | None = None,
    tau: float | None = None,
    stream: int = 0,
) -> FDEstimate:
    """Sampled ``Im G(omega) = (2 p0_hat - 1) / c`` with its binomial standard error."""
    if n_samples < 1:
        raise ValidationError("n_samples must be at least 1")
    action = apply_resolvent_circuit(psi0, eig, omega, eta, c, n_ancilla, tau)
    zeros = int(rng_stream(seed, stream).binomial(n_samples, action.p0))
    p_hat = zeros / n_samples
    im_g = (2 * p_hat - 1) / action.c
    stderr = 2 * math.sqrt(p_hat * (1 - p_hat) / n_samples) / action.c
    return FDEstimate(im_g, stderr, p_hat)


def run_freq_domain(
    psi0,
    eig: EigenDecomposition,
    omegas,
    eta: float,
    n_samples: int,
    seed: int,
    c: float | None = None,
    n_ancilla: int | None = None,
    tau: float | None = None,
) -> SpectrumEstimate:
    """Independent point estimates at each requested frequency (and nowhere else)."""
    omegas = np.asarray(omegas, dtype=float)
    est = [
        fd_point_estimate(psi0, eig, w, eta, n_samples, seed, c, n_ancilla, tau, stream=i)
        for i, w in enumerate(omegas)
    ]
    return SpectrumEstimate(
        grid=omegas,
        value=np.array([e.im_g for e in est]),
        stderr=np.array([e.stderr for e in est]),
        n_samples=n_samples,
        seed=seed,
        quantity="im_g",
        meta={"p0_hat": np.array([e.p0_hat for e in est]), "n_ancilla": n_ancilla},
    )


def rounding_bias_bound(weights, eigenvalues, omega: float, eta: float, tau: float, n_ancilla: int) -> float:
    """Bound on ``|Im G_rounded - Im G|`` from at most half a lattice step per eigenvalue.

    Uses ``|d/dlam Im 1/(lam + i eta)| <= 3 sqrt(3) / (8 eta^2)``.
    """
    half_step = math.pi / (tau * 2**n_ancilla)
    return float(np.sum(weights)) * half_step * 3 * math.sqrt(3) / (8 * eta**2)


class FDCost(NamedTuple):
    n_samples: int
    n_samples_exact: float


def fd_cost_model(eps: float, eta: float, p0: float) -> FDCost:
    """``ceil(p0 (1 - p0) / (eps eta)^2)``.

    With the constant 1 this resolves ``p0`` to ``eps * eta``, which is ``Im G``
    to ``2 eps``.
    """
    if not 0 <= p0 <= 1:
        raise ValidationError("p0 must lie in [0, 1]")
    if not (eps > 0 and eta > 0):
        raise ValidationError("eps and eta must be positive")
    exact = p0 * (1 - p0) / (eps * eta) ** 2
    return FDCost(math.ceil(exact), exact)
