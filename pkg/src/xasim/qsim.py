"""Exact statevector simulation of the shared circuit primitives.

Expectation values are computed from amplitudes; the sampling helpers only draw
Bernoulli or categorical outcomes from those exact probabilities.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from xasim.errors import DarkStateError, ValidationError
from xasim.model import (
    DARK_STATE_NORM,
    DipoleOperator,
    HamiltonianModel,
    KernelSpec,
    is_hermitian,
    jordan_wigner_dipole,
)

MAX_QPE_ANCILLA = 20
MAX_FULL_REGISTER_ANCILLA = 10


def rng_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for work unit ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def amplitudes(psi) -> np.ndarray:
    return np.asarray(getattr(psi, "amplitudes", psi), dtype=complex)


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ValidationError(f"state has shape {amps.shape}, expected ({2**self.n_qubits},)")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-10:
            raise ValidationError(f"state not normalized (norm {np.linalg.norm(amps)})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amps, normalize: bool = False) -> StateVector:
        amps = np.asarray(amps, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(int(round(math.log2(amps.size))), amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> StateVector:
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def weights(self, psi) -> np.ndarray:
        """Populations ``|<E_k|psi>|^2``."""
        return np.abs(self.eigenvectors.conj().T @ amplitudes(psi)) ** 2


@dataclass(frozen=True)
class ShotOutcome:
    bit: int

    @property
    def signed(self) -> int:
        return 1 - 2 * self.bit


_EIG_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def diagonalize(ham: HamiltonianModel | np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition with ascending eigenvalues, cached per HamiltonianModel."""
    if isinstance(ham, HamiltonianModel):
        cached = _EIG_CACHE.get(ham)
        if cached is not None:
            return cached
        mat = ham.dense
    else:
        mat = np.asarray(ham, dtype=complex)
        if not is_hermitian(mat):
            raise ValidationError("cannot diagonalize a non-Hermitian matrix")
    evals, evecs = np.linalg.eigh(mat)
    recon = (evecs * evals) @ evecs.conj().T
    scale = max(np.linalg.norm(mat), 1e-300)
    if np.linalg.norm(recon - mat) > 1e-10 * scale and np.linalg.norm(mat) > 0:
        raise ValidationError("eigendecomposition failed reconstruction check")
    evals.flags.writeable = False
    evecs.flags.writeable = False
    eig = EigenDecomposition(evals, evecs)
    if isinstance(ham, HamiltonianModel):
        _EIG_CACHE[ham] = eig
    return eig


def time_evolve(psi, eig: EigenDecomposition, t: float) -> np.ndarray:
    """Return ``exp(-i H t) psi`` through the eigenbasis."""
    if not math.isfinite(t):
        raise ValidationError("evolution time must be finite")
    v = eig.eigenvectors
    coeffs = v.conj().T @ amplitudes(psi)
    return v @ (np.exp(-1j * eig.eigenvalues * t) * coeffs)


def _apply(u, psi: np.ndarray) -> np.ndarray:
    if callable(u):
        return np.asarray(u(psi), dtype=complex)
    return np.asarray(u, dtype=complex) @ psi


def _check_w(w: str) -> str:
    w = w.upper()
    if w in ("I", "IDENTITY"):
        return "I"
    if w in ("SDG", "S_DAG", "S†", "SDAGGER"):
        return "SDG"
    raise ValidationError(f"W must be 'I' or 'Sdg', got {w!r}")


def hadamard_test_expectation(psi, u: Callable | np.ndarray, w: str = "I") -> float:
    """Probability of ancilla outcome 0: ``(1 + Re<U>)/2`` for W=I, ``(1 + Im<U>)/2`` for W=S^dagger."""
    psi = amplitudes(psi)
    overlap = np.vdot(psi, _apply(u, psi))
    part = overlap.real if _check_w(w) == "I" else overlap.imag
    return float(min(1.0, max(0.0, 0.5 * (1.0 + part))))


def hadamard_test_statevector(psi, u: np.ndarray, w: str = "I") -> float:
    """Same probability from a two-register simulation: H, W, controlled-U, H on the ancilla."""
    psi = amplitudes(psi)
    u = np.asarray(u, dtype=complex)
    dim = psi.size
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    wmat = np.eye(2, dtype=complex) if _check_w(w) == "I" else np.diag([1, -1j])
    cu = np.block([[np.eye(dim), np.zeros((dim, dim))], [np.zeros((dim, dim)), u]])
    ket0 = np.array([1, 0], dtype=complex)
    state = np.kron(ket0, psi)
    for gate in (np.kron(h, np.eye(dim)), np.kron(wmat, np.eye(dim)), cu, np.kron(h, np.eye(dim))):
        state = gate @ state
    return float(np.linalg.norm(state[:dim]) ** 2)


def hadamard_test_sample(psi, u, w: str, rng: np.random.Generator) -> ShotOutcome:
    p0 = hadamard_test_expectation(psi, u, w)
    return ShotOutcome(0 if rng.random() < p0 else 1)


# ---------------------------------------------------------------------------
# Phase estimation
# ---------------------------------------------------------------------------


def qpe_grid(n_ancilla: int) -> np.ndarray:
    """Outcome lattice ``x_i = -pi + 2 pi i / 2^n`` on ``[-pi, pi)``."""
    n_pts = 2**n_ancilla
    return -math.pi + 2 * math.pi * np.arange(n_pts) / n_pts


def ancilla_weights(kernel: KernelSpec, n_ancilla: int, mode: str = "lorentzian") -> tuple[np.ndarray, np.ndarray]:
    """Register modes ``j`` and normalized amplitudes ``l_j``.

    ``lorentzian`` is one-sided, ``l_j ~ exp(-eta tau j)`` for ``j = 0..2^n-1``;
    ``symmetric`` uses ``exp(-eta tau |j|)`` for ``j = -2^(n-1)..2^(n-1)-1``;
    ``uniform`` is textbook phase estimation.
    """
    n_pts = 2**n_ancilla
    if mode == "lorentzian":
        js = np.arange(n_pts)
        w = np.exp(-kernel.width * js)
    elif mode == "symmetric":
        js = np.arange(-(n_pts // 2), n_pts - n_pts // 2)
        w = np.exp(-kernel.width * np.abs(js))
    elif mode == "uniform":
        js = np.arange(n_pts)
        w = np.ones(n_pts)
    else:
        raise ValidationError(f"unknown ancilla weight mode {mode!r}")
    return js, w / np.linalg.norm(w)


def _resolve_weights(kernel, n_ancilla, weights, js):
    if n_ancilla < 1 or n_ancilla > MAX_QPE_ANCILLA:
        raise ValidationError(f"n_ancilla={n_ancilla} outside [1, {MAX_QPE_ANCILLA}]")
    if weights is None or isinstance(weights, str):
        return ancilla_weights(kernel, n_ancilla, weights or "lorentzian")
    ells = np.asarray(weights, dtype=complex)
    js = np.arange(ells.size) if js is None else np.asarray(js, dtype=int)
    if js.shape != ells.shape or ells.size > 2**n_ancilla:
        raise ValidationError("weights do not fit the ancilla register")
    if np.unique(js % 2**n_ancilla).size != js.size:
        raise ValidationError("two modes share a register state")
    if abs(np.sum(np.abs(ells) ** 2) - 1.0) > 1e-10:
        raise ValidationError("weight normalization failure: sum |l_j|^2 != 1")
    return js, ells


def qpe_distribution(
    psi0,
    eig: EigenDecomposition,
    kernel: KernelSpec,
    n_ancilla: int | None = None,
    weights=None,
    js=None,
) -> np.ndarray:
    """Outcome probabilities on ``qpe_grid(n_ancilla)`` from the eigen-expansion.

    ``P(x) = 2^-n sum_k |g_k|^2 |sum_j l_j exp(i j (x - tau E_k))|^2``, evaluated
    with one FFT per eigen-component.
    """
    if n_ancilla is None:
        n_ancilla = kernel.n_ancilla
    js, ells = _resolve_weights(kernel, n_ancilla, weights, js)
    n_pts = 2**n_ancilla
    pops = eig.weights(psi0)
    keep = pops > 1e-300
    pops = pops[keep]
    phases = kernel.tau * eig.eigenvalues[keep]
    sign = np.where(js % 2 == 0, 1.0, -1.0)
    slots = js % n_pts
    probs = np.zeros(n_pts)
    for start in range(0, pops.size, 64):
        block = slice(start, start + 64)
        coeff = np.zeros((phases[block].size, n_pts), dtype=complex)
        coeff[:, slots] = (ells * sign)[None, :] * np.exp(-1j * np.outer(phases[block], js))
        amps = np.fft.ifft(coeff, axis=1) * n_pts
        probs += pops[block] @ (np.abs(amps) ** 2)
    probs /= n_pts
    return probs


def qpe_distribution_statevector(
    psi0,
    eig: EigenDecomposition,
    kernel: KernelSpec,
    n_ancilla: int,
    weights=None,
    js=None,
) -> np.ndarray:
    """Reference path: build the full register-times-system state and apply an explicit QFT."""
    if n_ancilla > MAX_FULL_REGISTER_ANCILLA:
        raise ValidationError("full-register simulation limited to 10 ancillas")
    js, ells = _resolve_weights(kernel, n_ancilla, weights, js)
    n_pts = 2**n_ancilla
    psi0 = amplitudes(psi0)
    state = np.zeros((n_pts, psi0.size), dtype=complex)
    for j, ell in zip(js, ells):
        state[j % n_pts] = ell * time_evolve(psi0, eig, kernel.tau * j)
    idx = np.arange(n_pts)
    qft = np.exp(2j * math.pi * np.outer(idx, idx) / n_pts) / math.sqrt(n_pts)
    out = qft @ state
    probs_std = np.sum(np.abs(out) ** 2, axis=1)
    # standard outcome i <-> phase 2 pi i / N; reorder onto [-pi, pi)
    return np.roll(probs_std, n_pts // 2)


# ---------------------------------------------------------------------------
# Dipole application by linear combination of unitaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LCUDecomposition:
    """``m = sum_i c_i U_i`` with every ``U_i`` the identity or a reflection."""

    coefficients: np.ndarray
    unitaries: tuple

    @property
    def alpha1(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def dense(self) -> np.ndarray:
        return sum(c * u for c, u in zip(self.coefficients, self.unitaries))


def lcu_decompose(m: DipoleOperator, tol: float = 1e-12) -> LCUDecomposition:
    """Reflection decomposition of a Hermitian dipole.

    With orbital coefficients available, ``m = sum_i mu_i n_i - offset`` over the
    eigen-orbitals of the one-body matrix, and ``n_i = (I - R_i)/2`` with
    ``R_i = I - 2 n_i``. Otherwise the many-body spectral projectors are used:
    ``m = sum_lam lam (I + R_lam)/2`` with ``R_lam = 2 P_lam - I``.
    """
    dim = m.dense.shape[0]
    eye = np.eye(dim, dtype=complex)
    coeffs: list[float] = []
    unitaries: list[np.ndarray] = []
    if m.one_body is not None:
        mus, vecs = np.linalg.eigh(m.one_body)
        ident = 0.5 * float(np.sum(mus)) - m.offset
        for mu, u in zip(mus, vecs.T):
            if abs(mu) <= tol:
                continue
            n_i = jordan_wigner_dipole(np.outer(u, u.conj())).dense
            coeffs.append(-0.5 * float(mu))
            unitaries.append(eye - 2 * n_i)
    else:
        lams, vecs = np.linalg.eigh(m.dense)
        ident = 0.0
        groups: list[list[int]] = []
        for k, lam in enumerate(lams):
            if groups and abs(lam - lams[groups[-1][0]]) <= 1e-10:
                groups[-1].append(k)
            else:
                groups.append([k])
        for grp in groups:
            lam = float(np.mean(lams[grp]))
            if abs(lam) <= tol:
                continue
            v = vecs[:, grp]
            proj = v @ v.conj().T
            ident += 0.5 * lam
            coeffs.append(0.5 * lam)
            unitaries.append(2 * proj - eye)
    if abs(ident) > tol:
        coeffs.insert(0, ident)
        unitaries.insert(0, eye)
    return LCUDecomposition(np.array(coeffs, dtype=float), tuple(unitaries))


def lcu_postselected_amplitude(initial, lcu: LCUDecomposition) -> np.ndarray:
    """Unnormalized system state on the ancilla-|0> branch of PREP^dag SELECT PREP.

    Equals ``m|I> / alpha1``; its squared norm is the success probability.
    """
    initial = amplitudes(initial)
    alpha1 = lcu.alpha1
    if alpha1 == 0.0:
        return np.zeros_like(initial)
    prep = np.sqrt(np.abs(lcu.coefficients) / alpha1)
    signs = np.sign(lcu.coefficients)
    branch = np.zeros_like(initial)
    for amp, sgn, u in zip(prep, signs, lcu.unitaries):
        branch += amp * (sgn * (u @ (amp * initial)))
    return branch


def lcu_success_probability(initial, m: DipoleOperator) -> float:
    lcu = lcu_decompose(m)
    return float(np.linalg.norm(lcu_postselected_amplitude(initial, lcu)) ** 2)


def lcu_apply_dipole(initial, m: DipoleOperator, rng: np.random.Generator):
    """One postselected LCU application.

    Returns ``(psi0, success, alpha1)``; ``psi0`` is ``None`` when postselection fails,
    and no further circuit runs for that shot.
    """
    if not is_hermitian(m.dense):
        raise ValidationError("dipole not Hermitian")
    lcu = lcu_decompose(m)
    branch = lcu_postselected_amplitude(initial, lcu)
    nrm = float(np.linalg.norm(branch))
    if nrm * lcu.alpha1 < DARK_STATE_NORM:
        raise DarkStateError("dark initial state: m|I> vanishes")
    success = bool(rng.random() < nrm**2)
    psi0 = branch / nrm if success else None
    return psi0, success, lcu.alpha1


class NormEstimate(NamedTuple):
    norm: float
    stderr: float


def estimate_dipole_norm(success_count: int, trials: int, alpha1: float) -> NormEstimate:
    """``||m|I>||`` from LCU postselection statistics.

    With zero successes the estimate is 0 and ``stderr`` is a one-sided bar
    ``alpha1 / sqrt(trials)`` (the norm at which seeing no successes has probability 1/e).
    """
    if trials <= 0:
        raise ValidationError("trials must be positive")
    if not 0 <= success_count <= trials:
        raise ValidationError("success_count outside [0, trials]")
    p = success_count / trials
    if success_count == 0:
        return NormEstimate(0.0, alpha1 / math.sqrt(trials))
    norm = alpha1 * math.sqrt(p)
    stderr = 0.5 * alpha1 * math.sqrt((1.0 - p) / trials)
    return NormEstimate(norm, stderr)
