"""Problem inputs: fermionic and qubit Hamiltonians, dipole operators, CVS, kernel setup.

Conventions used throughout the package:

* Occupation basis index ``k = sum_p n_p 2**p``; spin-orbital ``p`` lives on qubit ``p``
  and qubit 0 is the least significant bit.
* Pauli strings are written most-significant qubit first, so ``"XIZ"`` puts X on
  qubit 2 and Z on qubit 0, and the dense matrix is the Kronecker product of the
  characters in reading order.
* Two-body integrals use the physicist convention
  ``H = sum h_pq a+_p a_q + 1/2 sum g_pqrs a+_p a+_q a_s a_r`` with ``g_pqrs = <pq|rs>``.
* Energies are Hartree internally; files tagged ``"ev"`` are converted on load.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from xasim.errors import DarkStateError, ValidationError

HARTREE_TO_EV = 27.211386245988
MAX_DENSE_QUBITS = 12
MAX_SPIN_ORBITALS = 8
HERMITIAN_RTOL = 1e-10
DARK_STATE_NORM = 1e-12

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def is_hermitian(mat: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    """Relative Frobenius-norm test ``||A - A^H|| <= rtol * ||A||``."""
    mat = np.asarray(mat)
    scale = np.linalg.norm(mat)
    if scale == 0.0:
        return True
    return bool(np.linalg.norm(mat - mat.conj().T) <= rtol * scale)


# ---------------------------------------------------------------------------
# Pauli strings
# ---------------------------------------------------------------------------


def pauli_string_matrix(label: str) -> np.ndarray:
    label = label.upper()
    if not label or any(ch not in _PAULI for ch in label):
        raise ValidationError(f"bad Pauli string {label!r}")
    out = np.array([[1.0 + 0j]])
    for ch in label:
        out = np.kron(out, _PAULI[ch])
    return out


def pauli_to_dense(terms, n_qubits: int) -> np.ndarray:
    dim = 2**n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, label in terms:
        if len(label) != n_qubits:
            raise ValidationError(f"Pauli string {label!r} does not act on {n_qubits} qubits")
        out += coeff * pauli_string_matrix(label)
    return out


def pauli_decompose(dense: np.ndarray, tol: float = 1e-12) -> list[tuple[float, str]]:
    """Expand a Hermitian matrix in Pauli strings, dropping coefficients below ``tol``."""
    dense = np.asarray(dense)
    n = int(round(math.log2(dense.shape[0])))
    terms = []
    for chars in itertools.product("IXYZ", repeat=n):
        label = "".join(chars)
        c = np.trace(pauli_string_matrix(label) @ dense) / 2**n
        if abs(c) > tol:
            terms.append((float(c.real), label))
    return terms


# ---------------------------------------------------------------------------
# Jordan-Wigner building blocks
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def annihilators(n_modes: int) -> tuple[sp.csr_matrix, ...]:
    """Sparse Jordan-Wigner images of ``a_p`` for ``p = 0..n_modes-1``.

    ``a_p = Z_0 ... Z_{p-1} (|0><1|)_p`` with qubit 0 least significant.
    """
    lower = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    z = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
    eye = sp.identity(2, dtype=complex, format="csr")
    ops = []
    for p in range(n_modes):
        # Kronecker order runs from qubit n-1 down to qubit 0
        factors = []
        for q in reversed(range(n_modes)):
            factors.append(lower if q == p else (z if q < p else eye))
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return tuple(ops)


def number_operator_diagonal(n_modes: int) -> np.ndarray:
    idx = np.arange(2**n_modes)
    return np.array([bin(i).count("1") for i in idx], dtype=float)


def one_body_to_sparse(coeffs: np.ndarray) -> sp.csr_matrix:
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[0]
    a = annihilators(n)
    dim = 2**n
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for p, q in zip(*np.nonzero(coeffs)):
        out = out + coeffs[p, q] * (a[p].T.conj() @ a[q])
    return out


def two_body_to_sparse(g: np.ndarray) -> sp.csr_matrix:
    g = np.asarray(g)
    n = g.shape[0]
    a = annihilators(n)
    adag = [op.T.conj().tocsr() for op in a]
    dim = 2**n
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for p in range(n):
        for q in range(n):
            if p == q or not np.any(g[p, q]):
                continue
            # 1/2 sum_rs g_pqrs a_s a_r for this (p, q)
            right = sp.csr_matrix((dim, dim), dtype=complex)
            for r, s in zip(*np.nonzero(g[p, q])):
                if r == s:
                    continue
                right = right + g[p, q, r, s] * (a[s] @ a[r])
            out = out + 0.5 * (adag[p] @ adag[q] @ right)
    return out


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


def _symmetry_images(p: int, q: int, r: int, s: int) -> set[tuple[int, int, int, int]]:
    # 8-fold symmetry of <pq|rs> over real orbitals
    return {
        (p, q, r, s),
        (r, q, p, s),
        (p, s, r, q),
        (r, s, p, q),
        (q, p, s, r),
        (s, p, q, r),
        (q, r, s, p),
        (s, r, q, p),
    }


_SYMMETRY_AXES = [(2, 1, 0, 3), (0, 3, 2, 1), (2, 3, 0, 1), (1, 0, 3, 2)]


@dataclass(frozen=True, eq=False)
class FermionModel:
    """Second-quantized electronic model over spin orbitals.

    ``dipoles`` maps a component label (x/y/z) to the one-body coefficient matrix
    of that dipole component.
    """

    n_spin_orbitals: int
    one_body: np.ndarray
    two_body: np.ndarray
    core_indices: frozenset = frozenset()
    n_electrons: int = 0
    dipoles: dict = field(default_factory=dict)
    units: str = "hartree"

    def __post_init__(self):
        n = self.n_spin_orbitals
        if n < 1 or n > MAX_SPIN_ORBITALS:
            raise ValidationError(f"n_spin_orbitals={n} outside [1, {MAX_SPIN_ORBITALS}]")
        h = np.asarray(self.one_body, dtype=complex)
        g = np.asarray(self.two_body)
        if h.shape != (n, n):
            raise ValidationError(f"one-body shape {h.shape} != ({n}, {n})")
        if g.shape != (n, n, n, n):
            raise ValidationError(f"two-body shape {g.shape} != ({n},)*4")
        if np.iscomplexobj(g):
            if np.any(np.abs(g.imag) > 0):
                raise ValidationError("two-body integrals must be real")
            g = g.real
        g = g.astype(float)
        if not is_hermitian(h):
            raise ValidationError("one-body not Hermitian")
        scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
        for axes in _SYMMETRY_AXES:
            if not np.allclose(g, g.transpose(axes), rtol=0, atol=1e-10 * scale):
                raise ValidationError("two-body symmetry violation")
        core = frozenset(int(c) for c in self.core_indices)
        if any(c < 0 or c >= n for c in core):
            raise ValidationError(f"core index out of range in {sorted(core)}")
        if not 0 <= self.n_electrons <= n:
            raise ValidationError(f"n_electrons={self.n_electrons} outside [0, {n}]")
        dips = {}
        for label, m in self.dipoles.items():
            if label not in ("x", "y", "z"):
                raise ValidationError(f"unknown dipole component {label!r}")
            m = np.asarray(m, dtype=complex)
            if m.shape != (n, n):
                raise ValidationError(f"dipole {label} shape {m.shape} != ({n}, {n})")
            if not is_hermitian(m):
                raise ValidationError(f"dipole {label} not Hermitian")
            dips[label] = _frozen(m)
        object.__setattr__(self, "one_body", _frozen(h))
        object.__setattr__(self, "two_body", _frozen(g))
        object.__setattr__(self, "core_indices", core)
        object.__setattr__(self, "dipoles", dips)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    n_qubits: int
    dense: np.ndarray
    pauli_terms: tuple | None = None
    energy_shift: float = 0.0
    n_electrons: int | None = None

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > MAX_DENSE_QUBITS:
            raise ValidationError(f"n_qubits={self.n_qubits} outside [1, {MAX_DENSE_QUBITS}]")
        dense = np.asarray(self.dense, dtype=complex)
        dim = 2**self.n_qubits
        if dense.shape != (dim, dim):
            raise ValidationError(f"dense shape {dense.shape} != ({dim}, {dim})")
        if not is_hermitian(dense):
            raise ValidationError("Hamiltonian not Hermitian")
        if self.pauli_terms is not None:
            terms = tuple((float(c), str(s).upper()) for c, s in self.pauli_terms)
            expanded = pauli_to_dense(terms, self.n_qubits)
            scale = max(1.0, np.linalg.norm(dense))
            if np.linalg.norm(expanded - dense) > 1e-10 * scale:
                raise ValidationError("Pauli terms disagree with dense matrix")
            object.__setattr__(self, "pauli_terms", terms)
        object.__setattr__(self, "dense", _frozen(dense))

    @classmethod
    def from_pauli(cls, terms, n_qubits: int | None = None, **kw) -> HamiltonianModel:
        terms = [(float(c), str(s).upper()) for c, s in terms]
        if n_qubits is None:
            n_qubits = len(terms[0][1])
        return cls(n_qubits, pauli_to_dense(terms, n_qubits), tuple(terms), **kw)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def shifted(self, e: float) -> HamiltonianModel:
        """Return ``H - e * Identity``, recording the cumulative shift."""
        terms = None
        if self.pauli_terms is not None:
            ident = "I" * self.n_qubits
            acc: dict[str, float] = {}
            for c, s in self.pauli_terms:
                acc[s] = acc.get(s, 0.0) + c
            acc[ident] = acc.get(ident, 0.0) - e
            terms = tuple((c, s) for s, c in acc.items())
        return replace(
            self,
            dense=self.dense - e * np.eye(self.dim),
            pauli_terms=terms,
            energy_shift=self.energy_shift + e,
        )


@dataclass(frozen=True, eq=False)
class DipoleOperator:
    """Dense dipole component on the qubit register.

    ``one_body`` keeps the orbital coefficient matrix when the operator came from a
    fermionic model, and ``offset`` records a subtracted multiple of the identity,
    so ``dense == JW(one_body) - offset * I`` whenever ``one_body`` is set.
    """

    n_qubits: int
    dense: np.ndarray
    component_label: str = "x"
    expectation_subtracted: bool = False
    reference: np.ndarray | None = None
    one_body: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        dense = np.asarray(self.dense, dtype=complex)
        dim = 2**self.n_qubits
        if dense.shape != (dim, dim):
            raise ValidationError(f"dipole shape {dense.shape} != ({dim}, {dim})")
        if self.component_label not in ("x", "y", "z"):
            raise ValidationError(f"unknown dipole component {self.component_label!r}")
        if not is_hermitian(dense):
            raise ValidationError("dipole not Hermitian")
        object.__setattr__(self, "dense", _frozen(dense))
        if self.reference is not None:
            ref = _frozen(np.asarray(self.reference, dtype=complex))
            object.__setattr__(self, "reference", ref)
            if self.expectation_subtracted:
                expval = np.vdot(ref, dense @ ref)
                if abs(expval) > 1e-10:
                    raise ValidationError(f"<I|m|I> = {expval:.3e} after subtraction")
        if self.one_body is not None:
            object.__setattr__(self, "one_body", _frozen(np.asarray(self.one_body, dtype=complex)))

    @classmethod
    def from_pauli(cls, terms, n_qubits: int | None = None, **kw) -> DipoleOperator:
        terms = [(float(c), str(s).upper()) for c, s in terms]
        if n_qubits is None:
            n_qubits = len(terms[0][1])
        return cls(n_qubits, pauli_to_dense(terms, n_qubits), **kw)


@dataclass(frozen=True, eq=False)
class QubitModel:
    """A qubit Hamiltonian together with its dipole components."""

    hamiltonian: HamiltonianModel
    dipoles: dict
    units: str = "hartree"
    core_indices: frozenset = frozenset()

    @property
    def n_electrons(self) -> int | None:
        return self.hamiltonian.n_electrons


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _number(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex entry must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _complex_matrix(rows) -> np.ndarray:
    return np.array([[_number(v) for v in row] for row in rows], dtype=complex)


def _energy_scale(units: str) -> float:
    units = units.lower()
    if units == "hartree":
        return 1.0
    if units == "ev":
        return 1.0 / HARTREE_TO_EV
    raise ValidationError(f"unknown units tag {units!r}; expected 'hartree' or 'ev'")


def _expand_two_body(entries, n: int, symmetry: str) -> np.ndarray:
    g = np.zeros((n, n, n, n))
    filled: dict[tuple, float] = {}
    for entry in entries:
        if len(entry) != 5:
            raise ValidationError(f"two-body entry must be [p, q, r, s, value], got {entry!r}")
        p, q, r, s = (int(i) for i in entry[:4])
        val = float(entry[4])
        if any(i < 0 or i >= n for i in (p, q, r, s)):
            raise ValidationError(f"two-body index out of range in {entry!r}")
        targets = _symmetry_images(p, q, r, s) if symmetry == "8-fold" else {(p, q, r, s)}
        for t in targets:
            if t in filled and abs(filled[t] - val) > 1e-12 * max(1.0, abs(val)):
                raise ValidationError(f"two-body symmetry violation at {t}")
            filled[t] = val
            g[t] = val
    return g


def load_fermion_model(path) -> FermionModel:
    """Read a fermionic model file (JSON).

    Required keys: ``n_spin_orbitals``, ``n_electrons``, ``h``. Optional:
    ``core_indices``, ``g`` (list of ``[p, q, r, s, value]``), ``dipole``
    (component -> list of ``[a, b, value]``), ``units`` (``"hartree"`` or ``"ev"``),
    ``convention`` (must be ``"physicist"``), ``g_symmetry`` (``"8-fold"`` fills in
    the symmetry images of every listed entry; ``"explicit"`` takes entries as given).
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"parse error in {path}: {exc}") from exc
    return fermion_model_from_dict(data)


def fermion_model_from_dict(data: dict) -> FermionModel:
    try:
        n = int(data["n_spin_orbitals"])
        n_el = int(data["n_electrons"])
        h_raw = data["h"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"parse error: missing field {exc}") from exc
    if n < 1 or n > MAX_SPIN_ORBITALS:
        raise ValidationError(f"n_spin_orbitals={n} outside [1, {MAX_SPIN_ORBITALS}]")
    if data.get("convention", "physicist") != "physicist":
        raise ValidationError("only the physicist <pq|rs> convention is supported")
    symmetry = data.get("g_symmetry", "8-fold")
    if symmetry not in ("8-fold", "explicit"):
        raise ValidationError(f"unknown g_symmetry {symmetry!r}")
    units = str(data.get("units", "hartree")).lower()
    scale = _energy_scale(units)
    h = _complex_matrix(h_raw)
    if h.shape != (n, n):
        raise ValidationError(f"one-body shape {h.shape} != ({n}, {n})")
    g = _expand_two_body(data.get("g", []), n, symmetry)
    dipoles = {}
    for label, entries in data.get("dipole", {}).items():
        m = np.zeros((n, n), dtype=complex)
        seen: dict[tuple, complex] = {}
        for entry in entries:
            a, b = int(entry[0]), int(entry[1])
            if not (0 <= a < n and 0 <= b < n):
                raise ValidationError(f"dipole index out of range in {entry!r}")
            val = _number(entry[2])
            for key, v in (((a, b), val), ((b, a), val.conjugate())):
                if key in seen and abs(seen[key] - v) > 1e-12:
                    raise ValidationError(f"dipole {label} not Hermitian at {key}")
                seen[key] = v
                m[key] = v
        dipoles[label] = m
    return FermionModel(
        n_spin_orbitals=n,
        one_body=h * scale,
        two_body=g * scale,
        core_indices=frozenset(data.get("core_indices", [])),
        n_electrons=n_el,
        dipoles=dipoles,
        units=units,
    )


def _operator_from_spec(spec: dict, n_qubits: int, scale: float = 1.0) -> tuple[np.ndarray, tuple | None]:
    if "pauli" in spec:
        terms = tuple((float(c) * scale, str(s).upper()) for c, s in spec["pauli"])
        return pauli_to_dense(terms, n_qubits), terms
    if "dense" in spec:
        return _complex_matrix(spec["dense"]) * scale, None
    raise ValidationError("operator needs a 'pauli' or 'dense' entry")


def qubit_model_from_dict(data: dict) -> QubitModel:
    try:
        n = int(data["n_qubits"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"parse error: missing field {exc}") from exc
    units = str(data.get("units", "hartree")).lower()
    scale = _energy_scale(units)
    dense, terms = _operator_from_spec(data, n, scale)
    n_el = data.get("n_electrons")
    ham = HamiltonianModel(n, dense, terms, n_electrons=None if n_el is None else int(n_el))
    dipoles = {}
    for label, spec in data.get("dipole", {}).items():
        d, _ = _operator_from_spec(spec, n)
        dipoles[label] = DipoleOperator(n, d, component_label=label)
    return QubitModel(ham, dipoles, units)


def load_model(path) -> FermionModel | QubitModel:
    """Load either file flavour, dispatching on ``n_spin_orbitals`` vs ``n_qubits``."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"input file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"parse error in {path}: {exc}") from exc
    if "n_spin_orbitals" in data:
        return fermion_model_from_dict(data)
    if "n_qubits" in data:
        return qubit_model_from_dict(data)
    raise ValidationError("parse error: file has neither n_spin_orbitals nor n_qubits")


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------


def apply_cvs(model: FermionModel) -> FermionModel:
    """Core-valence separation: drop every two-electron integral touching a core orbital.

    One-body terms are kept as they are.
    """
    if not model.core_indices:
        raise ValidationError("CVS requested but no core orbital")
    g = np.array(model.two_body, copy=True)
    core = sorted(model.core_indices)
    for axis in range(4):
        index = [slice(None)] * 4
        index[axis] = core
        g[tuple(index)] = 0.0
    return replace(model, two_body=g)


def filter_dipole_to_core(m: np.ndarray, core) -> np.ndarray:
    """Keep only coefficients ``m_ab`` with exactly one of ``a, b`` in the core."""
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m):
        raise ValidationError("dipole coefficients not Hermitian")
    in_core = np.zeros(m.shape[0], dtype=bool)
    in_core[list(core)] = True
    keep = in_core[:, None] ^ in_core[None, :]
    return np.where(keep, m, 0.0)


def cvs_model(model: FermionModel) -> FermionModel:
    """``apply_cvs`` followed by core filtering of every dipole component."""
    reduced = apply_cvs(model)
    dips = {k: filter_dipole_to_core(v, model.core_indices) for k, v in model.dipoles.items()}
    return replace(reduced, dipoles=dips)


def jordan_wigner(model: FermionModel, with_pauli: bool = False) -> HamiltonianModel:
    n = model.n_spin_orbitals
    op = one_body_to_sparse(model.one_body) + two_body_to_sparse(model.two_body)
    dense = op.toarray()
    # remove rounding-level anti-Hermitian residue from sparse accumulation
    dense = 0.5 * (dense + dense.conj().T)
    terms = tuple(pauli_decompose(dense)) if with_pauli else None
    return HamiltonianModel(n, dense, terms, n_electrons=model.n_electrons)


def jordan_wigner_dipole(coeffs: np.ndarray, component_label: str = "x") -> DipoleOperator:
    coeffs = np.asarray(coeffs, dtype=complex)
    n = coeffs.shape[0]
    dense = one_body_to_sparse(coeffs).toarray()
    return DipoleOperator(n, dense, component_label=component_label, one_body=coeffs)


def to_qubit_model(model: FermionModel) -> QubitModel:
    ham = jordan_wigner(model)
    dips = {k: jordan_wigner_dipole(v, k) for k, v in model.dipoles.items()}
    return QubitModel(ham, dips, model.units, model.core_indices)


def ground_state(ham: HamiltonianModel, n_electrons: int | None = None) -> tuple[float, np.ndarray]:
    """Lowest eigenpair, restricted to the ``n_electrons`` occupation sector if given."""
    if n_electrons is None:
        n_electrons = ham.n_electrons
    dim = ham.dim
    if n_electrons is None:
        idx = np.arange(dim)
    else:
        idx = np.flatnonzero(number_operator_diagonal(ham.n_qubits) == n_electrons)
        if idx.size == 0:
            raise ValidationError(f"no basis states with {n_electrons} electrons")
    block = ham.dense[np.ix_(idx, idx)]
    evals, evecs = np.linalg.eigh(block)
    vec = np.zeros(dim, dtype=complex)
    vec[idx] = evecs[:, 0]
    # fix the global phase so the largest amplitude is real positive
    k = np.argmax(np.abs(vec))
    vec *= np.exp(-1j * np.angle(vec[k]))
    return float(evals[0]), vec


class ShiftedProblem(NamedTuple):
    hamiltonian: HamiltonianModel
    psi0: np.ndarray
    norm: float
    dipole: DipoleOperator


def shift_and_normalize(ham: HamiltonianModel, initial: np.ndarray, dipole: DipoleOperator) -> ShiftedProblem:
    """Translate ``H -> H - E_I``, subtract ``<I|m|I>`` and normalize ``m|I>``."""
    initial = np.asarray(getattr(initial, "amplitudes", initial), dtype=complex)
    nrm = np.linalg.norm(initial)
    if abs(nrm - 1.0) > 1e-10:
        raise ValidationError(f"initial state not normalized (norm {nrm})")
    e_i = float(np.vdot(initial, ham.dense @ initial).real)
    expval = float(np.vdot(initial, dipole.dense @ initial).real)
    dense = dipole.dense - expval * np.eye(ham.dim)
    vec = dense @ initial
    norm_m = float(np.linalg.norm(vec))
    if norm_m < DARK_STATE_NORM:
        raise DarkStateError("dark initial state: m|I> vanishes after subtracting <I|m|I>")
    m_shifted = DipoleOperator(
        dipole.n_qubits,
        dense,
        component_label=dipole.component_label,
        expectation_subtracted=True,
        reference=initial,
        one_body=dipole.one_body,
        offset=dipole.offset + expval,
    )
    return ShiftedProblem(ham.shifted(e_i), vec / norm_m, norm_m, m_shifted)


# ---------------------------------------------------------------------------
# Kernel setup
# ---------------------------------------------------------------------------


def truncation_tail(width: float, j_max: int) -> float:
    """``(1/2pi) sum_{|j| > j_max} exp(-width |j|)``, bound on the Fourier truncation error."""
    return math.exp(-width * (j_max + 1)) / (math.pi * -math.expm1(-width))


def j_max_for(width: float, eps_hat: float) -> int:
    """Smallest ``j_max >= 1`` whose truncation tail is at most ``eps_hat``."""
    target = math.pi * eps_hat * -math.expm1(-width)
    j = max(1, math.ceil(math.log(1.0 / target) / width - 1.0)) if target < 1 else 1
    while j > 1 and truncation_tail(width, j - 1) <= eps_hat:
        j -= 1
    while truncation_tail(width, j) > eps_hat:
        j += 1
    return j


@dataclass(frozen=True)
class KernelSpec:
    """Periodic Lorentzian kernel parameters.

    ``eta`` is the broadening (energy), ``tau`` the time step (1/energy) and
    ``delta`` the spectral margin so that ``|tau E_k| < pi - delta``.
    """

    eta: float
    tau: float
    delta: float
    j_max: int
    eps_hat: float | None = None
    max_abs_phase: float | None = None

    def __post_init__(self):
        if not (self.eta > 0 and self.tau > 0 and self.delta > 0):
            raise ValidationError("eta, tau and delta must be positive")
        if int(self.j_max) < 1:
            raise ValidationError("j_max must be a positive integer")
        object.__setattr__(self, "j_max", int(self.j_max))
        if self.max_abs_phase is not None and not self.max_abs_phase < math.pi - self.delta:
            raise ValidationError(
                f"max |tau E| = {self.max_abs_phase} is not below pi - delta = {math.pi - self.delta}"
            )

    @property
    def width(self) -> float:
        """Dimensionless kernel width ``eta * tau``."""
        return self.eta * self.tau

    @property
    def js(self) -> np.ndarray:
        return np.arange(-self.j_max, self.j_max + 1)

    @property
    def coeffs(self) -> np.ndarray:
        """``L_j = exp(-eta tau |j|)`` aligned with ``js``."""
        return np.exp(-self.width * np.abs(self.js))

    def coeff(self, j: int) -> float:
        return math.exp(-self.width * abs(j)) if abs(j) <= self.j_max else 0.0

    @property
    def L_total(self) -> float:
        return float(self.coeffs.sum() / (2 * math.pi))

    @property
    def truncation_bound(self) -> float:
        return truncation_tail(self.width, self.j_max)

    @property
    def n_ancilla(self) -> int:
        return max(1, math.ceil(math.log2(self.j_max)))


def choose_tau(
    ham: HamiltonianModel,
    eta: float,
    eps: float,
    delta: float | None = None,
    margin: float = 1e-9,
) -> KernelSpec:
    """Pick ``tau`` and the kernel truncation for a (shifted) Hamiltonian.

    Uses exact eigenvalues. Without an explicit ``delta`` the margin is
    ``eta * tau0 / max(1, ln(1/eps_hat))`` with ``tau0 = pi / max|E|`` and
    ``eps_hat = eps / tau0``; ``tau`` is then recomputed once with that margin.
    ``margin`` shrinks ``tau`` by a relative amount so the eigenvalue bound is strict.
    """
    if not (eta > 0 and eps > 0):
        raise ValidationError("eta and eps must be positive")
    evals = np.linalg.eigvalsh(ham.dense)
    e_max = float(np.max(np.abs(evals)))
    if e_max < 1e-14:
        raise ValidationError("Hamiltonian is zero; tau is unbounded")
    if delta is None:
        tau0 = math.pi / e_max
        eps_hat0 = eps / tau0
        delta = eta * tau0 / max(1.0, math.log(1.0 / eps_hat0))
    if not 0 < delta < math.pi / 2:
        raise ValidationError(f"spectral margin delta={delta} outside (0, pi/2); eta too large")
    tau = (1.0 - margin) * (math.pi - delta) / e_max
    eps_hat = eps / tau
    return KernelSpec(
        eta=eta,
        tau=tau,
        delta=delta,
        j_max=j_max_for(eta * tau, eps_hat),
        eps_hat=eps_hat,
        max_abs_phase=tau * e_max,
    )
