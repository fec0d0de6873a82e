import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bruteforce import random_hermitian
from xasim.errors import ValidationError
from xasim.model import DipoleOperator, HamiltonianModel, KernelSpec, choose_tau, ground_state, shift_and_normalize
from xasim.oracle import SpectralLine, exact_c_eta, time_green, truncated_c_eta
from xasim.qsim import EigenDecomposition, diagonalize, hadamard_test_expectation, time_evolve
from xasim.td_estimator import (
    RunningSums,
    TimeDomainSample,
    _chunk_sizes,
    _HadamardTable,
    _run_chunk,
    estimator_value,
    finalize,
    mode_probabilities,
    run_shot,
    run_time_domain,
    sample_mode,
    sample_modes,
    td_cost_model,
)

X = np.array([[0, 1], [1, 0]], dtype=float)
Z = np.diag([1.0, -1.0])


def one_qubit_problem(eta=0.1, eps=1e-3):
    ham = HamiltonianModel(1, 0.7 * Z + 0.4 * X)
    dip = DipoleOperator(1, 0.3 * X + 0.8 * Z)
    _, initial = ground_state(ham)
    sp = shift_and_normalize(ham, initial, dip)
    # a superposition of both eigenstates, so the spectrum has two lines
    psi0 = np.array([0.6, 0.8j])
    kernel = choose_tau(sp.hamiltonian, eta, eps)
    return sp.hamiltonian, psi0, kernel


def lines_for(ham, psi0):
    """Spectral measure of psi0 under the (already shifted) Hamiltonian."""
    eig = diagonalize(ham)
    return [SpectralLine(float(e), float(w)) for e, w in zip(eig.eigenvalues, eig.weights(psi0)) if w > 1e-14]


def enumerate_expectation(psi0, eig, kernel, x):
    """Exact mean of the estimator over all (J, X, Y) with their probabilities."""
    probs = mode_probabilities(kernel)
    total = np.zeros(np.shape(x), dtype=complex)
    for j, pj in zip(kernel.js, probs):
        u = lambda v, j=j: time_evolve(v, eig, kernel.tau * j)
        px = hadamard_test_expectation(psi0, u, "I")
        py = hadamard_test_expectation(psi0, u, "Sdg")
        for xo, yo in itertools.product((1, -1), repeat=2):
            p = pj * (px if xo == 1 else 1 - px) * (py if yo == 1 else 1 - py)
            total += p * estimator_value(x, TimeDomainSample(int(j), xo, yo), kernel)
    return total


def test_lines_helper_matches_weights():
    ham, psi0, _ = one_qubit_problem()
    lines = lines_for(ham, psi0)
    assert sum(ln.weight for ln in lines) == pytest.approx(1.0)
    assert len(lines) == 2


# --- mode sampling ---------------------------------------------------------------------------


def test_sample_mode_collapses_for_wide_kernel():
    kernel = KernelSpec(eta=60.0, tau=1.0, delta=0.1, j_max=5)
    rng = np.random.default_rng(0)
    assert all(sample_mode(kernel, rng) == 0 for _ in range(1000))


def test_sample_mode_mean_abs_j():
    kernel = KernelSpec(eta=0.1, tau=1.0, delta=0.01, j_max=120)
    js = sample_modes(kernel, np.random.default_rng(1), 10**6)
    analytic = np.sum(np.abs(kernel.js) * kernel.coeffs) / kernel.coeffs.sum()
    assert np.mean(np.abs(js)) == pytest.approx(analytic, rel=0.01)
    assert np.all(np.abs(js) <= kernel.j_max)


def test_sample_mode_symmetric():
    kernel = KernelSpec(eta=0.3, tau=1.0, delta=0.01, j_max=20)
    js = sample_modes(kernel, np.random.default_rng(2), 10**5)
    for j in range(1, 6):
        a, b = np.sum(js == j), np.sum(js == -j)
        p = mode_probabilities(kernel)[kernel.j_max + j]
        sigma = math.sqrt(2 * 10**5 * p * (1 - p))
        assert abs(a - b) <= 4 * sigma


def test_sample_modes_deterministic():
    kernel = KernelSpec(eta=0.3, tau=1.0, delta=0.01, j_max=20)
    a = sample_modes(kernel, np.random.default_rng(3), 100)
    b = sample_modes(kernel, np.random.default_rng(3), 100)
    assert np.array_equal(a, b)


# --- single shots -------------------------------------------------------------------------------------


def test_run_shot_j_zero():
    ham, psi0, kernel = one_qubit_problem()
    eig = diagonalize(ham)
    rng = np.random.default_rng(0)
    shots = [run_shot(psi0, eig, kernel, 0, rng) for _ in range(2000)]
    assert all(s.x_outcome == 1 for s in shots)
    u = lambda v: time_evolve(v, eig, 0.0)
    assert hadamard_test_expectation(psi0, u, "Sdg") == pytest.approx(0.5)


def test_run_shot_rejects_large_j():
    ham, psi0, kernel = one_qubit_problem()
    with pytest.raises(ValidationError):
        run_shot(psi0, diagonalize(ham), kernel, kernel.j_max + 1, np.random.default_rng(0))


@given(st.integers(-30, 30), st.floats(0.1, 3.0))
def test_single_eigenstate_phases(j, de):
    eig = EigenDecomposition(np.array([0.0, de]), np.eye(2, dtype=complex))
    kernel = KernelSpec(eta=0.1, tau=0.8, delta=0.01, j_max=30)
    psi0 = np.array([0, 1], dtype=complex)
    u = lambda v: time_evolve(v, eig, kernel.tau * j)
    ex = 2 * hadamard_test_expectation(psi0, u, "I") - 1
    ey = 2 * hadamard_test_expectation(psi0, u, "Sdg") - 1
    assert ex == pytest.approx(math.cos(kernel.tau * j * de), abs=1e-12)
    assert ey == pytest.approx(-math.sin(kernel.tau * j * de), abs=1e-12)


def test_run_shot_statistics():
    rng = np.random.default_rng(4)
    ham = HamiltonianModel(2, random_hermitian(4, rng))
    eig = diagonalize(ham)
    psi0 = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi0 /= np.linalg.norm(psi0)
    kernel = KernelSpec(eta=0.1, tau=0.5, delta=0.01, j_max=10)
    n = 10**5
    xs = np.empty(n)
    ys = np.empty(n)
    for i in range(n):
        s = run_shot(psi0, eig, kernel, 3, rng)
        xs[i], ys[i] = s.x_outcome, s.y_outcome
    g = np.vdot(psi0, time_evolve(psi0, eig, 3 * kernel.tau))
    assert abs(xs.mean() - g.real) <= 5 * xs.std() / math.sqrt(n)
    assert abs(ys.mean() - g.imag) <= 5 * ys.std() / math.sqrt(n)


# --- estimator --------------------------------------------------------------------------------------------


def test_estimator_value_examples():
    kernel = KernelSpec(eta=0.2, tau=1.0, delta=0.01, j_max=10)
    assert estimator_value(0.3, TimeDomainSample(0, 1, 1), kernel) == pytest.approx(kernel.L_total * (1 + 1j))
    v = estimator_value(0.0, TimeDomainSample(7, 1, -1), kernel)
    assert v == pytest.approx(kernel.L_total * (1 - 1j))
    assert abs(estimator_value(1.1, TimeDomainSample(4, -1, 1), kernel)) == pytest.approx(kernel.L_total * math.sqrt(2))
    with pytest.raises(ValidationError):
        estimator_value(4.0, TimeDomainSample(0, 1, 1), kernel)


def test_exhaustive_enumeration_is_unbiased():
    ham, psi0, kernel = one_qubit_problem(eta=0.2, eps=1e-4)
    eig = diagonalize(ham)
    x = np.linspace(-math.pi, math.pi, 64, endpoint=False)
    brute = enumerate_expectation(psi0, eig, kernel, x)
    lines = lines_for(ham, psi0)
    series = (kernel.coeffs[None, :] * time_green(lines, kernel.tau * kernel.js)[None, :]
              * np.exp(1j * np.outer(x, kernel.js))).sum(axis=1) / (2 * math.pi)
    assert np.max(np.abs(brute - series)) <= 1e-12
    assert np.max(np.abs(series.real - truncated_c_eta(kernel, lines, x))) <= 1e-12
    assert np.max(np.abs(series.real - exact_c_eta(kernel, lines, x))) <= kernel.truncation_bound


# --- full runs -------------------------------------------------------------------------------------------


def test_run_matches_oracle():
    ham, psi0, kernel = one_qubit_problem(eta=0.05, eps=1e-3)
    eig = diagonalize(ham)
    grid = np.linspace(-math.pi, math.pi, 64, endpoint=False)
    est = run_time_domain(psi0, eig, kernel, grid, 10**5, seed=7)
    exact = exact_c_eta(kernel, lines_for(ham, psi0), grid)
    within = np.abs(est.value - exact) <= 4 * est.stderr
    assert within.mean() >= 0.95
    assert np.all(est.meta["sample_variance"] <= 2 * kernel.L_total**2)
    assert np.all(np.abs(est.meta["imag_mean"]) <= 5 * kernel.L_total * math.sqrt(2) / math.sqrt(10**5))
    assert est.meta["correlated_grid"]


def test_single_sample_flagged():
    ham, psi0, kernel = one_qubit_problem()
    est = run_time_domain(psi0, diagonalize(ham), kernel, [0.0, 1.0], 1, seed=0)
    assert np.all(est.stderr == 0)
    assert "insufficient samples" in est.meta["warnings"]
    assert np.all(np.abs(est.value) <= kernel.L_total * math.sqrt(2))


def test_run_rejects_bad_input():
    ham, psi0, kernel = one_qubit_problem()
    with pytest.raises(ValidationError):
        run_time_domain(psi0, diagonalize(ham), kernel, [0.0], 0, seed=0)
    with pytest.raises(ValidationError):
        run_time_domain(psi0, diagonalize(ham), kernel, [4.0], 10, seed=0)


def test_stderr_scaling():
    ham, psi0, kernel = one_qubit_problem(eta=0.1)
    eig = diagonalize(ham)
    grid = np.linspace(-3, 3, 16)
    ns = [10**2, 10**3, 10**4, 10**5]
    errs = [np.mean(run_time_domain(psi0, eig, kernel, grid, n, seed=11).stderr) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert -0.55 <= slope <= -0.45


def test_determinism_and_workers():
    ham, psi0, kernel = one_qubit_problem()
    eig = diagonalize(ham)
    grid = np.linspace(-3, 3, 8)
    a = run_time_domain(psi0, eig, kernel, grid, 10_000, seed=3, chunk_size=1000)
    b = run_time_domain(psi0, eig, kernel, grid, 10_000, seed=3, chunk_size=1000)
    c = run_time_domain(psi0, eig, kernel, grid, 10_000, seed=3, chunk_size=1000, n_workers=4)
    for other in (b, c):
        assert np.array_equal(a.value, other.value)
        assert np.array_equal(a.stderr, other.stderr)
    d = run_time_domain(psi0, eig, kernel, grid, 10_000, seed=4, chunk_size=1000)
    assert not np.array_equal(a.value, d.value)


def test_merge_order_independent():
    ham, psi0, kernel = one_qubit_problem()
    eig = diagonalize(ham)
    grid = np.linspace(-3, 3, 8)
    table = _HadamardTable(psi0, eig, kernel)
    parts = [_run_chunk(table, grid, 5, k, s) for k, s in enumerate(_chunk_sizes(5000, 700))]
    fwd = RunningSums.zeros(grid.size)
    for p in parts:
        fwd = fwd + p
    rev = RunningSums.zeros(grid.size)
    for p in reversed(parts):
        rev = rev + p
    a, b = finalize(fwd, grid, kernel, 5), finalize(rev, grid, kernel, 5)
    assert np.allclose(a.value, b.value, rtol=0, atol=1e-12)
    assert np.allclose(a.stderr, b.stderr, rtol=0, atol=1e-12)


# --- cost model -------------------------------------------------------------------------------------------


@given(st.floats(1e-4, 1.0), st.floats(1e-3, 1.0), st.floats(0.1, 10.0))
def test_cost_quadruples(eps, eta, tau):
    a = td_cost_model(eps, eta, tau)
    b = td_cost_model(eps / 2, eta, tau)
    assert b.n_samples_exact == pytest.approx(4 * a.n_samples_exact, rel=1e-12)
    assert b.n_samples >= 4 * a.n_samples - 3


def test_cost_expected_calls_direct_sum():
    tau = 1.0
    c = td_cost_model(0.01 * tau, 0.1 / tau, tau)
    js = np.arange(-c.max_calls, c.max_calls + 1)
    w = np.exp(-0.1 * np.abs(js))
    assert c.expected_calls == pytest.approx(np.sum(np.abs(js) * w) / w.sum(), rel=0.01)


@given(st.floats(1e-3, 1.0), st.floats(1e-6, 1e-1))
def test_cost_mean_below_max(width, eps_hat):
    c = td_cost_model(eps_hat, width, 1.0)
    assert c.expected_calls < c.max_calls


def test_cost_covers_variance_bound():
    kernel = KernelSpec(eta=0.1, tau=1.0, delta=0.01, j_max=100)
    c = td_cost_model(0.01, kernel.eta, kernel.tau)
    # the kernel peak bounds L_total for every truncation
    assert c.n_samples_exact >= 2 * kernel.L_total**2 / 0.01**2
