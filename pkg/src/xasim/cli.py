"""Command-line driver: model -> CVS -> initial state -> estimator -> cross section.

Subcommands:

* ``run``      compute a spectrum with one algorithm, writing ``spectrum.csv`` and
  ``manifest.json`` (plus ``histogram_<c>.csv`` for QPE sampling) to ``--out``.
* ``compare``  deviations and z-scores between two spectrum CSVs.
* ``cost``     shot counts, evolution queries and ancilla counts per algorithm.

Exit codes: 0 success, 1 comparison threshold exceeded, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from xasim import __version__
from xasim.errors import DarkStateError, NumericalError, ValidationError
from xasim.fd_estimator import fd_cost_model, run_freq_domain
from xasim.model import (
    HARTREE_TO_EV,
    FermionModel,
    KernelSpec,
    choose_tau,
    cvs_model,
    ground_state,
    load_model,
    shift_and_normalize,
    to_qubit_model,
)
from xasim.oracle import cross_section_prefactor, exact_c_eta, exact_lines, green_from_lines
from xasim.qpe_estimator import qpe_cost_model, run_qpe_sampling, windowed_spectrum, write_histogram
from xasim.qsim import diagonalize, estimate_dipole_norm, lcu_decompose, lcu_success_probability, rng_stream
from xasim.spectrum import SpectrumTable, json_text, read_spectrum_csv, write_json, write_spectrum_csv
from xasim.td_estimator import run_time_domain, td_cost_model

ALGORITHMS = ("oracle", "time_domain", "qpe_sampling", "freq_domain")
COMPONENTS = ("x", "y", "z")
# runs without --shots fall back to the cost model; refuse silly budgets
MAX_AUTO_SHOTS = 10**7
LCU_DEFAULT_TRIALS = 10**5


@dataclass
class RunConfig:
    """Everything that determines a run. Energies are in ``units``.

    ``eps`` is the target error in G (inverse energy units); C_eta is then
    resolved to ``eps / tau``.
    ``x_grid`` replaces the omega range by ``omega_points`` evenly spaced
    rescaled energies on ``[-pi, pi)``.
    """

    input: str
    algo: str = "oracle"
    eta: float = 0.1
    eps: float = 0.01
    omega_min: float | None = None
    omega_max: float | None = None
    omega_points: int = 64
    x_grid: bool = False
    shots: int | None = None
    seed: int = 0
    cvs: bool = False
    component: str = "all"
    units: str = "hartree"
    out: str | None = None
    qpe_weights: str = "lorentzian"
    n_ancilla: int | None = None
    exact_lambda: bool = False
    dipole_norm: str = "exact"

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algo!r}")
        if self.units not in ("hartree", "ev"):
            raise ValidationError(f"unknown units {self.units!r}")
        if self.component not in COMPONENTS + ("all",):
            raise ValidationError(f"unknown component {self.component!r}")
        if self.dipole_norm not in ("exact", "lcu"):
            raise ValidationError(f"unknown dipole norm mode {self.dipole_norm!r}")
        if not self.eta > 0:
            raise ValidationError("eta must be positive")
        if not self.eps > 0:
            raise ValidationError("eps must be positive")
        if self.omega_points < 2:
            raise ValidationError("omega grid needs at least 2 points")
        if not self.x_grid:
            if self.omega_min is None or self.omega_max is None:
                raise ValidationError("omega grid needs --omega-min and --omega-max (or --x-grid)")
            if not self.omega_min < self.omega_max:
                raise ValidationError("omega grid needs min < max")
        if self.shots is not None and self.shots < 1:
            raise ValidationError("shots must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        clean = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(clean) - names
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**clean)

    @property
    def energy_scale(self) -> float:
        """Multiply Hartree by this to get output units."""
        return HARTREE_TO_EV if self.units == "ev" else 1.0

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return d


@dataclass
class Prepared:
    """Shared, shifted problem for all requested dipole components."""

    hamiltonian: object
    kernel: KernelSpec
    e_initial: float
    initial: np.ndarray
    components: dict = field(default_factory=dict)  # label -> (psi0, norm, dipole)
    warnings: list = field(default_factory=list)


def _wrap(x):
    return (np.asarray(x, dtype=float) + math.pi) % (2 * math.pi) - math.pi


def prepare(config: RunConfig) -> Prepared:
    model = load_model(config.input)
    if config.cvs:
        if not isinstance(model, FermionModel) or not model.core_indices:
            raise ValidationError("CVS requested but no core orbital")
        model = cvs_model(model)
    qm = to_qubit_model(model) if isinstance(model, FermionModel) else model
    labels = sorted(qm.dipoles) if config.component == "all" else [config.component]
    if not labels:
        raise ValidationError("model has no dipole components")
    missing = [c for c in labels if c not in qm.dipoles]
    if missing:
        raise ValidationError(f"dipole component(s) {missing} not in model")
    e_i, initial = ground_state(qm.hamiltonian)
    scale = 1.0 / config.energy_scale
    warnings = []
    comps = {}
    shifted = None
    for label in labels:
        try:
            sp = shift_and_normalize(qm.hamiltonian, initial, qm.dipoles[label])
        except DarkStateError:
            if config.component != "all":
                raise
            warnings.append(f"component {label} is dark and was skipped")
            continue
        shifted = sp.hamiltonian
        comps[label] = (sp.psi0, sp.norm, sp.dipole)
    if not comps:
        raise DarkStateError("dark initial state: every dipole component vanishes on |I>")
    kernel = choose_tau(shifted, config.eta * scale, config.eps / scale)
    return Prepared(shifted, kernel, e_i, initial, comps, warnings)


def _component_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), 7919, int(index)]).generate_state(1)[0])


def _omega_grid(config: RunConfig, kernel: KernelSpec) -> np.ndarray:
    """Grid in Hartree."""
    if config.x_grid:
        n = config.omega_points
        return (-math.pi + 2 * math.pi * np.arange(n) / n) / kernel.tau
    scale = 1.0 / config.energy_scale
    return np.linspace(config.omega_min, config.omega_max, config.omega_points) * scale


def _default_shots(config: RunConfig, kernel: KernelSpec) -> int:
    eta = config.eta / config.energy_scale
    eps = config.eps * config.energy_scale
    if config.algo == "time_domain":
        n = td_cost_model(eps, eta, kernel.tau).n_samples
    elif config.algo == "qpe_sampling":
        n = qpe_cost_model(eps, eta, kernel.tau, 0.5 / kernel.width).n_samples
    else:
        n = fd_cost_model(eps, eta, 0.5).n_samples
    if n > MAX_AUTO_SHOTS:
        raise ValidationError(f"cost model asks for {n} shots; pass --shots explicitly")
    return max(n, 1)


def _estimate_component(config, prep, psi0, grid, n_shots, seed, label, out_dir, manifest):
    """Return (im_g, im_g_stderr, c_eta, c_eta_stderr) in Hartree units on ``grid``."""
    kernel = prep.kernel
    eig = diagonalize(prep.hamiltonian)
    x = kernel.tau * grid
    xw = _wrap(x)
    zeros = np.zeros(grid.size)
    info = manifest["components"][label]
    if config.algo == "oracle":
        lines = exact_lines(prep.hamiltonian, prep.components[label][2], prep.initial)
        im_g = np.imag(green_from_lines(lines, grid, kernel.eta))
        return im_g, zeros, exact_c_eta(kernel, lines, xw), zeros
    if config.algo == "freq_domain":
        n_anc = None if config.exact_lambda else (config.n_ancilla or kernel.n_ancilla)
        est = run_freq_domain(psi0, eig, grid, kernel.eta, n_shots, seed, n_ancilla=n_anc, tau=kernel.tau)
        info["n_ancilla"] = n_anc
        info["evolution_calls"] = 0 if n_anc is None else 2 * (2**n_anc - 1) * n_shots * grid.size
        return est.value, est.stderr, -est.value / (math.pi * kernel.tau), est.stderr / (math.pi * kernel.tau)
    if np.any(np.abs(xw - x) > 1e-12):
        manifest["warnings"].append(f"{label}: grid points beyond |tau omega| < pi were folded back (aliased)")
    if config.algo == "time_domain":
        est = run_time_domain(psi0, eig, kernel, xw, n_shots, seed)
        info["evolution_calls"] = est.meta["evolution_calls"]
        info["expected_evolution_calls"] = est.meta["expected_evolution_calls"]
        info["max_calls_per_run"] = est.meta["max_calls_per_run"]
        info["max_abs_imag_mean"] = float(np.max(np.abs(est.meta["imag_mean"])))
        manifest["warnings"].extend(f"{label}: {w}" for w in est.meta["warnings"])
    else:
        n_anc = config.n_ancilla or kernel.n_ancilla
        hist = run_qpe_sampling(psi0, eig, kernel, n_anc, n_shots, seed, mode=config.qpe_weights)
        write_histogram(Path(out_dir) / f"histogram_{label}.csv", hist)
        est = windowed_spectrum(hist, kernel, xw)
        info["n_ancilla"] = n_anc
        info["evolution_calls"] = (2**n_anc - 1) * n_shots
    # C_eta(x) = -Im G(x / tau) / (pi tau), up to periodic images
    g_scale = math.pi * kernel.tau
    return -g_scale * est.value, g_scale * est.stderr, est.value, est.stderr


def _norm_for(config, prep, label, index) -> tuple[float, float]:
    psi0, norm, dipole = prep.components[label]
    if config.dipole_norm == "exact":
        return norm, 0.0
    trials = config.shots or LCU_DEFAULT_TRIALS
    p = lcu_success_probability(prep.initial, dipole)
    successes = int(rng_stream(config.seed, 10_000 + index).binomial(trials, p))
    est = estimate_dipole_norm(successes, trials, lcu_decompose(dipole).alpha1)
    return est.norm, est.stderr


def run_pipeline(config: RunConfig) -> dict:
    """Run one configuration end to end and write its artifacts. Returns the manifest."""
    if config.out is None:
        raise ValidationError("an output directory is required")
    out_dir = Path(config.out)
    prep = prepare(config)
    kernel = prep.kernel
    grid = _omega_grid(config, kernel)
    n_shots = 0 if config.algo == "oracle" else (config.shots or _default_shots(config, kernel))
    manifest = {
        "config": config.echo(),
        "seed": config.seed,
        "n_samples": n_shots,
        "kernel": {
            "eta_hartree": kernel.eta,
            "tau_inv_hartree": kernel.tau,
            "delta": kernel.delta,
            "j_max": kernel.j_max,
            "eps_hat": kernel.eps_hat,
            "L_total": kernel.L_total,
            "truncation_bound": kernel.truncation_bound,
            "n_ancilla": kernel.n_ancilla,
        },
        "e_initial_hartree": prep.e_initial,
        "components": {},
        "warnings": list(prep.warnings),
        "units": {
            "omega": config.units,
            "im_g": f"1/{config.units}",
            "c_eta": "dimensionless",
            "sigma": "bohr^2 (4 pi omega / 3c applied, atomic units)" if config.units == "ev" else "raw -sum ||m|I>||^2 Im G [1/hartree]",
        },
        "versions": {
            "xasim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "cost": cost_report(config, kernel),
    }
    total_w = 0.0
    im_g = np.zeros(grid.size)
    c_eta = np.zeros(grid.size)
    raw = np.zeros(grid.size)
    raw_var = np.zeros(grid.size)
    for index, label in enumerate(sorted(prep.components)):
        psi0 = prep.components[label][0]
        norm, norm_err = _norm_for(config, prep, label, index)
        manifest["components"][label] = {"norm": norm, "norm_stderr": norm_err}
        g, g_err, c, _ = _estimate_component(
            config, prep, psi0, grid, n_shots, _component_seed(config.seed, index), label, out_dir, manifest
        )
        w = norm**2
        total_w += w
        im_g += w * g
        c_eta += w * c
        raw += -w * g
        raw_var += (w * g_err) ** 2 + (2 * norm * norm_err * g) ** 2
    if total_w <= 0:
        raise DarkStateError("dark initial state: estimated dipole norms vanish")
    pref = cross_section_prefactor(grid) if config.units == "ev" else 1.0
    scale = config.energy_scale
    table = SpectrumTable(
        omega=grid * scale,
        im_g=im_g / total_w / scale,
        c_eta=c_eta / total_w,
        sigma=raw * pref,
        stderr=np.sqrt(raw_var) * np.abs(pref),
        n_samples=n_shots * len(prep.components),
    )
    if not (np.all(np.isfinite(table.sigma)) and np.all(np.isfinite(table.stderr))):
        raise NumericalError("non-finite values in the assembled spectrum")
    write_spectrum_csv(out_dir / "spectrum.csv", table)
    write_json(out_dir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# compare / cost
# ---------------------------------------------------------------------------


def compare_spectra(path_a, path_b, column: str = "sigma") -> dict:
    """Max and L2 deviation plus per-point z-scores using the combined stderr."""
    a = read_spectrum_csv(path_a)
    b = read_spectrum_csv(path_b)
    if a.omega.shape != b.omega.shape or not np.allclose(a.omega, b.omega, rtol=1e-12, atol=0):
        raise ValidationError("grid mismatch between spectra")
    va, vb = a.column(column), b.column(column)
    diff = va - vb
    # the stderr column belongs to sigma; other columns are compared without error bars
    sig = np.hypot(a.stderr, b.stderr) if column == "sigma" else np.zeros_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sig > 0, diff / np.where(sig > 0, sig, 1.0), np.where(diff == 0, 0.0, np.inf * np.sign(diff)))
    return {
        "column": column,
        "n_points": int(diff.size),
        "max_abs_dev": float(np.max(np.abs(diff))) if diff.size else 0.0,
        "l2_dev": float(np.sqrt(np.mean(diff**2))) if diff.size else 0.0,
        "z_scores": z.tolist(),
        "max_abs_z": float(np.max(np.abs(z))) if diff.size else 0.0,
        "fraction_within_4": float(np.mean(np.abs(z) <= 4)) if diff.size else 1.0,
    }


def cost_report(config: RunConfig, kernel: KernelSpec | None = None) -> list[dict]:
    """Per-algorithm shots, queries of ``exp(-i H tau)`` per run, and ancilla counts.

    Worst-case variances are used: window probability 1/2 for QPE sampling and
    ``p0 = 1/2`` for the frequency-domain test. QPE-type registers use
    ``kernel.n_ancilla`` qubits; the resolvent circuit adds the rotation and
    Hadamard ancillas. Frequency-domain shots are per frequency point.
    """
    if kernel is None:
        kernel = prepare(config).kernel
    eta = config.eta / config.energy_scale
    eps = config.eps * config.energy_scale
    n = config.n_ancilla or kernel.n_ancilla
    td = td_cost_model(eps, eta, kernel.tau)
    qpe = qpe_cost_model(eps, eta, kernel.tau, 0.5 / kernel.width)
    fd = fd_cost_model(eps, eta, 0.5)
    return [
        {"algorithm": "time_domain", "n_samples": td.n_samples, "n_samples_exact": td.n_samples_exact,
         "queries_expected": td.expected_calls, "queries_max": td.max_calls, "ancillas": 1},
        {"algorithm": "qpe_sampling", "n_samples": qpe.n_samples, "n_samples_exact": qpe.n_samples_exact,
         "queries_expected": float(2**n - 1), "queries_max": 2**n - 1, "ancillas": n},
        {"algorithm": "freq_domain", "n_samples": fd.n_samples, "n_samples_exact": fd.n_samples_exact,
         "queries_expected": float(2 * (2**n - 1)), "queries_max": 2 * (2**n - 1), "ancillas": n + 2},
    ]


def format_cost_table(rows: list[dict]) -> str:
    head = f"{'algorithm':<14}{'n_samples':>14}{'queries/run':>14}{'max/run':>10}{'ancillas':>10}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r['algorithm']:<14}{r['n_samples']:>14d}{r['queries_expected']:>14.2f}"
            f"{r['queries_max']:>10d}{r['ancillas']:>10d}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _add_model_args(p: argparse.ArgumentParser) -> None:
    # defaults are None so that explicit flags can be detected next to --config
    p.add_argument("--input")
    p.add_argument("--eta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--cvs", action="store_true", default=None)
    p.add_argument("--component", choices=COMPONENTS + ("all",))
    p.add_argument("--units", choices=("hartree", "ev"))
    p.add_argument("--n-ancilla", type=int)
    p.add_argument("--config", help="JSON file with RunConfig fields; cannot be combined with other flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xasim", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="compute a spectrum", allow_abbrev=False)
    _add_model_args(run)
    run.add_argument("--algo", choices=ALGORITHMS)
    run.add_argument("--omega-min", type=float)
    run.add_argument("--omega-max", type=float)
    run.add_argument("--omega-points", type=int)
    run.add_argument("--x-grid", action="store_true", default=None)
    run.add_argument("--shots", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--qpe-weights", choices=("lorentzian", "symmetric", "uniform"))
    run.add_argument("--exact-lambda", action="store_true", default=None)
    run.add_argument("--dipole-norm", choices=("exact", "lcu"))
    run.add_argument("--out")

    cmp_ = sub.add_parser("compare", help="compare two spectrum CSVs", allow_abbrev=False)
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--column", default="sigma")
    cmp_.add_argument("--max-abs-dev", type=float)
    cmp_.add_argument("--min-fraction-z4", type=float)

    cost = sub.add_parser("cost", help="resource estimates", allow_abbrev=False)
    _add_model_args(cost)
    cost.add_argument("--json", action="store_true")
    return parser


_NON_CONFIG = {"command", "config", "json"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(args).items() if v is not None and k not in _NON_CONFIG}
    if args.config is not None:
        if given:
            raise ValidationError(f"--config cannot be combined with {sorted('--' + k.replace('_', '-') for k in given)}")
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"parse error in {args.config}: {exc}") from exc
        return RunConfig.from_dict(data)
    if "input" not in given:
        raise ValidationError("--input is required")
    if args.command == "cost":
        # resource estimates do not depend on the frequency grid
        given["x_grid"] = True
    return RunConfig(**given)


def _error_record(exc: BaseException, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = getattr(args, "out", None)
    try:
        if args.command == "compare":
            report = compare_spectra(args.a, args.b, args.column)
            sys.stdout.write(json_text(report))
            bad = (args.max_abs_dev is not None and report["max_abs_dev"] > args.max_abs_dev) or (
                args.min_fraction_z4 is not None and report["fraction_within_4"] < args.min_fraction_z4
            )
            return 1 if bad else 0
        config = config_from_args(args)
        out = config.out
        if args.command == "cost":
            rows = cost_report(config)
            sys.stdout.write(json_text(rows) if args.json else format_cost_table(rows))
            return 0
        run_pipeline(config)
        return 0
    except ValidationError as exc:
        code = 2
        record = _error_record(exc, code)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        code = 3
        record = _error_record(exc, code)
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    if out is not None:
        try:
            write_json(Path(out) / "error.json", record)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
