"""Configuration, staged pipeline runs, table export, and the command line.

A run is described by a JSON configuration (box geometry, disorder, inverse
temperature, drive profile, eta ladder, grids).  ``run_pipeline`` executes a
subset of the six stages

    equilibrium -> transport -> measure
                -> drive -> joule
    verify  (identity battery, needs equilibrium/transport/measure)

and returns a ``ResultBundle``; ``export`` writes the bundle as CSV tables
with a JSON sidecar per stage.  Every table carries the configuration hash in
a comment line, so outputs can always be traced back to their inputs.  Runs
are deterministic: the same configuration file produces bitwise-identical
files on every serial rerun, and sweep workers never share generator state
(each disorder draw is a pure function of its seed).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field as dataclass_field, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._errors import ConfigError, FermilatError, SingularKernelError, StageDependencyError
from .dynamics import (
    DrivenRun,
    continuity_residual,
    energy_increments,
    evolve_propagator,
    evolve_trajectory,
    nonlinear_currents,
    ohm_joule_scaling_check,
)
from .lattice import (
    FieldProfile,
    LatticeBox,
    Potential,
    build_hamiltonian,
    make_box,
    sample_potential,
)
from .measure import (
    SpectralMeasure,
    build_measure,
    duhamel_mass_matrix,
    eval_xi_from_measure,
    full_conductivity_measure,
    static_admittance,
)
from .response import fourier_ohm_current, linear_currents
from .spectral import (
    EigenSystem,
    QuadraticObservable,
    duhamel_inner_product,
    eigendecompose,
    fermi_symbol,
)
from .transport import (
    TransportKernel,
    sigma_dia,
    viscosity,
    xi_dia,
    xi_para,
    xi_para_commutator_route,
)

STAGES = ("equilibrium", "transport", "measure", "drive", "joule", "verify")

# A stage may only run together with the stages it reads from.
STAGE_DEPS = {
    "equilibrium": (),
    "transport": ("equilibrium",),
    "measure": ("equilibrium", "transport"),
    "drive": ("equilibrium", "transport"),
    "joule": ("drive",),
    "verify": ("equilibrium", "transport", "measure"),
}

_TOP_KEYS = {
    "d", "l", "L", "beta", "lambda", "seed", "dist", "field",
    "eta", "dt", "t_max", "n_t", "out",
}
_FIELD_KEYS = {"t0", "t1", "amplitude", "carrier", "w", "support_radius"}

DEFAULT_ETA = (0.1, 0.01, 0.001)
DEFAULT_WINDOW = 2.0
DEFAULT_T_MAX = 20.0
DEFAULT_N_T = 201


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; all fields carry concrete values."""

    dimension: int
    avg_radius: int
    box_radius: int
    beta: float
    lam: float
    seeds: tuple
    dist: str
    t_on: float
    t_off: float
    amplitude: float
    carrier: float
    direction: tuple
    support_radius: int
    eta: tuple
    dt: float
    t_max: float
    n_t: int
    out_dir: str

    def normalized(self) -> dict:
        """Canonical JSON-serializable form; basis of the configuration hash."""
        return {
            "d": self.dimension,
            "l": self.avg_radius,
            "L": self.box_radius,
            "beta": self.beta,
            "lambda": self.lam,
            "seed": list(self.seeds),
            "dist": self.dist,
            "field": {
                "t0": self.t_on,
                "t1": self.t_off,
                "amplitude": self.amplitude,
                "carrier": self.carrier,
                "w": list(self.direction),
                "support_radius": self.support_radius,
            },
            "eta": list(self.eta),
            "dt": self.dt,
            "t_max": self.t_max,
            "n_t": self.n_t,
            "out": self.out_dir,
        }

    def config_hash(self) -> str:
        # The output directory is not a physics input: relocating a run must
        # not change its identity.
        payload = self.normalized()
        del payload["out"]
        payload = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def field_profile(self) -> FieldProfile:
        return FieldProfile(
            direction=np.asarray(self.direction, dtype=float),
            support_radius=self.support_radius,
            t_on=self.t_on,
            t_off=self.t_off,
            amplitude=self.amplitude,
            carrier=self.carrier,
        )

    def window(self) -> float:
        return self.t_off - self.t_on


def _need(raw: dict, key: str):
    if key not in raw:
        raise ConfigError(f"missing required key '{key}'")
    return raw[key]


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value == int(value):
            return int(value)
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(value)


def _as_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{key} must be finite, got {value!r}")
    return out


def parse_config(source) -> RunConfig:
    """Build a validated RunConfig from a JSON file path, JSON text, or dict.

    Missing optional keys are filled with defaults; unknown keys and
    constraint violations raise ConfigError naming the offending field.
    """
    if isinstance(source, dict):
        raw = dict(source)
    else:
        path = Path(source)
        if path.exists():
            text = path.read_text()
        else:
            text = str(source)
            if not text.lstrip().startswith("{"):
                raise ConfigError(f"config file not found: {source}")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")

    d = _as_int(_need(raw, "d"), "d")
    if d not in (1, 2, 3):
        raise ConfigError(f"d must be 1, 2, or 3, got {d}")
    l = _as_int(_need(raw, "l"), "l")
    if l < 0:
        raise ConfigError(f"l must be nonnegative, got {l}")
    box_radius = _as_int(_need(raw, "L"), "L")
    beta = _as_float(_need(raw, "beta"), "beta")
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    lam = _as_float(_need(raw, "lambda"), "lambda")
    if lam < 0:
        raise ConfigError(f"lambda must be nonnegative, got {lam}")

    seed_raw = _need(raw, "seed")
    if isinstance(seed_raw, (list, tuple)):
        if not seed_raw:
            raise ConfigError("seed list must not be empty")
        seeds = tuple(_as_int(s, "seed") for s in seed_raw)
    else:
        seeds = (_as_int(seed_raw, "seed"),)

    dist = raw.get("dist", "uniform")
    if dist not in ("uniform", "binary", "zero"):
        raise ConfigError(f"dist must be 'uniform', 'binary', or 'zero', got {dist!r}")

    field_raw = raw.get("field", {})
    if not isinstance(field_raw, dict):
        raise ConfigError("field must be a JSON object")
    unknown = set(field_raw) - _FIELD_KEYS
    if unknown:
        raise ConfigError(f"unknown field key(s): {sorted(unknown)}")
    t_on = _as_float(field_raw.get("t0", 0.0), "field.t0")
    t_off = _as_float(field_raw.get("t1", t_on + DEFAULT_WINDOW), "field.t1")
    if not t_off > t_on:
        raise ConfigError(f"field.t1 must exceed field.t0, got t0={t_on}, t1={t_off}")
    amplitude = _as_float(field_raw.get("amplitude", 1.0), "field.amplitude")
    carrier = _as_float(field_raw.get("carrier", 1.5), "field.carrier")
    if carrier < 0:
        raise ConfigError(f"field.carrier must be nonnegative, got {carrier}")
    w_raw = field_raw.get("w")
    if w_raw is None:
        w = np.zeros(d)
        w[0] = 1.0
    else:
        w = np.asarray(w_raw, dtype=float)
        if w.shape != (d,):
            raise ConfigError(f"field.w must have d = {d} components, got {w_raw!r}")
        norm = float(np.linalg.norm(w))
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"field.w must be a unit vector, got |w| = {norm:.12g}")
        w = w / norm
    support = _as_int(field_raw.get("support_radius", l), "field.support_radius")
    if support < 0:
        raise ConfigError(f"field.support_radius must be nonnegative, got {support}")

    # The driven region plus a light-cone buffer must fit inside the box,
    # otherwise boundary reflections reach the averaged sites in-window.
    buffer = math.ceil(2.0 * (t_off - t_on))
    needed = max(l, support) + buffer
    if box_radius < needed:
        raise ConfigError(
            f"L = {box_radius} is too small: need L >= max(l, support_radius) + "
            f"{buffer} = {needed} so the drive window {t_off - t_on:g} stays "
            "buffered from the boundary"
        )

    eta_raw = raw.get("eta", list(DEFAULT_ETA))
    if not isinstance(eta_raw, (list, tuple)) or not eta_raw:
        raise ConfigError("eta must be a nonempty list of positive numbers")
    eta = tuple(_as_float(e, "eta") for e in eta_raw)
    if any(e <= 0 for e in eta):
        raise ConfigError(f"eta values must be positive, got {list(eta)}")

    dt = _as_float(raw.get("dt", (t_off - t_on) / 2000.0), "dt")
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    t_max = _as_float(raw.get("t_max", DEFAULT_T_MAX), "t_max")
    if t_max <= 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    n_t = _as_int(raw.get("n_t", DEFAULT_N_T), "n_t")
    if n_t < 9:
        raise ConfigError(f"n_t must be at least 9, got {n_t}")
    out_dir = raw.get("out", "runs")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out must be a nonempty path string")

    return RunConfig(
        dimension=d,
        avg_radius=l,
        box_radius=box_radius,
        beta=beta,
        lam=lam,
        seeds=seeds,
        dist=dist,
        t_on=t_on,
        t_off=t_off,
        amplitude=amplitude,
        carrier=carrier,
        direction=tuple(float(c) for c in w),
        support_radius=support,
        eta=eta,
        dt=dt,
        t_max=t_max,
        n_t=n_t,
        out_dir=out_dir,
    )


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class ResultBundle:
    """Everything a pipeline run produced, plus provenance."""

    config: RunConfig
    config_hash: str
    code_version: str
    stages: tuple
    box: LatticeBox | None = None
    potential: Potential | None = None
    eigensystem: EigenSystem | None = None
    equilibrium_summary: dict | None = None
    xi_p: TransportKernel | None = None
    xi_d_matrix: np.ndarray | None = None
    transport_summary: dict | None = None
    mu_p: SpectralMeasure | None = None
    mu_full: SpectralMeasure | None = None
    measure_summary: dict | None = None
    current_rows: list | None = None
    runs: dict = dataclass_field(default_factory=dict)
    ledger_rows: list | None = None
    joule_report: dict | None = None
    verify_report: dict | None = None


def stage_closure(stage: str) -> tuple:
    """The stage plus all its transitive dependencies, in canonical order."""
    if stage not in STAGES:
        raise StageDependencyError(f"unknown stage '{stage}'")
    wanted = {stage}
    frontier = [stage]
    while frontier:
        for dep in STAGE_DEPS[frontier.pop()]:
            if dep not in wanted:
                wanted.add(dep)
                frontier.append(dep)
    return tuple(s for s in STAGES if s in wanted)


def _check_stages(stages) -> tuple:
    seen = []
    for s in stages:
        if s not in STAGES:
            raise StageDependencyError(f"unknown stage '{s}'")
        if s not in seen:
            seen.append(s)
    for s in seen:
        for dep in STAGE_DEPS[s]:
            if dep not in seen:
                raise StageDependencyError(
                    f"stage '{s}' requires stage '{dep}' in the same run"
                )
    return tuple(s for s in STAGES if s in seen)


def run_pipeline(config: RunConfig, stages=None) -> ResultBundle:
    """Execute the requested stages in order and collect their products.

    ``stages`` must be dependency-closed (e.g. joule cannot run without
    drive); pass the output of ``stage_closure`` to get that for free.
    Identical inputs give identical outputs: nothing here reads clocks,
    global RNG state, or the filesystem.
    """
    stages = _check_stages(STAGES if stages is None else stages)
    bundle = ResultBundle(
        config=config,
        config_hash=config.config_hash(),
        code_version=__version__,
        stages=stages,
    )
    for stage in stages:
        _STAGE_IMPL[stage](config, bundle)
    return bundle


def _stage_equilibrium(config: RunConfig, bundle: ResultBundle) -> None:
    box = make_box(config.dimension, config.box_radius)
    pot = sample_potential(box, config.seeds[0], dist=config.dist)
    h = build_hamiltonian(box, pot, config.lam)
    es = eigendecompose(h)
    herm = float(np.max(np.abs(h.matrix - h.matrix.conj().T)))
    dsym = fermi_symbol(es, config.beta)
    occ = np.linalg.eigvalsh(dsym.matrix)
    bundle.box = box
    bundle.potential = pot
    bundle.eigensystem = es
    bundle.equilibrium_summary = {
        "n_sites": int(box.n_sites),
        "energy_min": float(es.energies[0]),
        "energy_max": float(es.energies[-1]),
        "hermiticity_defect": herm,
        "symbol_trace": float(np.real(np.trace(dsym.matrix))),
        "symbol_eig_min": float(occ[0]),
        "symbol_eig_max": float(occ[-1]),
        "potential_min": float(np.min(pot.values)),
        "potential_max": float(np.max(pot.values)),
    }


def _stage_transport(config: RunConfig, bundle: ResultBundle) -> None:
    grid = np.linspace(0.0, config.t_max, config.n_t)
    xi_p = xi_para(bundle.eigensystem, config.beta, config.avg_radius, grid)
    xi_d = xi_dia(bundle.eigensystem, config.beta, config.avg_radius)
    bundle.xi_p = xi_p
    bundle.xi_d_matrix = xi_d
    bundle.transport_summary = {
        "t_max": config.t_max,
        "n_t": config.n_t,
        "xi_dia": [[float(v) for v in row] for row in xi_d],
        "xi_para_max_abs": float(np.max(np.abs(xi_p.values))),
    }


def _stage_measure(config: RunConfig, bundle: ResultBundle) -> None:
    mu_p = build_measure(bundle.eigensystem, config.beta, config.avg_radius)
    # The driven current responds with minus the diamagnetic matrix; the same
    # signed combination fixes the zero atom of the full measure.
    mu_full = full_conductivity_measure(mu_p, -bundle.xi_d_matrix)
    bundle.mu_p = mu_p
    bundle.mu_full = mu_full
    bundle.measure_summary = {
        "n_atoms": int(mu_p.n_atoms),
        "mass_trace": float(np.trace(mu_p.mass())),
        "restricted_mass_trace": float(np.trace(mu_p.restricted_mass())),
        "zero_weight_trace": float(np.trace(mu_p.zero_weight())),
        "full_zero_weight_trace": float(np.trace(mu_full.zero_weight())),
        "min_atom_eigenvalue": mu_p.min_atom_eigenvalue(),
        "minimum_gap": mu_p.minimum_gap() if np.isfinite(mu_p.minimum_gap()) else None,
    }


def _xi_para_blocked(es: EigenSystem, beta: float, l: int, grid: np.ndarray) -> TransportKernel:
    """xi_para evaluated in time blocks to cap the phase-matrix footprint."""
    n_pairs = es.n * es.n
    rows = max(32, (1 << 22) // max(1, n_pairs))
    if grid.size <= rows:
        return xi_para(es, beta, l, grid)
    chunks = [
        xi_para(es, beta, l, grid[i:i + rows]).values
        for i in range(0, grid.size, rows)
    ]
    whole = xi_para(es, beta, l, grid[:2])
    return TransportKernel(grid=grid, values=np.concatenate(chunks, axis=0), meta=whole.meta)


def _drive_kernel(config: RunConfig, bundle: ResultBundle, span: float) -> TransportKernel:
    """Paramagnetic kernel on a grid fine enough for the current convolution."""
    n_nodes = max(4 * (config.n_t - 1), 1600) + 1
    grid = np.linspace(0.0, span, n_nodes)
    return _xi_para_blocked(bundle.eigensystem, config.beta, config.avg_radius, grid)


def _stage_drive(config: RunConfig, bundle: ResultBundle) -> None:
    field = config.field_profile()
    t_final = config.t_off + 0.25 * config.window()
    xi_fine = _drive_kernel(config, bundle, t_final - config.t_on)
    xi_d_signed = -bundle.xi_d_matrix
    rows = []
    d = config.dimension
    for eta in config.eta:
        run = evolve_trajectory(
            bundle.box,
            bundle.potential,
            config.lam,
            field,
            eta,
            config.beta,
            t_final=t_final,
            dt=config.dt,
            n_samples=121,
        )
        bundle.runs[eta] = run
        for state in run.states:
            j_p, j_d = nonlinear_currents(state, field, eta, state.time, config.avg_radius)
            _, _, j_lin = linear_currents(xi_fine, xi_d_signed, field, state.time)
            rows.append(
                (float(state.time), float(eta))
                + tuple(float(v) for v in j_p)
                + tuple(float(v) for v in j_d)
                + tuple(float(eta * v) for v in j_lin)
            )
    header = (
        ["t", "eta"]
        + [f"Jp_{k + 1}" for k in range(d)]
        + [f"Jd_{k + 1}" for k in range(d)]
        + [f"Jlin_{k + 1}" for k in range(d)]
    )
    bundle.current_rows = [tuple(header)] + rows


def _stage_joule(config: RunConfig, bundle: ResultBundle) -> None:
    rows = []
    for eta in config.eta:
        run = bundle.runs[eta]
        ledger = energy_increments(run, bundle.box)
        for i, t in enumerate(ledger.times):
            rows.append(
                (
                    float(t),
                    float(eta),
                    float(ledger.S[i]),
                    float(ledger.P[i]),
                    float(ledger.I_p[i]),
                    float(ledger.I_d[i]),
                    float(ledger.total_work[i]),
                )
            )
    bundle.ledger_rows = [("t", "eta", "S", "P", "Ip", "Id", "work")] + rows

    etas = sorted(set(config.eta), reverse=True)
    if len(etas) >= 3:
        # Residual-vs-eta slopes need a ladder; reuse the scaling engine with
        # the run's own geometry (its drive always points along e_1).
        scaling_cfg = {
            "dimension": config.dimension,
            "box_radius": config.box_radius,
            "avg_radius": config.avg_radius,
            "beta": config.beta,
            "lam": config.lam,
            "seed": config.seeds[0],
            "dist": config.dist,
            "t_on": config.t_on,
            "t_off": config.t_off,
            "amplitude": config.amplitude,
            "carrier": config.carrier,
            "coast": 0.25 * config.window(),
            "base_steps": max(200, int(round(config.window() / config.dt))),
        }
        bundle.joule_report = ohm_joule_scaling_check(scaling_cfg, etas)
    else:
        bundle.joule_report = {
            "note": "eta ladder shorter than 3; residual slopes not fitted",
            "eta": list(config.eta),
        }


def _stage_verify(config: RunConfig, bundle: ResultBundle) -> None:
    bundle.verify_report = _verify_identities(config, bundle)


_STAGE_IMPL = {
    "equilibrium": _stage_equilibrium,
    "transport": _stage_transport,
    "measure": _stage_measure,
    "drive": _stage_drive,
    "joule": _stage_joule,
    "verify": _stage_verify,
}


# ---------------------------------------------------------------------------
# verify battery


def _verify_identities(config: RunConfig, bundle: ResultBundle) -> dict:
    """Evaluate the identity battery; pass means residual <= tolerance."""
    es = bundle.eigensystem
    beta = config.beta
    l = config.avg_radius
    report: dict = {}

    def record(name, residual, tolerance):
        residual = float(residual)
        tolerance = float(tolerance)
        report[name] = {
            "residual": residual,
            "tolerance": tolerance,
            "pass": bool(residual <= tolerance),
        }

    h = build_hamiltonian(bundle.box, bundle.potential, config.lam).matrix
    record("hamiltonian_hermitian", np.max(np.abs(h - h.conj().T)), 1e-12)

    occ = np.linalg.eigvalsh(fermi_symbol(es, beta).matrix)
    record("symbol_range", max(0.0, float(occ[-1]) - 1.0, -float(occ[0])), 1e-12)

    short = np.linspace(0.0, 1.5, 4)
    xi_a = xi_para(es, beta, l, short)
    xi_b = xi_para_commutator_route(es, beta, l, short)
    record("green_kubo_routes", np.max(np.abs(xi_a.values - xi_b.values)), 1e-8)

    rec = eval_xi_from_measure(bundle.mu_p, bundle.xi_p.grid)
    record("kernel_measure_cosine", np.max(np.abs(rec.values - bundle.xi_p.values)), 1e-8)

    record("measure_atoms_psd", max(0.0, -bundle.mu_p.min_atom_eigenvalue()), 1e-10)

    mass_ref = duhamel_mass_matrix(es, beta, l)
    record("measure_total_mass", np.max(np.abs(bundle.mu_p.mass() - mass_ref)), 1e-9)

    vals = bundle.xi_p.values
    sym_defect = np.max(np.abs(vals - np.transpose(vals, (0, 2, 1))))
    eig_max = max(
        float(np.max(np.linalg.eigvalsh(0.5 * (m + m.T)))) for m in vals
    )
    record(
        "xi_para_structure",
        max(float(np.max(np.abs(vals[0]))), float(sym_defect), eig_max),
        1e-10,
    )

    diag = np.diagonal(bundle.xi_d_matrix)
    record("xi_dia_range", max(0.0, float(np.max(np.abs(diag))) - 2.0), 1e-12)

    try:
        # Time-domain Laplace quadrature against the spectral closed form at
        # a moderate eps; at eps = 2 the 14-unit window truncates below 1e-11.
        # The viscosity divides the signed response kernel, the admittance
        # prefactor keeps the unsigned diamagnetic matrix.
        fine = np.linspace(0.0, 14.0, 2801)
        visc = viscosity(_xi_para_blocked(es, beta, l, fine), -bundle.xi_d_matrix)
        a_kernel = static_admittance(bundle.xi_d_matrix, visc, 2.0)
        a_measure = static_admittance(bundle.xi_d_matrix, bundle.mu_p, 2.0)
        record(
            "admittance_static_routes",
            np.max(np.abs(a_kernel - a_measure)),
            1e-4 * (1.0 + float(np.max(np.abs(a_measure)))),
        )
    except SingularKernelError:
        # A vanishing diamagnetic diagonal leaves no viscosity route to check.
        record("admittance_static_routes", 0.0, 1e-4)

    gap = bundle.mu_p.minimum_gap()
    if np.isfinite(gap):
        eps_dc = 1e-5 * min(gap, 1.0)
        a_dc = static_admittance(bundle.xi_d_matrix, bundle.mu_p, eps_dc)
        restricted = bundle.mu_p.restricted_mass()
        record(
            "admittance_dc_limit",
            np.max(np.abs(a_dc - restricted)),
            1e-9 * (1.0 + float(np.max(np.abs(restricted)))),
        )
    else:
        record("admittance_dc_limit", 0.0, 1e-9)

    trace = float(np.trace(bundle.mu_p.restricted_mass()))
    record("measure_nontrivial", max(0.0, 1e-6 - trace), 0.0)

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        c = rng.normal(size=(es.n, es.n)) + 1j * rng.normal(size=(es.n, es.n))
        obs = QuadraticObservable(coefficient=c, box=bundle.box)
        val = duhamel_inner_product(es, beta, obs, obs)
        worst = max(worst, abs(float(np.imag(val))), max(0.0, -float(np.real(val))))
    record("duhamel_positivity", worst, 1e-10)

    # Closed-form two-site reference: spectrum {1, 3}, Fermi off-diagonal
    # (f(1) - f(3))/2, diamagnetic bond coefficient f(3) - f(1), all at beta 1.
    es2 = eigendecompose(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    record(
        "two_site_spectrum",
        np.max(np.abs(es2.energies - np.array([1.0, 3.0]))),
        1e-12,
    )
    f1 = 1.0 / (1.0 + np.exp(1.0))
    f3 = 1.0 / (1.0 + np.exp(3.0))
    d2 = fermi_symbol(es2, 1.0).matrix
    record("two_site_symbol", abs(d2[0, 1] - 0.5 * (f1 - f3)), 1e-12)
    record("two_site_dia", abs(sigma_dia(es2, 1.0, (0, 1)) - (f3 - f1)), 1e-12)

    # Driven identities on a short in-place run at the smallest eta.
    field = config.field_profile()
    eta_v = min(config.eta)
    dt_v = max(config.dt, config.window() / 800.0)
    t_mid = 0.5 * (config.t_on + config.t_off)

    u = evolve_propagator(
        bundle.box, bundle.potential, config.lam, field, eta_v,
        config.t_on, config.t_off, dt_v,
    )
    record("propagator_unitary", u.unitarity_defect(), 1e-9)

    res = continuity_residual(
        bundle.box, bundle.potential, config.lam, field, eta_v, beta, t_mid, dt_v
    )
    record("charge_continuity", res, max(1e-7, 0.5 * dt_v**2))

    run = evolve_trajectory(
        bundle.box, bundle.potential, config.lam, field, eta_v, beta,
        dt=dt_v, n_samples=41,
    )
    ledger = energy_increments(run, bundle.box)
    span_t = float(ledger.times[-1] - ledger.times[0])
    record("first_law", ledger.first_law_defect(), 10.0 * dt_v**2 * span_t)
    record("passivity", max(0.0, -float(np.min(ledger.S))), 1e-10)
    off = ledger.times >= config.t_off - 1e-12
    record(
        "switch_off_potential",
        float(np.max(np.abs(ledger.P[off]))) if off.any() else 0.0,
        1e-10,
    )

    j_four, diag_info = fourier_ohm_current(
        bundle.mu_full, field, t_mid, return_diagnostics=True
    )
    xi_fine = _drive_kernel(config, bundle, t_mid - config.t_on)
    _, _, j_lin = linear_currents(xi_fine, -bundle.xi_d_matrix, field, t_mid)
    record(
        "fourier_ohm_route",
        np.max(np.abs(j_four - j_lin)),
        max(1e-6, diag_info["route_tolerance"]),
    )
    return report


# ---------------------------------------------------------------------------
# export and reload


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header, rows, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {config_hash}\n")
        fh.write(f"# code_version: {__version__}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict, config_hash: str) -> None:
    body = {"config_hash": config_hash, "code_version": __version__}
    body.update(payload)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def measure_header(dim: int) -> list:
    return ["nu"] + [f"M_{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]


def export(bundle: ResultBundle, out_dir=None, format: str = "csv") -> list:
    """Write the bundle's tables under ``out_dir``; returns the paths written.

    csv mode writes one CSV per table plus JSON sidecars for summaries; json
    mode embeds the tables in the sidecars instead.  Either way the files are
    a pure function of the bundle, so serial reruns are bitwise identical.
    """
    if format not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got {format!r}")
    out = Path(out_dir) if out_dir is not None else Path(bundle.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = bundle.config_hash
    written = []

    def emit_table(name, header, rows):
        if format == "csv":
            path = out / f"{name}.csv"
            _write_csv(path, header, rows, h)
        else:
            path = out / f"{name}.json"
            _write_json(
                path,
                {"columns": list(header), "rows": [[float(v) for v in r] for r in rows]},
                h,
            )
        written.append(path)

    path = out / "config.json"
    _write_json(path, {"config": bundle.config.normalized(), "stages": list(bundle.stages)}, h)
    written.append(path)

    if bundle.equilibrium_summary is not None:
        path = out / "equilibrium.json"
        _write_json(path, bundle.equilibrium_summary, h)
        written.append(path)

    if bundle.xi_p is not None:
        rows = []
        for i, t in enumerate(bundle.xi_p.grid):
            for k in range(bundle.xi_p.dim):
                for q in range(bundle.xi_p.dim):
                    rows.append((float(t), k + 1, q + 1, float(bundle.xi_p.values[i, k, q])))
        emit_table("xi_para", ["t", "k", "q", "value"], rows)
        path = out / "transport.json"
        _write_json(path, bundle.transport_summary, h)
        written.append(path)

    if bundle.mu_full is not None:
        dim = bundle.mu_full.dim if not bundle.mu_full.is_empty else bundle.config.dimension
        rows = [
            (float(nu),) + tuple(float(v) for v in w.reshape(-1))
            for nu, w in zip(bundle.mu_full.frequencies, bundle.mu_full.weights)
        ]
        emit_table("measure_atoms", measure_header(dim), rows)
        path = out / "measure.json"
        _write_json(path, bundle.measure_summary, h)
        written.append(path)

    if bundle.current_rows is not None:
        header, *rows = bundle.current_rows
        emit_table("currents", list(header), rows)

    if bundle.ledger_rows is not None:
        header, *rows = bundle.ledger_rows
        emit_table("energies", list(header), rows)
        if bundle.joule_report is not None:
            path = out / "joule.json"
            _write_json(path, {"report": _jsonable(bundle.joule_report)}, h)
            written.append(path)

    if bundle.verify_report is not None:
        path = out / "verify_report.json"
        _write_json(path, {"identities": bundle.verify_report}, h)
        written.append(path)

    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _read_csv(path) -> tuple:
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if header is None:
                header = parts
            else:
                rows.append([float(p) for p in parts])
    if header is None:
        raise ConfigError(f"no header row in {path}")
    return header, rows


def load_table(path) -> dict:
    """Read a pipeline CSV back as a dict of column name -> float array."""
    header, rows = _read_csv(path)
    data = np.asarray(rows, dtype=float) if rows else np.zeros((0, len(header)))
    return {name: data[:, i].copy() for i, name in enumerate(header)}


def load_kernel(path) -> TransportKernel:
    """Rebuild a TransportKernel from an exported xi_para table."""
    table = load_table(path)
    t = table["t"]
    k = table["k"].astype(int)
    q = table["q"].astype(int)
    dim = int(k.max()) if k.size else 1
    grid = np.unique(t)
    values = np.zeros((grid.size, dim, dim))
    idx = np.searchsorted(grid, t)
    values[idx, k - 1, q - 1] = table["value"]
    return TransportKernel(grid=grid, values=values)


def load_measure(path, zero_tol: float = 0.0) -> SpectralMeasure:
    """Rebuild a SpectralMeasure from an exported atoms table.

    A header-only file round-trips to the empty measure; the weight dimension
    comes from the column count.
    """
    header, rows = _read_csv(path)
    dim = int(round(math.sqrt(len(header) - 1)))
    if 1 + dim * dim != len(header):
        raise ConfigError(f"atom table has {len(header)} columns, not 1 + d^2")
    if not rows:
        return SpectralMeasure(np.zeros(0), np.zeros((0, dim, dim)), zero_tol=zero_tol)
    data = np.asarray(rows, dtype=float)
    freqs = data[:, 0]
    weights = data[:, 1:].reshape(-1, dim, dim)
    return SpectralMeasure(freqs, weights, zero_tol=zero_tol)


def load_report(path) -> dict:
    """Read back a JSON sidecar (verify report, summaries)."""
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# sweep


def _sweep_one(config: RunConfig, seed: int, out_root: Path, format: str) -> list:
    cfg = replace(config, seeds=(seed,), out_dir=str(out_root / f"seed_{seed}"))
    stages = ("equilibrium", "transport", "drive", "joule")
    bundle = run_pipeline(cfg, stages)
    export(bundle, format=format)
    rows = []
    for eta in cfg.eta:
        ledger = energy_increments(bundle.runs[eta], bundle.box)
        j_p_max = 0.0
        for row in bundle.current_rows[1:]:
            if row[1] == eta:
                j_p_max = max(j_p_max, max(abs(v) for v in row[2:2 + cfg.dimension]))
        rows.append(
            (
                seed,
                float(eta),
                float(ledger.S[-1]),
                float(ledger.P[-1]),
                float(ledger.total_work[-1]),
                float(ledger.first_law_defect()),
                j_p_max,
            )
        )
    return rows


def run_sweep(config: RunConfig, out_dir=None, threads: int = 1, format: str = "csv") -> Path:
    """Drive + ledger runs over the seed list; one subdirectory per seed.

    Workers share nothing: each draws its disorder from its own seed, so the
    summary is identical whether the sweep runs serially or threaded.
    """
    out_root = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    seeds = list(config.seeds)
    if threads > 1 and len(seeds) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda s: _sweep_one(config, s, out_root, format), seeds
            ))
    else:
        results = [_sweep_one(config, s, out_root, format) for s in seeds]
    rows = [row for chunk in results for row in chunk]
    path = out_root / "sweep_summary.csv"
    _write_csv(
        path,
        ["seed", "eta", "S_final", "P_final", "work_final", "first_law_max", "Jp_max"],
        rows,
        config.config_hash(),
    )
    return path


# ---------------------------------------------------------------------------
# command line


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fermilat",
        description="Staged transport pipeline for disordered lattice fermions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "equilibrium": "box, disorder draw, Hamiltonian, Gibbs symbol summary",
        "transport": "paramagnetic kernel and diamagnetic matrix",
        "measure": "conductivity measure atoms and summaries",
        "drive": "driven trajectories and current tables over the eta ladder",
        "joule": "energy ledgers and residual-scaling report",
        "verify": "identity battery with per-identity pass/fail",
        "sweep": "drive + ledger runs over the seed list",
    }
    for name in STAGES + ("sweep",):
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads (sweep only)")
        sp.add_argument("--stages", default=None,
                        help="comma-separated stage set; must be dependency-closed")
        sp.add_argument("--format", default="csv", choices=("csv", "json"),
                        help="table output format")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        if args.command == "sweep":
            path = run_sweep(config, threads=args.threads, format=args.format)
            print(f"sweep summary written to {path}")
            return 0
        if args.stages is not None:
            stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
        else:
            stages = stage_closure(args.command)
        bundle = run_pipeline(config, stages)
        written = export(bundle, format=args.format)
        for path in written:
            print(f"wrote {path}")
        if bundle.verify_report is not None:
            failed = 0
            for name, entry in bundle.verify_report.items():
                status = "PASS" if entry["pass"] else "FAIL"
                print(
                    f"{status} {name}: residual {entry['residual']:.3e} "
                    f"(tolerance {entry['tolerance']:.3e})"
                )
                failed += 0 if entry["pass"] else 1
            if failed:
                print(f"{failed} identit{'y' if failed == 1 else 'ies'} failed")
                return 1
        return 0
    except FermilatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
