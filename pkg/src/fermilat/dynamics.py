"""Driven one-particle dynamics and the energy bookkeeping of a run.

Midpoint-exponential propagation under the Peierls-coupled field, driven
bond currents, the potential-energy observable of the coupling, the four
energy increments (internal, potential, paramagnetic, diamagnetic) with the
cumulative work integral, and the eta-scaling report behind the microscopic
Ohm and Joule statements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ._errors import DomainError, GridError, ShapeError
from .lattice import (
    _GL01_NODES,
    _GL01_WEIGHTS,
    _bond_list,
    _bond_phase,
    FieldProfile,
    HermitianOperator,
    LatticeBox,
    Potential,
    build_hamiltonian,
    make_box,
    sample_potential,
)
from .measure import build_measure
from .spectral import (
    DensityMatrix,
    QuadraticObservable,
    eigendecompose,
    fermi_symbol,
)
from .transport import _averaging_sites, averaging_volume, xi_dia, xi_para
from .response import linear_currents

UNITARITY_TOL = 1e-9
DEFAULT_STEPS = 2000
DEFAULT_SAMPLES = 241


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Propagator:
    """Unitary U_{t_end, t_start} of the driven one-particle equation."""

    matrix: np.ndarray
    t_start: float
    t_end: float
    step: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def unitarity_defect(self) -> float:
        gram = self.matrix.conj().T @ self.matrix
        return float(np.max(np.abs(gram - np.eye(self.n))))


@dataclass(frozen=True)
class DrivenState:
    """One-particle symbol d_t = U d_0 U^dagger with its run metadata."""

    symbol: DensityMatrix
    time: float
    eta: float = 0.0
    field: FieldProfile | None = None
    box: LatticeBox | None = None

    def trace(self) -> float:
        return float(np.real(np.trace(self.symbol.matrix)))

    def eigenvalue_range(self) -> tuple:
        vals = np.linalg.eigvalsh(self.symbol.matrix)
        return float(vals[0]), float(vals[-1])


@dataclass(frozen=True)
class EnergyLedger:
    """Time series of the four energy increments and the cumulative work.

    By construction I_p = S + P - I_d per sample, so the splitting identity
    is exact; the independent check is against total_work.
    """

    times: np.ndarray
    S: np.ndarray
    P: np.ndarray
    I_p: np.ndarray
    I_d: np.ndarray
    total_work: np.ndarray

    def first_law_defect(self) -> float:
        return float(np.max(np.abs(self.S + self.P - self.total_work)))

    def splitting_defect(self) -> float:
        return float(np.max(np.abs(self.S + self.P - self.I_p - self.I_d)))


@dataclass(frozen=True)
class DrivenRun:
    """Sampled driven trajectory plus the per-step work accumulator."""

    box: LatticeBox
    potential: Potential
    lam: float
    field: FieldProfile
    eta: float
    t_start: float
    t_end: float
    step: float
    times: np.ndarray
    states: tuple
    work_times: np.ndarray
    work_cumulative: np.ndarray
    sample_steps: np.ndarray
    propagator: Propagator
    hamiltonian: HermitianOperator
    equilibrium: DensityMatrix


# ---------------------------------------------------------------------------
# field geometry on the bond set


def _driven_bonds(field: FieldProfile, box: LatticeBox):
    """Oriented bonds with a nonzero Peierls factor and their geometry.

    Returns (rows, cols, g): site(cols[b]) = site(rows[b]) + e_k and the hop
    entry (rows[b], cols[b]) carries the phase eta * A(t) * g[b] at time t.
    The line integral uses the same fixed-order rule as the Hamiltonian
    builder, so the two agree exactly.
    """
    if field.dimension != box.dimension:
        raise ShapeError("field direction dimension does not match the box")
    rows, cols, geo = [], [], []
    for i, j, k in _bond_list(box):
        if field.direction[k] == 0.0:
            continue
        u = box.sites[i].astype(float)
        delta = np.zeros(box.dimension)
        delta[k] = 1.0
        pts = u[None, :] + _GL01_NODES[:, None] * delta[None, :]
        frac = float(_GL01_WEIGHTS @ field._component_support(pts, k).astype(float))
        if frac != 0.0:
            rows.append(i)
            cols.append(j)
            geo.append(field.direction[k] * frac)
    return (
        np.asarray(rows, dtype=int),
        np.asarray(cols, dtype=int),
        np.asarray(geo, dtype=float),
    )


def potential_energy_observable(
    field: FieldProfile, eta: float, t: float, box: LatticeBox
) -> QuadraticObservable:
    """Observable with coefficient <e_x, (Delta^{eta A} - Delta) e_y>.

    Supported on the driven bonds only; vanishes identically for eta = 0 or
    t outside the field window.  Expanding the entry -(e^{i phi} - 1) in eta
    gives the current and adjacency coefficients at first and second order.
    """
    n = box.n_sites
    coeff = np.zeros((n, n), dtype=complex)
    amp = field.envelope(float(t))
    if eta != 0.0 and amp != 0.0:
        rows, cols, geo = _driven_bonds(field, box)
        vals = -(np.exp(1j * eta * amp * geo) - 1.0)
        coeff[rows, cols] = vals
        coeff[cols, rows] = np.conj(vals)
    return QuadraticObservable(coefficient=coeff, box=box)


# ---------------------------------------------------------------------------
# propagation


def _step_count(t0: float, t: float, dt: float):
    span = float(t) - float(t0)
    k = max(1, int(math.ceil(span / float(dt) - 1e-12)))
    return k, span / k


def _midpoint_steps(box, pot, lam, field, eta, t0, t, dt_eff, n_steps):
    """Yield (step_index, boundary_time, U) including the initial identity.

    One exponential per step, built from the eigendecomposition of the
    midpoint Hamiltonian; steps whose midpoint lies outside the field window
    reuse a cached equilibrium exponential and are therefore exact.
    """
    n = box.n_sites
    h0 = build_hamiltonian(box, pot, lam).matrix
    es0 = np.linalg.eigh(h0)
    coast = (es0[1] * np.exp(-1j * dt_eff * es0[0])) @ es0[1].conj().T
    rows, cols, geo = _driven_bonds(field, box)
    u_mat = np.eye(n, dtype=complex)
    yield 0, float(t0), u_mat
    for m in range(n_steps):
        t_mid = t0 + (m + 0.5) * dt_eff
        amp = field.envelope(float(t_mid))
        if eta == 0.0 or amp == 0.0 or rows.size == 0:
            u_mat = coast @ u_mat
        else:
            h_mid = h0.astype(complex)
            vals = -np.exp(1j * eta * amp * geo)
            h_mid[rows, cols] = vals
            h_mid[cols, rows] = np.conj(vals)
            w_, v_ = np.linalg.eigh(h_mid)
            u_mat = (v_ * np.exp(-1j * dt_eff * w_)) @ v_.conj().T @ u_mat
        yield m + 1, t0 + (m + 1) * dt_eff, u_mat


def evolve_propagator(
    box: LatticeBox,
    pot: Potential,
    lam: float,
    field: FieldProfile,
    eta: float,
    t0: float,
    t: float,
    dt: float,
) -> Propagator:
    """Propagator U_{t, t0} by the midpoint-exponential product scheme.

    The step is shrunk so that an integer number of steps covers [t0, t];
    the local error is O(dt^3) in the driven phase and zero in the coasting
    one, giving second-order global convergence.
    """
    if dt <= 0.0:
        raise DomainError("step dt must be positive")
    if t < t0:
        raise DomainError("final time precedes initial time")
    if t == t0:
        return Propagator(
            matrix=np.eye(box.n_sites, dtype=complex), t_start=t0, t_end=t, step=dt
        )
    k, dt_eff = _step_count(t0, t, dt)
    u_mat = None
    for _, _, u_mat in _midpoint_steps(box, pot, lam, field, eta, t0, t, dt_eff, k):
        pass
    return Propagator(matrix=u_mat, t_start=float(t0), t_end=float(t), step=dt_eff)


def evolve_state(
    d0: DensityMatrix,
    propagator: Propagator,
    field: FieldProfile | None = None,
    eta: float = 0.0,
    box: LatticeBox | None = None,
) -> DrivenState:
    """Schrodinger-side update d_t = U d_0 U^dagger of the symbol."""
    if d0.matrix.shape[0] != propagator.n:
        raise ShapeError("symbol and propagator sizes differ")
    m = propagator.matrix @ d0.matrix @ propagator.matrix.conj().T
    m = 0.5 * (m + m.conj().T)
    return DrivenState(
        symbol=DensityMatrix(matrix=m, beta=d0.beta),
        time=propagator.t_end,
        eta=eta,
        field=field,
        box=box,
    )


# ---------------------------------------------------------------------------
# currents of a driven state


def nonlinear_currents(state: DrivenState, field: FieldProfile, eta: float, t: float, l: int):
    """Space-averaged paramagnetic and diamagnetic current densities.

    J_p averages the plain bond currents -2 Im d_t[x+e_k, x] over the
    sub-box of radius l (their equilibrium expectation vanishes identically,
    so no subtraction term is needed); J_d averages
    -2 Im[(e^{i phi} - 1) d_t[x+e_k, x]] with phi the field line integral
    along the bond, traversed from x+e_k to x.
    """
    box = state.box
    if box is None:
        raise DomainError("state does not carry its lattice box")
    if field.dimension != box.dimension:
        raise DomainError("field dimension does not match the state's box")
    d = box.dimension
    sites = _averaging_sites(box, l)
    vol = averaging_volume(box, l)
    j_p = np.zeros(d)
    j_d = np.zeros(d)
    if eta == 0.0:
        return j_p, j_d
    m = state.symbol.matrix
    amp = field.envelope(float(t))
    for k in range(d):
        shifted = box.sites[sites].copy()
        shifted[:, k] += 1
        acc_p = 0.0
        acc_d = 0.0
        for i, y in zip(sites, shifted):
            j = box.index(tuple(y))
            val = m[j, i]
            acc_p += -2.0 * val.imag
            if amp != 0.0:
                phi = _bond_phase(
                    field, eta, float(t), y.astype(float), box.sites[i].astype(float)
                )
                if phi != 0.0:
                    acc_d += -2.0 * ((np.exp(1j * phi) - 1.0) * val).imag
        j_p[k] = acc_p / vol
        j_d[k] = acc_d / vol
    return j_p, j_d


# ---------------------------------------------------------------------------
# trajectories and energy increments


def evolve_trajectory(
    box: LatticeBox,
    pot: Potential,
    lam: float,
    field: FieldProfile,
    eta: float,
    beta: float,
    t_final: float | None = None,
    dt: float | None = None,
    n_samples: int = DEFAULT_SAMPLES,
) -> DrivenRun:
    """Drive the equilibrium state from the field onset and sample the run.

    The run starts at t_on in the Gibbs symbol of the undriven Hamiltonian
    and ends at ``t_final`` (default: one width unit past t_off).  States are
    stored at ~n_samples step boundaries; the work integrand rho_s(dW_s/ds)
    is accumulated at EVERY step with the analytic phase derivative, so the
    first-law comparison is limited by the integrator alone.  Memory scales
    as n_samples * n_sites^2.
    """
    if field.dimension != box.dimension:
        raise ShapeError("field direction dimension does not match the box")
    t0 = float(field.t_on)
    width = field.t_off - field.t_on
    if t_final is None:
        t_final = field.t_off + 0.25 * width
    if t_final < field.t_off:
        raise DomainError("t_final should not precede the field switch-off")
    if dt is None:
        dt = width / DEFAULT_STEPS
    if dt <= 0.0:
        raise DomainError("step dt must be positive")
    if n_samples < 2:
        raise DomainError("need at least two samples")

    h = build_hamiltonian(box, pot, lam)
    es = eigendecompose(h)
    d0 = fermi_symbol(es, beta)
    d0m = d0.matrix

    k_steps, dt_eff = _step_count(t0, t_final, dt)
    sample_steps = np.unique(
        np.round(np.linspace(0, k_steps, min(n_samples, k_steps + 1))).astype(int)
    )
    sample_set = set(int(s) for s in sample_steps)

    rows, cols, geo = _driven_bonds(field, box)

    work_times = t0 + dt_eff * np.arange(k_steps + 1)
    work_cumulative = np.zeros(k_steps + 1)
    states = []
    times = []

    def work_integrand(time_b, u_mat):
        strength = field.field_strength(float(time_b))
        if eta == 0.0 or strength == 0.0 or rows.size == 0:
            return 0.0
        amp = field.envelope(float(time_b))
        # dW/dt entry on (rows, cols): i * eta * E(t) * g * e^{i eta A(t) g}
        dw = 1j * eta * strength * geo * np.exp(1j * eta * amp * geo)
        block = u_mat[cols, :] @ d0m  # (B, n)
        bond_vals = np.einsum("bn,bn->b", block, u_mat[rows, :].conj())
        return float(2.0 * np.real(np.sum(dw * bond_vals)))

    prev_integrand = 0.0
    final_u = None
    for step_idx, time_b, u_mat in _midpoint_steps(
        box, pot, lam, field, eta, t0, t_final, dt_eff, k_steps
    ):
        cur_integrand = work_integrand(time_b, u_mat)
        if step_idx > 0:
            work_cumulative[step_idx] = work_cumulative[step_idx - 1] + 0.5 * dt_eff * (
                prev_integrand + cur_integrand
            )
        prev_integrand = cur_integrand
        if step_idx in sample_set:
            m = u_mat @ d0m @ u_mat.conj().T
            m = 0.5 * (m + m.conj().T)
            states.append(
                DrivenState(
                    symbol=DensityMatrix(matrix=m, beta=beta),
                    time=float(time_b),
                    eta=eta,
                    field=field,
                    box=box,
                )
            )
            times.append(float(time_b))
        final_u = u_mat

    propagator = Propagator(
        matrix=final_u, t_start=t0, t_end=float(t_final), step=dt_eff
    )
    return DrivenRun(
        box=box,
        potential=pot,
        lam=lam,
        field=field,
        eta=eta,
        t_start=t0,
        t_end=float(t_final),
        step=dt_eff,
        times=np.asarray(times),
        states=tuple(states),
        work_times=work_times,
        work_cumulative=work_cumulative,
        sample_steps=sample_steps,
        propagator=propagator,
        hamiltonian=h,
        equilibrium=d0,
    )


def energy_increments(run: DrivenRun, box: LatticeBox) -> EnergyLedger:
    """The four energy increments and the cumulative work on the sample grid.

    S(t) = Tr(h (d_t - d_0)) with the full truncated Hamiltonian; P(t) is
    the driven expectation of the potential-energy observable, I_d its
    equilibrium expectation, and I_p closes the splitting identity.  The
    boundary buffer keeps leakage out of the field region negligible; doubling
    the box radius and comparing ledgers is the direct check.
    """
    if box is not run.box and (
        box.dimension != run.box.dimension or box.n_sites != run.box.n_sites
    ):
        raise GridError("ledger requested on a different box than the run")
    if not run.states:
        raise GridError("trajectory carries no sampled states")
    h = run.hamiltonian.matrix
    d0m = run.equilibrium.matrix
    n_s = len(run.states)
    s_arr = np.zeros(n_s)
    p_arr = np.zeros(n_s)
    id_arr = np.zeros(n_s)
    for idx, state in enumerate(run.states):
        dm = state.symbol.matrix
        s_arr[idx] = float(np.real(np.sum(h * (dm - d0m).T)))
        w_obs = potential_energy_observable(run.field, run.eta, state.time, box)
        p_arr[idx] = float(np.real(np.sum(w_obs.coefficient * dm.T)))
        id_arr[idx] = float(np.real(np.sum(w_obs.coefficient * d0m.T)))
    ip_arr = s_arr + p_arr - id_arr
    work = run.work_cumulative[run.sample_steps]
    return EnergyLedger(
        times=run.times.copy(),
        S=s_arr,
        P=p_arr,
        I_p=ip_arr,
        I_d=id_arr,
        total_work=work,
    )


def continuity_residual(
    box: LatticeBox,
    pot: Potential,
    lam: float,
    field: FieldProfile,
    eta: float,
    beta: float,
    t: float,
    dt: float,
) -> float:
    """Max over interior sites of d/dt <n_x> plus the outgoing bond currents.

    The time derivative is a central difference over one integrator step, so
    the residual is O(dt^2); interior means all 2d neighbors exist.
    """
    t0 = float(field.t_on)
    if t <= t0:
        raise DomainError("continuity check needs t past the field onset")
    if dt <= 0.0:
        raise DomainError("step dt must be positive")
    k = max(2, int(round((t - t0) / dt)))
    dt_eff = (t - t0) / k
    es = eigendecompose(build_hamiltonian(box, pot, lam))
    d0m = fermi_symbol(es, beta).matrix
    keep = {k - 1: None, k: None, k + 1: None}
    for step_idx, _, u_mat in _midpoint_steps(
        box, pot, lam, field, eta, t0, t + dt_eff, dt_eff, k + 1
    ):
        if step_idx in keep:
            m = u_mat @ d0m @ u_mat.conj().T
            keep[step_idx] = 0.5 * (m + m.conj().T)
    m_minus, m_mid, m_plus = keep[k - 1], keep[k], keep[k + 1]
    deriv = (np.real(np.diag(m_plus)) - np.real(np.diag(m_minus))) / (2.0 * dt_eff)
    worst = 0.0
    for i in range(box.n_sites):
        x = box.sites[i]
        div = 0.0
        interior = True
        for kk in range(box.dimension):
            for sign in (+1, -1):
                y = x.copy()
                y[kk] += sign
                key = tuple(int(c) for c in y)
                if not box.contains(key):
                    interior = False
                    break
                j = box.index(key)
                # Outgoing flow x -> y pairs the hopping phase of the matrix
                # entry (row x, col y) with <a*_x a_y>; flipping either
                # conjugation leaves an O(eta) defect on the support edge.
                val = m_mid[j, i]
                div += 2.0 * val.imag
                phi = _bond_phase(
                    field, eta, float(t), x.astype(float), y.astype(float)
                )
                if phi != 0.0:
                    div += 2.0 * ((np.exp(1j * phi) - 1.0) * val).imag
            if not interior:
                break
        if interior:
            worst = max(worst, abs(deriv[i] + div))
    return worst


# ---------------------------------------------------------------------------
# eta-scaling report (Ohm and Joule)


_SCALING_DEFAULTS = {
    "dimension": 1,
    "box_radius": 40,
    "avg_radius": 8,
    "beta": 1.0,
    "lam": 1.0,
    "seed": 7,
    "dist": "uniform",
    "t_on": 0.0,
    "t_off": 4.0,
    "amplitude": 1.0,
    "carrier": 1.5,
    "coast": 1.0,
    "base_steps": DEFAULT_STEPS,
    "n_samples": DEFAULT_SAMPLES,
    "fine_factor": 4,
}


def _fine_xi_projection(es, beta, l, u_grid, w, chunk: int = 512):
    """<w-row of Xi_p(u)> on a fine grid, evaluated in grid chunks."""
    d = es.box.dimension
    out = np.zeros((u_grid.size, d))
    for a in range(0, u_grid.size, chunk):
        seg = u_grid[a : a + chunk]
        out[a : a + chunk] = xi_para(es, beta, l, seg).values @ w
    return out


def ohm_joule_scaling_check(config: dict | None, eta_list) -> dict:
    """Residual scaling of driven currents and energies against linear response.

    For each eta the run's currents are compared with eta times the linear
    prediction (expected O(eta^2) residual) and the four ledger series with
    their eta^2 predictions (expected O(eta^3)); log-log slopes are fitted
    across the ladder.  After switch-off the heat is also compared with the
    measure pairing (1/2) sum_a |E_hat(nu_a)|^2 <w, M_a w> scaled by
    eta^2 |box_l|.  Step counts double as eta shrinks so integrator noise
    stays below the residuals being measured.
    """
    etas = [float(e) for e in eta_list]
    if len(etas) < 3 or any(b >= a for a, b in zip(etas, etas[1:])):
        raise DomainError("need at least three strictly decreasing eta values")
    cfg = dict(_SCALING_DEFAULTS)
    cfg.update(config or {})

    d = int(cfg["dimension"])
    box = make_box(d, int(cfg["box_radius"]))
    pot = sample_potential(box, int(cfg["seed"]), dist=str(cfg["dist"]))
    lam = float(cfg["lam"])
    beta = float(cfg["beta"])
    l = int(cfg["avg_radius"])
    direction = np.zeros(d)
    direction[0] = 1.0
    field = FieldProfile(
        direction=direction,
        support_radius=l,
        t_on=float(cfg["t_on"]),
        t_off=float(cfg["t_off"]),
        amplitude=float(cfg["amplitude"]),
        carrier=float(cfg["carrier"]),
    )
    t_final = field.t_off + float(cfg["coast"])
    vol = averaging_volume(box, l)
    w = direction

    es = eigendecompose(build_hamiltonian(box, pot, lam))
    xi_d_signed = -xi_dia(es, beta, l)
    x_pos = float(w @ (-xi_d_signed) @ w)

    # linear prediction on a fine grid shared by the whole ladder
    k_fine = int(cfg["fine_factor"]) * int(cfg["base_steps"])
    s_grid = np.linspace(field.t_on, t_final, k_fine + 1)
    h_fine = s_grid[1] - s_grid[0]
    xi_w = _fine_xi_projection(es, beta, l, s_grid - s_grid[0], w)
    strength = np.asarray(field.field_strength(s_grid), dtype=float)
    j_lin_p = np.zeros((k_fine + 1, d))
    for comp in range(d):
        conv = np.convolve(xi_w[:, comp], strength)[: k_fine + 1]
        corr = 0.5 * (xi_w[: k_fine + 1, comp] * strength[0] + xi_w[0, comp] * strength)
        j_lin_p[:, comp] = h_fine * (conv - corr)
    integral_e = np.asarray(field.strength_integral(s_grid), dtype=float)
    j_lin_d = integral_e[:, None] * (xi_d_signed @ w)[None, :]
    # paramagnetic energy base: cumulative int E <w, J_p^lin>
    ip_base = np.concatenate(
        [
            [0.0],
            np.cumsum(
                0.5
                * h_fine
                * (
                    (strength * (j_lin_p @ w))[1:]
                    + (strength * (j_lin_p @ w))[:-1]
                )
            ),
        ]
    )

    # heat prediction from the measure pairing
    mu = build_measure(es, beta, l)
    m_w = np.einsum("a,jab,b->j", w, mu.weights, w)
    e_hat = np.zeros(mu.n_atoms, dtype=complex)
    window = s_grid[s_grid <= field.t_off + 1e-12]
    sw = np.asarray(field.field_strength(window), dtype=float)
    block = max(1, (1 << 22) // window.size)
    for a in range(0, mu.n_atoms, block):
        nus = mu.frequencies[a : a + block]
        phases = np.exp(-1j * np.outer(nus, window))
        e_hat[a : a + block] = np.trapezoid(phases * sw[None, :], window, axis=1)
    heat_base_measure = 0.5 * float(np.sum(m_w * np.abs(e_hat) ** 2))
    heat_base_time = float(ip_base[-1])

    report = {
        "eta": etas,
        "volume": vol,
        "residual_current_para": [],
        "residual_current_dia": [],
        "residual_energy_para": [],
        "residual_energy_dia": [],
        "residual_heat": [],
        "residual_potential": [],
        "heat_relative_error": [],
        "first_law_defect": [],
        "passivity_min": [],
        "potential_after_off": [],
        "heat_base_measure": heat_base_measure,
        "heat_base_time": heat_base_time,
    }

    for pos, eta in enumerate(etas):
        steps = int(cfg["base_steps"]) * (2**pos)
        run = evolve_trajectory(
            box,
            pot,
            lam,
            field,
            eta,
            beta,
            t_final=t_final,
            dt=(t_final - field.t_on) / steps,
            n_samples=int(cfg["n_samples"]),
        )
        ledger = energy_increments(run, box)
        t_samp = run.times
        jp_run = np.zeros((t_samp.size, d))
        jd_run = np.zeros((t_samp.size, d))
        for idx, state in enumerate(run.states):
            jp_run[idx], jd_run[idx] = nonlinear_currents(
                state, field, eta, state.time, l
            )
        interp = lambda series: np.column_stack(
            [np.interp(t_samp, s_grid, series[:, c]) for c in range(d)]
        )
        jp_pred = eta * interp(j_lin_p)
        jd_pred = eta * interp(j_lin_d)
        report["residual_current_para"].append(
            float(np.max(np.abs(jp_run - jp_pred)))
        )
        report["residual_current_dia"].append(float(np.max(np.abs(jd_run - jd_pred))))

        int_e_samp = np.asarray(field.strength_integral(t_samp), dtype=float)
        jpw_samp = np.interp(t_samp, s_grid, j_lin_p @ w)
        pred_ip = eta**2 * vol * np.interp(t_samp, s_grid, ip_base)
        pred_id = 0.5 * eta**2 * vol * int_e_samp**2 * x_pos
        cross = eta**2 * vol * int_e_samp * jpw_samp
        pred_s = pred_ip - cross
        pred_p = pred_id + cross
        report["residual_energy_para"].append(
            float(np.max(np.abs(ledger.I_p - pred_ip)))
        )
        report["residual_energy_dia"].append(
            float(np.max(np.abs(ledger.I_d - pred_id)))
        )
        report["residual_heat"].append(float(np.max(np.abs(ledger.S - pred_s))))
        report["residual_potential"].append(float(np.max(np.abs(ledger.P - pred_p))))

        heat_pred = eta**2 * vol * heat_base_measure
        report["heat_relative_error"].append(
            abs(float(ledger.S[-1]) - heat_pred) / heat_pred
        )
        report["first_law_defect"].append(ledger.first_law_defect())
        report["passivity_min"].append(float(np.min(ledger.S)))
        off = ledger.times >= field.t_off - 1e-12
        report["potential_after_off"].append(float(np.max(np.abs(ledger.P[off]))))

    logs = np.log(np.asarray(etas))

    def slope(values):
        vals = np.asarray(values, dtype=float)
        if np.any(vals <= 0.0):
            return float("nan")
        return float(np.polyfit(logs, np.log(vals), 1)[0])

    report["slope_current_para"] = slope(report["residual_current_para"])
    report["slope_current_dia"] = slope(report["residual_current_dia"])
    report["slope_energy_para"] = slope(report["residual_energy_para"])
    report["slope_energy_dia"] = slope(report["residual_energy_dia"])
    report["slope_heat"] = slope(report["residual_heat"])
    report["slope_potential"] = slope(report["residual_potential"])
    return report
