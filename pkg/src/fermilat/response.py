"""Linear-response currents, Fourier-route conductivity, and heat duality.

The causal conductivity kernel and its convolution currents, a regularized
Hilbert transform with the Kramers-Kronig consistency checks, the frequency-
domain route to the same current through the conductivity measure, and the
heat quadratic form on a finite AC field space together with its
Legendre-Fenchel resistivity.

Sign conventions follow the bond-current orientation used by the transport
module: the response kernel fed into these routines is the SIGNED diamagnetic
matrix (the negative of ``xi_dia``) plus the paramagnetic kernel, so the
total kernel is negative semidefinite and the paramagnetic measure stays
positive.  Callers that start from ``xi_dia`` pass its negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._errors import DomainError, GridError, OutsideDomainError, ShapeError
from .measure import SpectralMeasure
from .transport import TransportKernel

HILBERT_NODES = 4096
HILBERT_STRETCH = 1.5

# Relative threshold (vs the largest eigenvalue) below which Q directions are
# treated as null, defining the numerical domain of the resistivity.
PSEUDO_INVERSE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# causal kernel and time-domain currents


@dataclass(frozen=True)
class CausalKernel:
    """Causal conductivity kernel with its even and odd parts.

    ``total`` vanishes on negative times and equals xi_d + Xi_p(t) on
    nonnegative ones; ``even_part`` and ``odd_part`` are its symmetric and
    antisymmetric halves on the same grid.
    """

    total: TransportKernel
    even_part: TransportKernel
    odd_part: TransportKernel


def _kernel_lookup(xi_p: TransportKernel, times: np.ndarray) -> np.ndarray:
    """Values of Xi_p at the requested times, which must be grid nodes."""
    grid = xi_p.grid
    tol = 1e-9 * max(1.0, float(np.max(np.abs(grid))))
    idx = np.searchsorted(grid, times - tol)
    idx = np.clip(idx, 0, grid.size - 1)
    if np.any(np.abs(grid[idx] - times) > tol):
        raise GridError("requested times are not nodes of the kernel grid")
    return xi_p.values[idx]


def sigma_kernel(xi_p: TransportKernel, xi_d: np.ndarray, t_grid) -> CausalKernel:
    """Causal kernel Sigma(t) = xi_d + Xi_p(t) for t >= 0, zero for t < 0.

    Every |t| in ``t_grid`` must be a node of ``xi_p.grid``; the even and odd
    parts are assembled from Sigma(|t|) exactly, so no interpolation enters.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    d = xi_p.dim
    xi_d = np.asarray(xi_d, dtype=float)
    if xi_d.shape != (d, d):
        raise ShapeError("xi_d shape does not match the kernel dimension")
    vals_abs = _kernel_lookup(xi_p, np.abs(t_grid)) + xi_d[None, :, :]
    total = np.where((t_grid >= 0.0)[:, None, None], vals_abs, 0.0)
    even = 0.5 * vals_abs
    odd = 0.5 * np.sign(t_grid)[:, None, None] * vals_abs
    meta = dict(xi_p.meta)
    meta["kind"] = "sigma_total"
    mk = lambda v, kind: TransportKernel(
        grid=t_grid, values=v, meta={**meta, "kind": kind}
    )
    return CausalKernel(
        total=mk(total, "sigma_total"),
        even_part=mk(even, "sigma_even"),
        odd_part=mk(odd, "sigma_odd"),
    )


def _paramagnetic_convolution(xi_p: TransportKernel, field, t: float) -> np.ndarray:
    """Trapezoid of Xi_p(u) w E(t - u) over u in [0, t - t_on]."""
    w = np.asarray(field.direction, dtype=float)
    span = float(t) - float(field.t_on)
    grid = xi_p.grid
    tol = 1e-9 * max(1.0, abs(span))
    if span > grid[-1] + tol:
        raise GridError(
            f"kernel grid ends at {grid[-1]:g} but the convolution needs {span:g}"
        )
    m = int(np.searchsorted(grid, span + tol))
    u = grid[:m]
    vals = xi_p.values[:m]
    if u.size == 0 or u[-1] < span - tol:
        # close the interval with a linearly interpolated end node
        if u.size == 0:
            lo = 0
        else:
            lo = m - 1
        hi = min(m, grid.size - 1)
        if grid[hi] <= grid[lo]:
            frac = 0.0
        else:
            frac = (span - grid[lo]) / (grid[hi] - grid[lo])
        end_val = (1.0 - frac) * xi_p.values[lo] + frac * xi_p.values[hi]
        u = np.concatenate([u, [span]])
        vals = np.concatenate([vals, end_val[None]])
    kw = vals @ w  # (m, d)
    strength = np.asarray(field.field_strength(float(t) - u), dtype=float)
    return np.trapezoid(kw * strength[:, None], u, axis=0)


def linear_currents(xi_p: TransportKernel, xi_d: np.ndarray, field, t: float):
    """Linear-response currents (J_p, J_d, J_p + J_d) at time t.

    J_p is the convolution of Xi_p against the field strength along the field
    direction; J_d is the running strength integral times xi_d w.  ``xi_d``
    is used exactly as passed; the physically wired kernel is the negative of
    ``xi_dia`` (see the module docstring).
    """
    d = xi_p.dim
    w = np.asarray(field.direction, dtype=float)
    if w.shape != (d,):
        raise ShapeError("field direction does not match the kernel dimension")
    xi_d = np.asarray(xi_d, dtype=float)
    if xi_d.shape != (d, d):
        raise ShapeError("xi_d shape does not match the kernel dimension")
    if t <= field.t_on:
        z = np.zeros(d)
        return z, z.copy(), z.copy()
    j_p = _paramagnetic_convolution(xi_p, field, t)
    j_d = float(field.strength_integral(float(t))) * (xi_d @ w)
    return j_p, j_d, j_p + j_d


# ---------------------------------------------------------------------------
# Hilbert transform on a uniform symmetric grid


def hilbert_grid(max_frequency: float, n_nodes: int = HILBERT_NODES) -> np.ndarray:
    """Uniform symmetric grid spanning ``HILBERT_STRETCH`` times the band."""
    if max_frequency <= 0.0:
        raise DomainError("max_frequency must be positive")
    edge = HILBERT_STRETCH * max_frequency
    return np.linspace(-edge, edge, int(n_nodes))


def hilbert_transform(grid, values) -> np.ndarray:
    """Principal-value Hilbert transform -(1/pi) PV int f(nu - x)/x dx.

    Regularized with kernel x / (x^2 + eps^2), eps = grid step, and evaluated
    as an FFT linear convolution.  The grid must be uniform and symmetric
    about zero.  Acts on the last axis; complex input is handled linearly.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(values)
    if grid.ndim != 1 or grid.size < 8:
        raise GridError("hilbert_transform needs a 1d grid with >= 8 nodes")
    steps = np.diff(grid)
    h = steps[0]
    if np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise GridError("hilbert_transform needs a uniform grid")
    if abs(grid[0] + grid[-1]) > 1e-9 * max(1.0, abs(grid[-1])):
        raise GridError("hilbert_transform needs a grid symmetric about zero")
    if vals.shape[-1] != grid.size:
        raise ShapeError("values do not match the grid length")
    n = grid.size
    eps = h
    offsets = h * np.arange(-(n - 1), n)
    kernel = offsets / (offsets**2 + eps**2)

    def _convolve(real_vals: np.ndarray) -> np.ndarray:
        size = 1 << int(math.ceil(math.log2(2 * n - 1 + n)))
        f_pad = np.zeros(size)
        f_pad[:n] = real_vals
        k_pad = np.zeros(size)
        k_pad[: 2 * n - 1] = kernel
        conv = np.fft.irfft(np.fft.rfft(f_pad) * np.fft.rfft(k_pad), size)
        # index i of the output corresponds to sum_j f_j K(nu_i - nu_j)
        return conv[n - 1 : 2 * n - 1]

    flat = vals.reshape(-1, n)
    out = np.empty(flat.shape, dtype=complex if np.iscomplexobj(vals) else float)
    for r in range(flat.shape[0]):
        row = flat[r]
        if np.iscomplexobj(vals):
            out[r] = _convolve(row.real) + 1j * _convolve(row.imag)
        else:
            out[r] = _convolve(row)
    out *= -(h / math.pi)
    return out.reshape(vals.shape)


# ---------------------------------------------------------------------------
# frequency-domain (measure) route to the linear current


def _truncated_transform(
    field, t: float, nus: np.ndarray, upper: float | None = None, n_quad: int = 4096
):
    """E^(t)(nu) = int_{t_on}^{upper} E(s) exp(i nu (t - s)) ds.

    upper defaults to the end of the field window (the full transform of the
    pulse, time-shifted to t).  Uses the field's closed-form transform when it
    provides one, otherwise a trapezoid over a fine window grid, chunked over
    frequencies.
    """
    nus = np.asarray(nus, dtype=float)
    if upper is None:
        upper = float(field.t_off)
    upper = min(float(upper), float(field.t_off))
    if upper <= field.t_on:
        return np.zeros(nus.shape, dtype=complex)
    closed = getattr(field, "truncated_transform", None)
    if closed is not None:
        base = closed(nus, upper)  # int E(s) e^{-i nu s} ds
    else:
        s = np.linspace(float(field.t_on), upper, int(n_quad))
        strength = np.asarray(field.field_strength(s), dtype=float)
        base = np.empty(nus.shape, dtype=complex)
        block = max(1, (1 << 22) // s.size)
        for a in range(0, nus.size, block):
            chunk = nus[a : a + block]
            phases = np.exp(-1j * np.outer(chunk, s))
            base[a : a + block] = np.trapezoid(phases * strength[None, :], s, axis=1)
    return np.exp(1j * nus * float(t)) * base


def _fourier_pieces(mu: SpectralMeasure, field, t: float, n_grid: int):
    """Atom samples of the full window transform and of its Hilbert transform.

    Returns (f_atoms, h_atoms, mw, grid, f_grid, h_grid) shared by the
    Fourier-route currents.
    """
    w = np.asarray(field.direction, dtype=float)
    if w.shape != (mu.dim,):
        raise ShapeError("field direction does not match the measure dimension")
    mw = mu.weights @ w  # (J, d)
    max_nu = float(np.max(np.abs(mu.frequencies)))
    if max_nu == 0.0:
        max_nu = 1.0
    grid = hilbert_grid(max_nu, n_grid)
    f_grid = _truncated_transform(field, t, grid)
    f_atoms = _truncated_transform(field, t, mu.frequencies)
    h_grid = hilbert_transform(grid, f_grid)
    h_atoms = np.interp(mu.frequencies, grid, h_grid.real) + 1j * np.interp(
        mu.frequencies, grid, h_grid.imag
    )
    return f_atoms, h_atoms, mw, grid, f_grid, h_grid


def fourier_ohm_current(
    mu: SpectralMeasure,
    field,
    t: float,
    n_grid: int = HILBERT_NODES,
    return_diagnostics: bool = False,
):
    """Current at time t from the conductivity measure in Fourier space.

    Evaluates Re[(1/2) sum_a E^(t)(nu_a) M_a w - (i/2) sum_a H(E^(t))(nu_a)
    M_a w] where E^(t) is the full window transform e^{i nu t} E_hat(nu) and H
    is taken on a uniform symmetric grid then interpolated at the atoms.  The
    half-minus-Hilbert combination projects onto nonnegative time offsets, so
    the contribution of field values at s > t cancels and the result matches
    the causal time-domain convolution even while the pulse is still running.
    Feed the FULL conductivity measure (paramagnetic atoms plus the signed
    zero atom) to match the time-domain total current.
    """
    w = np.asarray(field.direction, dtype=float)
    if mu.is_empty:
        out = np.zeros(w.size)
        if return_diagnostics:
            return out, {
                "in_phase": out.copy(),
                "out_of_phase": out.copy(),
                "hh_defect": 0.0,
                "route_tolerance": 1e-6,
            }
        return out
    f_atoms, h_atoms, mw, grid, f_grid, h_grid = _fourier_pieces(
        mu, field, t, n_grid
    )
    in_phase = np.real(0.5 * f_atoms[:, None] * mw).sum(axis=0)
    out_phase = np.real(-0.5j * h_atoms[:, None] * mw).sum(axis=0)
    current = in_phase + out_phase
    if not return_diagnostics:
        return current
    hh_grid = hilbert_transform(grid, h_grid)
    interior = slice(grid.size // 8, grid.size - grid.size // 8)
    ref = np.max(np.abs(f_grid[interior])) or 1.0
    hh_defect = float(np.max(np.abs(hh_grid[interior] + f_grid[interior])) / ref)
    # propagate the measured H o H defect through the atom pairing, x3 safety
    scale = float(np.sum(np.abs(f_atoms)[:, None] * np.abs(mw)))
    tol = max(1e-6, 3.0 * hh_defect * scale)
    diag = {
        "in_phase": in_phase,
        "out_of_phase": out_phase,
        "hh_defect": hh_defect,
        "route_tolerance": tol,
    }
    return current, diag


def out_of_phase_current(
    mu: SpectralMeasure, field, t: float, n_grid: int = HILBERT_NODES
) -> np.ndarray:
    """Quadrature component Re[-(i/2) sum_a H(E^(t))(nu_a) M_a w].

    The odd half of the causal kernel: its convolution kernel is
    sign(t-s) Sigma(|t-s|), so pairing it against the driving field over the
    whole window integrates to zero (the integrand is antisymmetric under
    exchanging s and t) and the in-phase half carries all the work.
    """
    w = np.asarray(field.direction, dtype=float)
    if mu.is_empty:
        return np.zeros(w.size)
    f_atoms, h_atoms, mw, _, _, _ = _fourier_pieces(mu, field, t, n_grid)
    return np.real(-0.5j * h_atoms[:, None] * mw).sum(axis=0)


# ---------------------------------------------------------------------------
# AC field space and the heat quadratic form


@dataclass(frozen=True)
class ACFieldSpace:
    """Finite cosine/sine field space on a time window, all members AC.

    Basis fields are cos(nu_m (s - t_on)) and sin(nu_m (s - t_on)) with
    nu_m = 2 pi m / (t_off - t_on), m = 1..n_harmonics; every member
    integrates to zero over the window.  Coefficient vectors are ordered
    [cos_1..cos_M, sin_1..sin_M].
    """

    t_on: float
    t_off: float
    n_harmonics: int

    def __post_init__(self):
        if not self.t_off > self.t_on:
            raise DomainError("t_off must exceed t_on")
        if self.n_harmonics < 1:
            raise DomainError("need at least one harmonic")

    @property
    def width(self) -> float:
        return self.t_off - self.t_on

    @property
    def harmonics(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(1, self.n_harmonics + 1) / self.width

    @property
    def size(self) -> int:
        return 2 * self.n_harmonics

    def field(self, coefficients, direction=(1.0,)) -> "ACField":
        return ACField(space=self, coefficients=np.asarray(coefficients, float), direction=np.asarray(direction, float))

    def basis_transform(self, nus, upper: float | None = None) -> np.ndarray:
        """Matrix T[i, a] = int_{t_on}^{upper} basis_i(s) exp(-i nu_a s) ds."""
        nus = np.asarray(nus, dtype=float)
        t_end = self.t_off if upper is None else min(float(upper), self.t_off)
        span = max(0.0, t_end - self.t_on)

        def d_window(k):
            k = np.asarray(k, dtype=float)
            out = np.empty(k.shape, dtype=complex)
            small = np.abs(k) < 1e-12
            ks = np.where(small, 1.0, k)
            out = (np.exp(1j * ks * span) - 1.0) / (1j * ks)
            out[small] = span
            return out

        shift = np.exp(-1j * nus * self.t_on)
        rows = []
        for nu_m in self.harmonics:
            plus = d_window(nu_m - nus)
            minus = d_window(-nu_m - nus)
            rows.append(0.5 * (plus + minus) * shift)
        for nu_m in self.harmonics:
            plus = d_window(nu_m - nus)
            minus = d_window(-nu_m - nus)
            rows.append((plus - minus) / 2j * shift)
        return np.asarray(rows)


@dataclass(frozen=True)
class ACField:
    """Member of an ACFieldSpace with a spatial direction vector.

    Duck-types the part of the field protocol used by linear_currents and
    fourier_ohm_current: t_on / t_off, field_strength, strength_integral,
    direction, and a closed-form truncated transform.
    """

    space: ACFieldSpace
    coefficients: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.space.size,):
            raise ShapeError(
                f"expected {self.space.size} coefficients, got {c.shape}"
            )
        object.__setattr__(self, "coefficients", c)
        w = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise DomainError("field direction must be a unit vector")
        object.__setattr__(self, "direction", w)

    @property
    def t_on(self) -> float:
        return self.space.t_on

    @property
    def t_off(self) -> float:
        return self.space.t_off

    def field_strength(self, t):
        t = np.asarray(t, dtype=float)
        u = t - self.t_on
        inside = (t > self.t_on) & (t < self.t_off)
        m = self.space.n_harmonics
        nus = self.space.harmonics
        cos_part = np.cos(np.multiply.outer(u, nus)) @ self.coefficients[:m]
        sin_part = np.sin(np.multiply.outer(u, nus)) @ self.coefficients[m:]
        out = np.where(inside, cos_part + sin_part, 0.0)
        return out if out.ndim else float(out)

    def strength_integral(self, t):
        u = np.clip(np.asarray(t, dtype=float) - self.t_on, 0.0, self.space.width)
        m = self.space.n_harmonics
        nus = self.space.harmonics
        cos_int = np.sin(np.multiply.outer(u, nus)) / nus
        sin_int = (1.0 - np.cos(np.multiply.outer(u, nus))) / nus
        out = cos_int @ self.coefficients[:m] + sin_int @ self.coefficients[m:]
        return out if out.ndim else float(out)

    def truncated_transform(self, nus, upper: float) -> np.ndarray:
        return self.coefficients @ self.space.basis_transform(nus, upper)

    def ac_defect(self) -> float:
        """|integral of the field over its window| (zero for members)."""
        return abs(float(self.strength_integral(self.t_off)))


@dataclass(frozen=True)
class QuadraticFormQ:
    """Heat production form Q(E) = e^T G e on an ACFieldSpace.

    G is symmetric PSD; Q(E) = (1/2) sum_a |E_hat(nu_a)|^2 <w, M_a w> over
    the atoms of the underlying positive measure.
    """

    matrix: np.ndarray
    space: ACFieldSpace
    direction: np.ndarray

    def value(self, coefficients) -> float:
        e = np.asarray(coefficients, dtype=float)
        return float(e @ self.matrix @ e)

    def seminorm(self, coefficients) -> float:
        return math.sqrt(max(0.0, self.value(coefficients)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))[0])


def heat_form(mu_p: SpectralMeasure, w, space: ACFieldSpace) -> QuadraticFormQ:
    """Gram matrix of (1/2) int |E_hat(nu)|^2 <w, mu_p(dnu) w> on the space.

    The measure must be the positive paramagnetic one; the full measure's
    signed zero atom never contributes because members of the space have
    E_hat(0) = 0 exactly.
    """
    w = np.asarray(w, dtype=float)
    if mu_p.is_empty:
        g = np.zeros((space.size, space.size))
        return QuadraticFormQ(matrix=g, space=space, direction=w)
    if w.shape != (mu_p.dim,):
        raise ShapeError("direction does not match the measure dimension")
    m_w = np.einsum("a,jab,b->j", w, mu_p.weights, w)
    transforms = space.basis_transform(mu_p.frequencies)  # (size, J)
    g = 0.5 * np.real((transforms.conj() * m_w[None, :]) @ transforms.T)
    g = 0.5 * (g + g.T)
    return QuadraticFormQ(matrix=g, space=space, direction=w)


def conductivity_map(q: QuadraticFormQ, coefficients) -> np.ndarray:
    """Coefficient vector of the current functional <J_E, F> = e^T G f."""
    e = np.asarray(coefficients, dtype=float)
    if e.shape != (q.matrix.shape[0],):
        raise ShapeError("field coefficients do not match the form")
    return q.matrix @ e


@dataclass(frozen=True)
class ResistivityResult:
    """Field returned by the resistivity map together with the dual value."""

    coefficients: np.ndarray
    q_star: float


def _q_eigensystem(q: QuadraticFormQ):
    vals, vecs = np.linalg.eigh(0.5 * (q.matrix + q.matrix.T))
    thresh = PSEUDO_INVERSE_RTOL * max(vals[-1], 0.0)
    keep = vals > thresh
    return vals[keep], vecs[:, keep]


def resistivity_map(q: QuadraticFormQ, current) -> ResistivityResult:
    """Legendre-Fenchel inverse of the conductivity map on range(Q).

    Raises OutsideDomainError when the current functional has a component
    outside range(Q) beyond 1e-9 relative; otherwise returns the unique
    preimage in range(Q) and the dual value Q*(J) = <J, rho(J)>.
    """
    j = np.asarray(current, dtype=float)
    if j.shape != (q.matrix.shape[0],):
        raise ShapeError("current coefficients do not match the form")
    norm = float(np.linalg.norm(j))
    if norm == 0.0:
        return ResistivityResult(coefficients=np.zeros_like(j), q_star=0.0)
    vals, vecs = _q_eigensystem(q)
    proj = vecs @ (vecs.T @ j)
    if np.linalg.norm(j - proj) > 1e-9 * norm:
        raise OutsideDomainError(
            "current functional lies outside the range of the heat form"
        )
    rho = vecs @ ((vecs.T @ j) / vals)
    return ResistivityResult(coefficients=rho, q_star=float(j @ rho))


def dual_pairing(q: QuadraticFormQ, current_a, current_b) -> float:
    """Symmetric dual form (J1, J2)* = J1^T Q^+ J2; recovers Q* on the diagonal."""
    ja = np.asarray(current_a, dtype=float)
    jb = np.asarray(current_b, dtype=float)
    vals, vecs = _q_eigensystem(q)
    return float((vecs.T @ ja) @ ((vecs.T @ jb) / vals))
