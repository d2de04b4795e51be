"""Current observables and equilibrium transport coefficients.

Bond current and adjacency observables, their space averages over a sub-box,
the paramagnetic kernel Xi_p(t), the diagonal diamagnetic matrix Xi_d, and the
current viscosity obtained from the time derivative of Xi_p.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ._errors import DomainError, GridError, ShapeError, SingularKernelError
from .lattice import LatticeBox, _as_site
from .spectral import (
    EigenSystem,
    QuadraticObservable,
    _duhamel_kernel,
    fermi_symbol,
)


@dataclass(frozen=True)
class TransportKernel:
    """Matrix-valued function of time sampled on a uniform grid.

    values[i] is the d x d matrix at grid[i].  No interpolation between
    samples is implied.
    """

    grid: np.ndarray  # (N,)
    values: np.ndarray  # (N, d, d)
    meta: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != g.size:
            raise ShapeError("kernel values must be (N, d, d) matching the grid")
        steps = np.diff(g)
        if g.size > 1 and np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1.0):
            raise GridError("kernel grid must be uniform")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else 0.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BondCoefficient:
    """Paramagnetic coefficient sigma_p for a fixed pair of bonds, sampled in t."""

    bond_x: tuple
    bond_y: tuple
    grid: np.ndarray
    values: np.ndarray  # (N,) real


def _bond_indices(box: LatticeBox | None, bond, n: int):
    """Resolve a bond spec to a pair of site indices and validate adjacency."""
    x1, x2 = bond
    if box is not None:
        i = box.index(x1) if not np.isscalar(x1) else int(x1)
        j = box.index(x2) if not np.isscalar(x2) else int(x2)
        step = np.abs(box.sites[j] - box.sites[i]).sum()
    else:
        # Without geometry the indices themselves are the 1d chain sites.
        i, j = int(x1), int(x2)
        step = abs(j - i)
    if not (0 <= i < n and 0 <= j < n):
        raise DomainError(f"bond {bond} outside the operator's index range")
    if step != 1:
        raise DomainError(f"bond {bond} is not a nearest-neighbor pair")
    return i, j


def bond_current_coefficient(n: int, i1: int, i2: int) -> np.ndarray:
    """Coefficient of I for the ordered bond (x1, x2): i(E_{x2,x1} - E_{x1,x2})."""
    b = np.zeros((n, n), dtype=complex)
    b[i2, i1] = 1j
    b[i1, i2] = -1j
    return b


def bond_adjacency_coefficient(n: int, i1: int, i2: int) -> np.ndarray:
    """Coefficient of P for the bond (x1, x2): -(E_{x1,x2} + E_{x2,x1})."""
    b = np.zeros((n, n))
    b[i1, i2] = -1.0
    b[i2, i1] = -1.0
    return b


def _averaging_sites(box: LatticeBox, l: int) -> np.ndarray:
    if l < 0:
        raise DomainError("averaging radius must be >= 0")
    if l + 1 > box.radius:
        raise DomainError(
            f"averaging radius {l} does not fit in a box of radius {box.radius}; "
            "the shifted bond endpoints must stay inside"
        )
    mask = np.all(np.abs(box.sites) <= l, axis=1)
    return np.nonzero(mask)[0]


def averaging_volume(box: LatticeBox, l: int) -> int:
    """Site count of the averaging sub-box."""
    return int(_averaging_sites(box, l).size)


def current_operator(box: LatticeBox, k: int, l: int) -> QuadraticObservable:
    """Sum of bond currents I_{(x+e_k, x)} over x in the sub-box of radius l."""
    if not 0 <= k < box.dimension:
        raise DomainError(f"direction {k} out of range for d = {box.dimension}")
    n = box.n_sites
    b = np.zeros((n, n), dtype=complex)
    for i in _averaging_sites(box, l):
        x = box.sites[i].copy()
        x[k] += 1
        j = box.index(tuple(x))
        b[i, j] += 1j
        b[j, i] += -1j
    return QuadraticObservable(coefficient=b, box=box)


def adjacency_operator(box: LatticeBox, k: int, l: int) -> QuadraticObservable:
    """Sum of adjacency observables P_{(x+e_k, x)} over the same bond set."""
    if not 0 <= k < box.dimension:
        raise DomainError(f"direction {k} out of range for d = {box.dimension}")
    n = box.n_sites
    b = np.zeros((n, n))
    for i in _averaging_sites(box, l):
        x = box.sites[i].copy()
        x[k] += 1
        j = box.index(tuple(x))
        b[i, j] += -1.0
        b[j, i] += -1.0
    return QuadraticObservable(coefficient=b, box=box)


def _pair_data(es: EigenSystem, beta: float, coeffs: list[np.ndarray]):
    """Eigenbasis coefficients, Kubo-Mori weights and frequencies, flattened."""
    kappa = _duhamel_kernel(es, beta).ravel()
    nu = (es.energies[:, None] - es.energies[None, :]).ravel()
    rotated = [es.to_eigenbasis(c).ravel() for c in coeffs]
    return rotated, kappa, nu


def sigma_para(es: EigenSystem, beta: float, bond_x, bond_y, t_grid) -> BondCoefficient:
    """Paramagnetic transport coefficient between two bonds.

    sigma_p(x, y, t) = (I_y, tau_t(I_x))~ - (I_y, I_x)~, which equals the time
    integral of the equilibrium commutator expectation omega(i[I_y, tau_s(I_x)])
    from 0 to t.  Real for real Hamiltonians.
    """
    n = es.n
    ix = _bond_indices(es.box, bond_x, n)
    iy = _bond_indices(es.box, bond_y, n)
    bx = bond_current_coefficient(n, *ix)
    by = bond_current_coefficient(n, *iy)
    (bxe, bye), kappa, nu = _pair_data(es, beta, [bx, by])
    t = np.asarray(t_grid, dtype=float)
    weights = bye.conj() * bxe * kappa
    values = np.exp(1j * np.outer(t, nu)) @ weights - np.sum(weights)
    return BondCoefficient(
        bond_x=tuple(bond_x), bond_y=tuple(bond_y), grid=t, values=values.real
    )


def sigma_dia(es: EigenSystem, beta: float, bond) -> float:
    """Diamagnetic coefficient omega(P_x) = -2 Re <e_{x1}, d e_{x2}> for a bond."""
    i1, i2 = _bond_indices(es.box, bond, es.n)
    d = fermi_symbol(es, beta).matrix
    return float(-2.0 * np.real(d[i1, i2]))


def xi_para(es: EigenSystem, beta: float, l: int, t_grid, directions=None) -> TransportKernel:
    """Space-averaged paramagnetic kernel Xi_p(t).

    Xi_p(t)[k, q] = (1/|box_l|) [ (I_k, tau_t(I_q))~ - (I_k, I_q)~ ] with I_k
    the averaged current along direction k.  Vanishes at t = 0, is even in t,
    and each sample is a symmetric negative-semidefinite matrix.
    """
    if es.box is None:
        raise ShapeError("xi_para needs an eigensystem with lattice geometry")
    box = es.box
    ks = list(range(box.dimension)) if directions is None else list(directions)
    vol = averaging_volume(box, l)
    coeffs = [current_operator(box, k, l).coefficient for k in ks]
    rotated, kappa, nu = _pair_data(es, beta, coeffs)
    t = np.asarray(t_grid, dtype=float)
    phases = np.exp(1j * np.outer(t, nu))
    dd = len(ks)
    values = np.empty((t.size, dd, dd))
    for a in range(dd):
        for b in range(dd):
            w = rotated[a].conj() * rotated[b] * kappa / vol
            values[:, a, b] = (phases @ w - np.sum(w)).real
    values = 0.5 * (values + np.swapaxes(values, 1, 2))
    return TransportKernel(
        grid=t, values=values, meta={"beta": beta, "l": l, "volume": vol, "kind": "xi_para"}
    )


def xi_dia(es: EigenSystem, beta: float, l: int, directions=None) -> np.ndarray:
    """Diagonal diamagnetic matrix with entries (2/|box_l|) sum_x Re <e_{x+e_k}, d e_x>.

    Entries lie in [-2, 2] and tend to 0 as beta -> 0.  The bond sum of
    sigma_dia equals minus this quantity times the sub-box volume, and the
    driven current responds with that signed combination: response formulas
    (convolution kernels, DC plateaus, the zero atom of the full conductivity
    measure) take the NEGATIVE of the matrix returned here, while the static
    admittance prefactor uses it as returned.
    """
    if es.box is None:
        raise ShapeError("xi_dia needs an eigensystem with lattice geometry")
    box = es.box
    ks = list(range(box.dimension)) if directions is None else list(directions)
    vol = averaging_volume(box, l)
    d = fermi_symbol(es, beta).matrix
    out = np.zeros((len(ks), len(ks)))
    for a, k in enumerate(ks):
        total = 0.0
        for i in _averaging_sites(box, l):
            x = box.sites[i].copy()
            x[k] += 1
            j = box.index(tuple(x))
            total += float(np.real(d[j, i]))
        out[a, a] = 2.0 * total / vol
    return out


def viscosity(xi_p: TransportKernel, xi_d: np.ndarray) -> TransportKernel:
    """Current viscosity V(t) = Xi_d^{-1} dXi_p/dt on the kernel grid.

    The derivative uses 4th-order central differences in the interior and
    one-sided 4th-order stencils at the ends; raises SingularKernelError when
    a diagonal entry of Xi_d is below 1e-10.
    """
    xi_d = np.asarray(xi_d, dtype=float)
    diag = np.diagonal(xi_d)
    if np.any(np.abs(diag) < 1e-10):
        raise SingularKernelError("Xi_d has a vanishing diagonal entry")
    n = xi_p.grid.size
    if n < 5:
        raise GridError("viscosity needs at least 5 grid samples")
    h = xi_p.step
    v = xi_p.values
    dv = np.empty_like(v)
    dv[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)
    # 4th-order one-sided and off-center stencils for the edge samples.
    c0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    c1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
    dv[0] = sum(ci * v[i] for i, ci in enumerate(c0)) / h
    dv[1] = sum(ci * v[i] for i, ci in enumerate(c1)) / h
    dv[-1] = -sum(ci * v[-1 - i] for i, ci in enumerate(c0)) / h
    dv[-2] = -sum(ci * v[-1 - i] for i, ci in enumerate(c1)) / h
    inv = np.diag(1.0 / diag)
    values = np.einsum("ab,tbc->tac", inv, dv)
    meta = dict(xi_p.meta)
    meta["kind"] = "viscosity"
    return TransportKernel(grid=xi_p.grid, values=values, meta=meta)


def xi_para_commutator_route(es: EigenSystem, beta: float, l: int, t_grid,
                             directions=None, panel: float = 0.25, order: int = 16) -> TransportKernel:
    """Xi_p(t) by direct time integration of commutator correlations.

    Integrates G[k,q](s) = (1/|box_l|) omega(i[I_k, tau_s(I_q)]) with composite
    Gauss-Legendre panels of width <= panel, cumulatively over the grid.  This
    route shares no algebra with the Kubo-Mori kernel evaluation and serves as
    the independent cross-check of the Green-Kubo identity.
    """
    if es.box is None:
        raise ShapeError("commutator route needs lattice geometry")
    box = es.box
    ks = list(range(box.dimension)) if directions is None else list(directions)
    vol = averaging_volume(box, l)
    d = fermi_symbol(es, beta).matrix
    coeffs = [current_operator(box, k, l).coefficient for k in ks]
    rot = [es.to_eigenbasis(c) for c in coeffs]
    de = es.to_eigenbasis(d)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    t = np.asarray(t_grid, dtype=float)
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise GridError("commutator route expects an increasing grid starting at 0")
    dd = len(ks)
    eng = es.energies

    def integrand(s: float) -> np.ndarray:
        phase = np.exp(1j * s * eng)
        out = np.empty((dd, dd))
        for b in range(dd):
            bq_s = (phase[:, None] * rot[b]) * phase.conj()[None, :]
            for a in range(dd):
                comm = rot[a] @ bq_s - bq_s @ rot[a]
                out[a, b] = np.real(1j * np.sum(comm * de.T)) / vol
        return out

    values = np.zeros((t.size, dd, dd))
    acc = np.zeros((dd, dd))
    for i in range(1, t.size):
        a, b = t[i - 1], t[i]
        m = max(1, int(np.ceil((b - a) / panel)))
        edges = np.linspace(a, b, m + 1)
        for p in range(m):
            lo, hi = edges[p], edges[p + 1]
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            for node, w in zip(nodes, weights):
                acc += half * w * integrand(mid + half * node)
        values[i] = acc
    return TransportKernel(grid=t, values=values, meta={"beta": beta, "l": l, "volume": vol,
                                                        "kind": "xi_para_commutator"})


def generator_decomposition(es: EigenSystem, b: QuadraticObservable, lam: float,
                            pot_values: np.ndarray):
    """Split i[h, b] into the potential part lam*A and the hopping part B.

    With h = Delta + lam*V, A has entries i(omega(x) - omega(y)) b_{xy} and
    B = i[Delta, b]; the sum reproduces the generator coefficient entrywise.
    """
    if es.matrix is None:
        raise ShapeError("eigensystem does not retain its source matrix")
    h = es.matrix
    v = np.asarray(pot_values, dtype=float)
    delta = h - lam * np.diag(v)
    a_part = 1j * (v[:, None] - v[None, :]) * b.coefficient
    b_part = 1j * (delta @ b.coefficient - b.coefficient @ delta)
    return a_part, b_part
