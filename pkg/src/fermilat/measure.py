"""Atomic matrix-valued conductivity measures and their transforms.

The paramagnetic kernel of a finite system is a trigonometric sum, so its
frequency content is a finite list of atoms: mu = {(nu_j, M_j)} with real
symmetric weight matrices.  This module builds that measure from an
eigensystem, evaluates the cosine identity Xi_p(t) = sum (cos(nu t) - 1) M,
checks its moment bounds, and exposes the admittance, Cesaro and
viscosity-reconstruction transforms whose limits recover the measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._errors import DomainError, GridError, ShapeError
from .spectral import EigenSystem, _duhamel_kernel, _fermi_factors
from .transport import (
    TransportKernel,
    averaging_volume,
    current_operator,
    generator_decomposition,
)

# Relative tolerance for merging nearly equal eigenvalue differences into one
# atom; scaled by the spectral diameter of the frequency set.
MERGE_TOL = 1e-9


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite atomic measure on frequencies with d x d symmetric weights.

    frequencies are sorted ascending; weights[j] belongs to frequencies[j].
    The zero atom, when present, is the unique atom with |nu| <= zero_tol.
    symmetric records whether atoms come in exact (+nu, -nu) pairs with equal
    weights (true for measures built from real Hamiltonians).
    """

    frequencies: np.ndarray  # (J,)
    weights: np.ndarray  # (J, d, d)
    symmetric: bool = True
    zero_tol: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 3 or w.shape[0] != f.size or w.shape[1] != w.shape[2]:
            raise ShapeError("weights must be (J, d, d) matching frequencies")
        if f.size > 1 and np.any(np.diff(f) < 0):
            raise ShapeError("frequencies must be sorted ascending")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return self.frequencies.size

    @property
    def dim(self) -> int:
        return self.weights.shape[1] if self.n_atoms else 0

    @property
    def is_empty(self) -> bool:
        return self.n_atoms == 0

    def _zero_mask(self) -> np.ndarray:
        return np.abs(self.frequencies) <= self.zero_tol

    def mass(self) -> np.ndarray:
        """mu(R): sum of all atom weights."""
        if self.is_empty:
            return np.zeros((0, 0))
        return self.weights.sum(axis=0)

    def restricted_mass(self) -> np.ndarray:
        """mu(R \\ {0}): sum of weights away from the zero atom."""
        if self.is_empty:
            return np.zeros((0, 0))
        keep = ~self._zero_mask()
        return self.weights[keep].sum(axis=0) if keep.any() else np.zeros_like(self.weights[0])

    def zero_weight(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros((0, 0))
        zm = self._zero_mask()
        return self.weights[zm].sum(axis=0) if zm.any() else np.zeros_like(self.weights[0])

    def operator_norms(self) -> np.ndarray:
        """Spectral norm of each atom weight."""
        if self.is_empty:
            return np.zeros(0)
        return np.array([np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))) for m in self.weights])

    def min_atom_eigenvalue(self) -> float:
        """Smallest eigenvalue over all atoms; >= -1e-10 certifies PSD atoms."""
        if self.is_empty:
            return 0.0
        return float(min(np.linalg.eigvalsh(0.5 * (m + m.T)).min() for m in self.weights))

    def minimum_gap(self) -> float:
        """Smallest |nu| over nonzero atoms; inf when no nonzero atom exists."""
        nz = np.abs(self.frequencies[~self._zero_mask()])
        return float(nz.min()) if nz.size else math.inf


def build_measure(es: EigenSystem, beta: float, l: int, directions=None) -> SpectralMeasure:
    """Assemble the paramagnetic conductivity measure from an eigensystem.

    Atom frequencies are clustered eigenvalue differences; each positive
    cluster is mirrored to -nu with the identical weight matrix, which makes
    the +-nu symmetry exact by construction.  Weights collect the rotated
    current matrix elements against the Kubo-Mori kernel, divided by the
    averaging volume; for real Hamiltonians they are real and PSD.
    """
    if es.box is None:
        raise ShapeError("build_measure needs an eigensystem with lattice geometry")
    box = es.box
    if box.n_sites == 1:
        return SpectralMeasure(np.zeros(0), np.zeros((0, box.dimension, box.dimension)))
    ks = list(range(box.dimension)) if directions is None else list(directions)
    dd = len(ks)
    vol = averaging_volume(box, l)
    rotated = [es.to_eigenbasis(current_operator(box, k, l).coefficient).ravel() for k in ks]
    kappa = _duhamel_kernel(es, beta).ravel()
    nu = (es.energies[:, None] - es.energies[None, :]).ravel()
    diameter = float(nu.max() - nu.min()) if nu.size else 0.0
    tol = MERGE_TOL * max(diameter, 1.0)

    def weight_of(idx: np.ndarray) -> np.ndarray:
        m = np.empty((dd, dd))
        for a in range(dd):
            for b in range(dd):
                m[a, b] = np.real(np.sum(rotated[a][idx].conj() * rotated[b][idx] * kappa[idx])) / vol
        return 0.5 * (m + m.T)

    zero_idx = np.nonzero(np.abs(nu) <= tol)[0]
    pos_idx = np.nonzero(nu > tol)[0]
    order = np.argsort(nu[pos_idx], kind="stable")
    pos_sorted = pos_idx[order]
    freqs, mats = [], []
    start = 0
    vals = nu[pos_sorted]
    for i in range(1, pos_sorted.size + 1):
        if i == pos_sorted.size or vals[i] - vals[i - 1] > tol:
            members = pos_sorted[start:i]
            freqs.append(float(vals[start:i].mean()))
            mats.append(weight_of(members))
            start = i
    zero_mat = weight_of(zero_idx)
    frequencies = np.concatenate([-np.array(freqs)[::-1], [0.0], np.array(freqs)])
    weights = np.stack(mats[::-1] + [zero_mat] + mats, axis=0) if freqs else zero_mat[None]
    return SpectralMeasure(frequencies, weights, symmetric=True, zero_tol=tol)


def eval_xi_from_measure(measure: SpectralMeasure, t_grid) -> TransportKernel:
    """Cosine synthesis: Xi(t) = sum_j (cos(nu_j t) - 1) M_j."""
    t = np.asarray(t_grid, dtype=float)
    if measure.is_empty:
        return TransportKernel(grid=t, values=np.zeros((t.size, 1, 1)), meta={"kind": "xi_from_measure"})
    c = np.cos(np.outer(t, measure.frequencies)) - 1.0
    values = np.tensordot(c, measure.weights, axes=(1, 0))
    return TransportKernel(grid=t, values=values, meta={"kind": "xi_from_measure"})


def moment_norms(measure: SpectralMeasure) -> tuple[float, float]:
    """Total mass and first absolute moment in operator norm."""
    if measure.is_empty:
        return 0.0, 0.0
    norms = measure.operator_norms()
    return float(norms.sum()), float((np.abs(measure.frequencies) * norms).sum())


def _current_square_expectations(es: EigenSystem, beta: float, l: int, directions=None):
    """omega(I_k^2) and omega((delta I_k)^2) per direction, via eigenbasis sums."""
    box = es.box
    ks = list(range(box.dimension)) if directions is None else list(directions)
    # occupation factor (1 - f_n) f_m through logs, stable for large beta
    log_f = -np.logaddexp(0.0, beta * es.energies)
    log_1mf = -np.logaddexp(0.0, -beta * es.energies)
    pop = np.exp(log_1mf[:, None] + log_f[None, :])
    nu2 = (es.energies[:, None] - es.energies[None, :]) ** 2
    sq, dsq = [], []
    for k in ks:
        be = es.to_eigenbasis(current_operator(box, k, l).coefficient)
        absq = np.abs(be) ** 2
        sq.append(float(np.sum(absq * pop)))
        dsq.append(float(np.sum(absq * nu2 * pop)))
    return sq, dsq


def moment_bound_report(es: EigenSystem, beta: float, l: int,
                        measure: SpectralMeasure | None = None) -> dict:
    """Check the three moment bounds of the measure against state expectations.

    Bounds: mass <= (1/|box_l|) sum_k omega(I_k^2); first moment <= twice
    that; first moment <= (2/|box_l|) sum_k sqrt(omega(I_k^2)) *
    sqrt(omega((delta I_k)^2)).  Slack = bound - value; all slacks should be
    >= -1e-10 when the bounds hold.
    """
    if measure is None:
        measure = build_measure(es, beta, l)
    mass, first = moment_norms(measure)
    vol = averaging_volume(es.box, l)
    sq, dsq = _current_square_expectations(es, beta, l)
    b1 = sum(sq) / vol
    b2 = 2.0 * b1
    b3 = 2.0 / vol * sum(math.sqrt(s) * math.sqrt(ds) for s, ds in zip(sq, dsq))
    return {
        "mass": mass,
        "first_moment": first,
        "bound_mass": b1,
        "bound_first_a": b2,
        "bound_first_b": b3,
        "slack_mass": b1 - mass,
        "slack_first_a": b2 - first,
        "slack_first_b": b3 - first,
    }


def duhamel_mass_matrix(es: EigenSystem, beta: float, l: int, directions=None) -> np.ndarray:
    """(1/|box_l|) (I_k, I_q)~ matrix; equals the total mass of the measure."""
    from .spectral import duhamel_inner_product

    box = es.box
    ks = list(range(box.dimension)) if directions is None else list(directions)
    vol = averaging_volume(box, l)
    ops = [current_operator(box, k, l) for k in ks]
    out = np.empty((len(ks), len(ks)))
    for a, oa in enumerate(ops):
        for b, ob in enumerate(ops):
            out[a, b] = np.real(duhamel_inner_product(es, beta, oa, ob)) / vol
    return out


def full_conductivity_measure(mu_p: SpectralMeasure, xi_d: np.ndarray) -> SpectralMeasure:
    """Attach the zero atom that completes mu_p to total mass Xi_d.

    The new zero weight is (existing zero atom) + (Xi_d - mu_p(R)); nonzero
    atoms are untouched.  The zero atom is signed in general, so the PSD
    property is not asserted for the result.
    """
    xi_d = np.asarray(xi_d, dtype=float)
    if mu_p.is_empty:
        return SpectralMeasure(np.zeros(1), xi_d[None].copy(), symmetric=True, zero_tol=0.0)
    if xi_d.shape != (mu_p.dim, mu_p.dim):
        raise ShapeError("Xi_d shape does not match the measure dimension")
    correction = xi_d - mu_p.mass()
    zm = mu_p._zero_mask()
    if zm.any():
        weights = mu_p.weights.copy()
        j = int(np.nonzero(zm)[0][0])
        weights[j] = weights[j] + correction
        freqs = mu_p.frequencies.copy()
    else:
        freqs = np.concatenate([mu_p.frequencies, [0.0]])
        order = np.argsort(freqs, kind="stable")
        weights = np.concatenate([mu_p.weights, correction[None]], axis=0)[order]
        freqs = freqs[order]
    return SpectralMeasure(freqs, weights, symmetric=mu_p.symmetric, zero_tol=mu_p.zero_tol)


def static_admittance(xi_d: np.ndarray, viscosity_kernel, eps: float) -> np.ndarray:
    """Xi_d times the Laplace transform of the viscosity at eps > 0.

    Two input routes, kept deliberately separate:
    - TransportKernel: trapezoid quadrature of exp(-eps s) V(s) over the
      sampled window, then the matrix product xi_d @ L.
    - SpectralMeasure: closed form sum_j nu_j^2 / (eps^2 + nu_j^2) M_j.  Here
      the Xi_d prefactor and the Xi_d-derived denominator of the viscosity
      cancel analytically, so xi_d enters shape validation only.
    """
    if eps <= 0:
        raise DomainError("admittance needs eps > 0")
    xi_d = np.asarray(xi_d, dtype=float)
    if isinstance(viscosity_kernel, SpectralMeasure):
        m = viscosity_kernel
        if m.is_empty:
            return np.zeros_like(xi_d)
        if xi_d.shape != (m.dim, m.dim):
            raise ShapeError("Xi_d shape does not match the measure dimension")
        factors = m.frequencies**2 / (eps**2 + m.frequencies**2)
        return np.tensordot(factors, m.weights, axes=(0, 0))
    kern: TransportKernel = viscosity_kernel
    damped = np.exp(-eps * kern.grid)[:, None, None] * kern.values
    lap = np.trapezoid(damped, kern.grid, axis=0)
    return xi_d @ lap


def admittance_limit(xi_d: np.ndarray, viscosity_kernel, eps0: float | None = None) -> np.ndarray:
    """eps -> 0 limit of the static admittance.

    Exact (restricted mass) when the viscosity is given as a measure; for a
    sampled kernel, three-point Richardson in eps^2 over {eps0, eps0/2,
    eps0/4} with default eps0 = 100 / (grid span).
    """
    if isinstance(viscosity_kernel, SpectralMeasure):
        return viscosity_kernel.restricted_mass()
    kern: TransportKernel = viscosity_kernel
    if eps0 is None:
        span = float(kern.grid[-1] - kern.grid[0])
        if span <= 0:
            raise GridError("kernel grid too short for a Laplace limit")
        eps0 = 100.0 / span
    a0 = static_admittance(xi_d, kern, eps0)
    a1 = static_admittance(xi_d, kern, eps0 / 2.0)
    a2 = static_admittance(xi_d, kern, eps0 / 4.0)
    r0 = (4.0 * a1 - a0) / 3.0
    r1 = (4.0 * a2 - a1) / 3.0
    return (16.0 * r1 - r0) / 15.0


def cesaro_mean(xi_p: TransportKernel, T: float) -> np.ndarray:
    """(1/T) integral of Xi_p over [0, T] by trapezoid on the kernel grid."""
    if T <= 0:
        raise DomainError("Cesaro mean needs T > 0")
    g = xi_p.grid
    if g[0] > 0 or T > g[-1] + 1e-12 * max(abs(g[-1]), 1.0):
        raise GridError("kernel grid does not cover [0, T]")
    inside = g <= T
    gi = g[inside]
    vi = xi_p.values[inside]
    total = np.trapezoid(vi, gi, axis=0)
    if gi[-1] < T:
        # partial trapezoid to exactly T with a linearly interpolated endpoint
        j = gi.size - 1
        frac = (T - g[j]) / (g[j + 1] - g[j])
        v_T = (1 - frac) * xi_p.values[j] + frac * xi_p.values[j + 1]
        total = total + 0.5 * (T - g[j]) * (xi_p.values[j] + v_T)
    return total / T


def reconstruct_from_viscosity(xi_d: np.ndarray, viscosity_kernel: TransportKernel,
                               e_hat, nu_support: tuple[float, float],
                               w: np.ndarray | None = None,
                               eps_seq=None, nu_panel: float = 0.01) -> float:
    """Recover the smeared measure pairing from the viscosity alone.

    Evaluates, for each eps in a ratio-2 sequence, the double integral
    (1/pi) int dnu int_0^T ds  K_eps(nu, s) E_hat(nu) <w, Xi_d V(s) w>
    with kernel K_eps = (eps cos(nu s) - nu sin(nu s)) e^{-eps s}/(nu^2+eps^2),
    then removes the O(eps) and O(eps^2) terms by Richardson extrapolation.
    The limit equals int E_hat(nu) <w, mu_p(dnu) w> provided E_hat(0) = 0 and
    the product Xi_d V(s) equals dXi_p/ds.

    The s-integral uses Simpson weights on the (uniform) kernel grid; the
    nu-integral uses composite 16-node Gauss panels of width <= nu_panel
    over [nu_support[0], nu_support[1]], which must cover supp(E_hat).
    """
    xi_d = np.asarray(xi_d, dtype=float)
    kern = viscosity_kernel
    dd = kern.dim
    if w is None:
        w = np.zeros(dd)
        w[0] = 1.0
    w = np.asarray(w, dtype=float)
    if abs(float(e_hat(0.0))) > 1e-12:
        raise DomainError("test function must vanish at frequency 0")
    lo, hi = float(nu_support[0]), float(nu_support[1])
    if not hi > lo:
        raise DomainError("empty frequency support")
    if eps_seq is None:
        span = float(kern.grid[-1] - kern.grid[0])
        eps_seq = (100.0 / span, 50.0 / span, 25.0 / span)
    eps_seq = [float(e) for e in eps_seq]
    if len(eps_seq) != 3 or any(e <= 0 for e in eps_seq):
        raise DomainError("eps sequence must be three positive values")
    if abs(eps_seq[0] / eps_seq[1] - 2.0) > 1e-9 or abs(eps_seq[1] / eps_seq[2] - 2.0) > 1e-9:
        raise DomainError("eps sequence must decrease by ratio 2")

    s = kern.grid
    n = s.size
    if n < 3 or n % 2 == 0:
        raise GridError("Simpson quadrature needs an odd sample count >= 3")
    h = kern.step
    simpson = np.ones(n)
    simpson[1:-1:2] = 4.0
    simpson[2:-1:2] = 2.0
    simpson *= h / 3.0
    feed = np.einsum("a,tab,b->t", w, np.einsum("ab,tbc->tac", xi_d, kern.values), w)

    nodes, wts = np.polynomial.legendre.leggauss(16)
    m_panels = max(1, int(np.ceil((hi - lo) / nu_panel)))
    edges = np.linspace(lo, hi, m_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    nu_pts = (mids[:, None] + halves[:, None] * nodes[None, :]).ravel()
    nu_wts = (halves[:, None] * wts[None, :]).ravel()
    e_vals = np.array([float(e_hat(v)) for v in nu_pts])
    active = np.abs(e_vals) > 0
    nu_pts, nu_wts, e_vals = nu_pts[active], nu_wts[active], e_vals[active]

    results = []
    for eps in eps_seq:
        g_s = np.exp(-eps * s) * feed * simpson
        total = 0.0
        block = max(1, int(2**22 // max(n, 1)))
        for i0 in range(0, nu_pts.size, block):
            nu_b = nu_pts[i0:i0 + block]
            phase = np.outer(nu_b, s)
            inner = np.cos(phase) @ g_s * eps - np.sin(phase) @ g_s * nu_b
            inner /= nu_b**2 + eps**2
            total += float(np.sum(nu_wts[i0:i0 + block] * e_vals[i0:i0 + block] * inner))
        results.append(total / math.pi)
    a0, a1, a2 = results
    r0, r1 = 2.0 * a1 - a0, 2.0 * a2 - a1
    return float((4.0 * r1 - r0) / 3.0)


def nontriviality_check(measure: SpectralMeasure, es: EigenSystem | None = None,
                        l: int | None = None, lam: float | None = None,
                        pot_values: np.ndarray | None = None) -> dict:
    """Certify that the measure carries weight away from frequency zero.

    Returns the trace of mu_p(R \\ {0}) and a boolean against the 1e-12
    threshold.  When the eigensystem and potential are supplied, also reports
    the per-direction spectral norms of the current commutator i[h, B_k] and
    of its potential/hopping split, whose non-vanishing forces a nonzero
    measure away from 0.
    """
    trace = float(np.trace(measure.restricted_mass())) if not measure.is_empty else 0.0
    report = {"nontrivial": trace > 1e-12, "trace_restricted_mass": trace}
    if es is not None and l is not None and lam is not None and pot_values is not None:
        gen_norms, pot_norms, hop_norms = [], [], []
        for k in range(es.box.dimension):
            op = current_operator(es.box, k, l)
            a_part, b_part = generator_decomposition(es, op, lam, pot_values)
            gen = lam * a_part + b_part
            gen_norms.append(float(np.linalg.norm(gen, 2)))
            pot_norms.append(float(np.linalg.norm(lam * a_part, 2)))
            hop_norms.append(float(np.linalg.norm(b_part, 2)))
        report["generator_norms"] = gen_norms
        report["potential_part_norms"] = pot_norms
        report["hopping_part_norms"] = hop_norms
    return report
