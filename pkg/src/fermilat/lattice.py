"""Lattice geometry, random potentials, and one-particle Hamiltonians.

Finite max-norm boxes in ``Z^d``, i.i.d. on-site potentials, the discrete
Laplacian with open boundaries, its Peierls-coupled version for a
time-dependent electric field in Weyl gauge, and line integrals of the field
along lattice bonds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ._errors import BoxSizeError, DomainError, ShapeError

# Hard cap on dense one-particle matrices; (2*radius+1)^d must stay below it.
MAX_SITES = 1_000_000

HERMITICITY_TOL = 1e-12

# Fixed-order Gauss-Legendre rule on [0, 1] for bond line integrals.  Order 20
# integrates the piecewise-constant profiles used here exactly because the
# interior nodes never straddle a support edge located at a bond endpoint.
GAUSS_ORDER = 20
_gl_nodes, _gl_weights = np.polynomial.legendre.leggauss(GAUSS_ORDER)
_GL01_NODES = 0.5 * (_gl_nodes + 1.0)
_GL01_WEIGHTS = 0.5 * _gl_weights


def _as_site(x, d: int) -> tuple:
    """Normalize a site spec to a tuple of d ints."""
    if np.isscalar(x):
        if d != 1:
            raise ShapeError(f"scalar site given for a {d}-dimensional box")
        return (int(x),)
    t = tuple(int(c) for c in x)
    if len(t) != d:
        raise ShapeError(f"site {t} has {len(t)} coordinates, expected {d}")
    return t


@dataclass(frozen=True)
class LatticeBox:
    """Finite box {x in Z^d : max_i |x_i| <= radius} with a stable site index.

    Sites are enumerated lexicographically with the first coordinate most
    significant, so the index map is reproducible across runs.
    """

    dimension: int
    radius: int
    sites: np.ndarray  # (n, d) int array, lexicographic order
    _index: dict = dataclass_field(repr=False, default_factory=dict)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    def index(self, site) -> int:
        """Contiguous index of a site; raises DomainError outside the box."""
        key = _as_site(site, self.dimension)
        try:
            return self._index[key]
        except KeyError:
            raise DomainError(f"site {key} outside box of radius {self.radius}") from None

    def site(self, i: int) -> tuple:
        return tuple(int(c) for c in self.sites[i])

    def contains(self, site) -> bool:
        try:
            key = _as_site(site, self.dimension)
        except ShapeError:
            return False
        return key in self._index


def make_box(d: int, radius: int) -> LatticeBox:
    """Build the max-norm box of the given radius in Z^d.

    Parameters
    ----------
    d : int
        Spatial dimension, at least 1.
    radius : int
        Box radius; the box has (2*radius + 1)**d sites.

    Returns
    -------
    LatticeBox
    """
    if d < 1:
        raise DomainError("dimension must be >= 1")
    if radius < 0:
        raise DomainError("radius must be >= 0")
    n = (2 * radius + 1) ** d
    if n > MAX_SITES:
        raise BoxSizeError(f"box would have {n} sites, exceeding the maximum {MAX_SITES}")
    sites = np.array(
        list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=np.int64
    ).reshape(n, d)
    index = {tuple(int(c) for c in s): i for i, s in enumerate(sites)}
    return LatticeBox(dimension=d, radius=radius, sites=sites, _index=index)


@dataclass(frozen=True)
class Potential:
    """Per-site real potential values in [-1, 1] plus sampling provenance."""

    values: np.ndarray
    seed: int
    distribution: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size and (v.min() < -1.0 or v.max() > 1.0):
            raise DomainError("potential values must lie in [-1, 1]")


def sample_potential(box: LatticeBox, seed: int, dist: str = "uniform") -> Potential:
    """Draw an i.i.d. on-site potential on the box.

    dist is one of "uniform" (uniform on [-1, 1]), "binary" (fair coin on
    {-1, +1}) or "zero".  The draw is a pure function of (seed, dist, box
    size), so repeated calls are bitwise identical.
    """
    n = box.n_sites
    if dist == "zero":
        values = np.zeros(n)
    elif dist == "uniform":
        rng = np.random.default_rng(seed)
        values = rng.uniform(-1.0, 1.0, size=n)
    elif dist == "binary":
        rng = np.random.default_rng(seed)
        values = rng.choice(np.array([-1.0, 1.0]), size=n)
    else:
        raise DomainError(f"unknown distribution {dist!r}")
    return Potential(values=values, seed=int(seed), distribution=dist)


@dataclass(frozen=True)
class FieldProfile:
    """Compactly supported AC electric field in Weyl gauge.

    The scalar amplitude is

        A(t) = amplitude * exp(-1/(1 - s^2)) * sin(carrier * (t - t_on)),
        s = (2t - t_on - t_off) / (t_off - t_on),

    clamped to zero outside (t_on, t_off).  The field strength is
    E(t) = -dA/dt, so the time integral of E from t_on to t equals -A(t) and
    vanishes again at t_off: the profile is automatically AC.

    Spatially the vector potential points along ``direction`` and is supported
    on a box of the given radius, arranged so that exactly the bonds
    (x, x + e_k) with x in the support box acquire a Peierls phase.
    """

    direction: np.ndarray
    support_radius: float
    t_on: float
    t_off: float
    amplitude: float = 1.0
    carrier: float = 1.5

    def __post_init__(self):
        w = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", w)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise DomainError("field direction must be a unit vector")
        if not self.t_off > self.t_on:
            raise DomainError("t_off must exceed t_on")

    @property
    def dimension(self) -> int:
        return self.direction.size

    def _window(self, t):
        t = np.asarray(t, dtype=float)
        width = self.t_off - self.t_on
        s = (2.0 * t - self.t_on - self.t_off) / width
        inside = np.abs(s) < 1.0
        return t, s, inside, width

    def envelope(self, t):
        """Scalar vector-potential amplitude A(t)."""
        t, s, inside, _ = self._window(t)
        out = np.zeros_like(t)
        if np.any(inside):
            si = s[inside]
            bump = np.exp(-1.0 / (1.0 - si * si))
            out[inside] = self.amplitude * bump * np.sin(self.carrier * (t[inside] - self.t_on))
        return out if out.ndim else float(out)

    def field_strength(self, t):
        """E(t) = -dA/dt, evaluated analytically."""
        t, s, inside, width = self._window(t)
        out = np.zeros_like(t)
        if np.any(inside):
            si = s[inside]
            ti = t[inside]
            one = 1.0 - si * si
            bump = np.exp(-1.0 / one)
            dbump = bump * (-2.0 * si / one**2) * (2.0 / width)
            phase = self.carrier * (ti - self.t_on)
            out[inside] = -self.amplitude * (
                dbump * np.sin(phase) + bump * self.carrier * np.cos(phase)
            )
        return out if out.ndim else float(out)

    def strength_integral(self, t):
        """Integral of E from t_on to t; equals -A(t) for this profile."""
        a = self.envelope(t)
        return -a

    def _component_support(self, points: np.ndarray, k: int) -> np.ndarray:
        # Component k is supported where the transverse coordinates sit in
        # [-r, r] and the longitudinal one in [-r, r + 1]; this makes the set
        # of driven bonds coincide with the bond set of the averaged current.
        r = self.support_radius
        ok = np.ones(points.shape[0], dtype=bool)
        for j in range(points.shape[1]):
            if j == k:
                ok &= (points[:, j] >= -r) & (points[:, j] <= r + 1.0)
            else:
                ok &= np.abs(points[:, j]) <= r
        return ok

    def vector_potential(self, t: float, points) -> np.ndarray:
        """A(t, x) for an (m, d) array of positions (or a single position)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        amp = self.envelope(float(t))
        out = np.zeros_like(pts)
        if amp != 0.0:
            for k in range(pts.shape[1]):
                mask = self._component_support(pts, k)
                out[mask, k] = amp * self.direction[k]
        return out if np.asarray(points).ndim == 2 else out[0]

    def electric_field(self, t: float, points) -> np.ndarray:
        """E(t, x) = -dA/dt pointwise; shares the spatial support of A."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        e = self.field_strength(float(t))
        out = np.zeros_like(pts)
        if e != 0.0:
            for k in range(pts.shape[1]):
                mask = self._component_support(pts, k)
                out[mask, k] = e * self.direction[k]
        return out if np.asarray(points).ndim == 2 else out[0]


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix indexed by the sites of a box."""

    matrix: np.ndarray
    box: LatticeBox | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError("operator matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise DomainError("matrix is not Hermitian to 1e-12")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _bond_list(box: LatticeBox):
    """Oriented nearest-neighbor bonds (i, j, k) with site(j) = site(i) + e_k."""
    d = box.dimension
    bonds = []
    for i in range(box.n_sites):
        x = box.sites[i]
        for k in range(d):
            y = x.copy()
            y[k] += 1
            key = tuple(int(c) for c in y)
            j = box._index.get(key)
            if j is not None:
                bonds.append((i, j, k))
    return bonds


def build_hamiltonian(box: LatticeBox, pot: Potential, lam: float) -> HermitianOperator:
    """Discrete Laplacian plus scaled potential, open boundaries.

    Diagonal entries are 2*d + lam*omega(x); nearest-neighbor entries are -1;
    hops leaving the box are dropped.  The result is real symmetric.
    """
    if lam < 0:
        raise DomainError("coupling lam must be >= 0")
    n = box.n_sites
    values = np.asarray(pot.values, dtype=float)
    if values.shape != (n,):
        raise ShapeError("potential is not defined on this box")
    h = np.zeros((n, n))
    np.fill_diagonal(h, 2.0 * box.dimension + lam * values)
    for i, j, _ in _bond_list(box):
        h[i, j] = -1.0
        h[j, i] = -1.0
    return HermitianOperator(matrix=h, box=box)


def _bond_phase(field: FieldProfile, eta: float, t: float, x_from: np.ndarray, x_to: np.ndarray) -> float:
    """Peierls line integral of eta*A(t, .) from x_from to x_to (order 20 GL)."""
    delta = (x_to - x_from).astype(float)
    pts = x_from[None, :] + _GL01_NODES[:, None] * delta[None, :]
    a = field.vector_potential(t, pts)
    return float(eta * np.dot(_GL01_WEIGHTS, a @ delta))


def build_magnetic_hamiltonian(
    box: LatticeBox,
    pot: Potential,
    lam: float,
    field: FieldProfile,
    eta: float,
    t: float,
) -> HermitianOperator:
    """Hamiltonian with hopping entries carrying Peierls phases.

    The entry on the hop from column site v to row site u is
    -exp(i * integral_0^1 eta*A(t, u + a(v-u)) . (v-u) da).  With eta = 0 or t
    outside the field window this reduces exactly to build_hamiltonian.
    """
    base = build_hamiltonian(box, pot, lam)
    h = base.matrix.astype(complex)
    if eta != 0.0 and field.envelope(float(t)) != 0.0:
        if field.dimension != box.dimension:
            raise ShapeError("field direction dimension does not match the box")
        for i, j, _ in _bond_list(box):
            # Entry at (row u, col v) integrates A along the segment u -> v.
            phi = _bond_phase(field, eta, t, box.sites[i].astype(float), box.sites[j].astype(float))
            h[i, j] = -np.exp(1j * phi)
            h[j, i] = np.conj(h[i, j])
    return HermitianOperator(matrix=h, box=box)


def integrated_field(field: FieldProfile, eta: float, t: float, bond) -> float:
    """Line integral of the scaled electric field along a bond.

    For the ordered pair (x1, x2) this returns

        integral_0^1 [eta * E(t, a*x2 + (1-a)*x1)] . (x2 - x1) da,

    which is antisymmetric under bond reversal and vanishes for t outside the
    field window.
    """
    x1, x2 = bond
    d = field.dimension
    a = np.asarray(_as_site(x1, d), dtype=float)
    b = np.asarray(_as_site(x2, d), dtype=float)
    if int(np.abs(b - a).sum()) != 1:
        raise DomainError(f"bond {bond} is not a nearest-neighbor pair")
    if eta == 0.0 or field.field_strength(float(t)) == 0.0:
        return 0.0
    delta = b - a
    pts = a[None, :] + _GL01_NODES[:, None] * delta[None, :]
    e = field.electric_field(t, pts)
    return float(eta * np.dot(_GL01_WEIGHTS, e @ delta))
