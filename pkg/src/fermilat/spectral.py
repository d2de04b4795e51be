"""Spectral calculus for one-particle operators.

Eigendecomposition, the Fermi symbol, complex-time two-point functions, the
Duhamel (Kubo-Mori) inner product of quadratic observables, and expectations
of quadratic observables in quasi-free states.

All many-body expectations are reduced to the one-particle level through the
pairing omega(a*_u a_v) = <e_v, d e_u> of a gauge-invariant quasi-free state
with symbol d; no Fock-space objects are ever built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._errors import DomainError, ShapeError
from .lattice import HermitianOperator, LatticeBox

EIG_RECONSTRUCTION_TOL = 1e-10
ORTHONORMALITY_TOL = 1e-12


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""

    energies: np.ndarray  # (n,) ascending
    modes: np.ndarray  # (n, n), columns are eigenvectors
    box: LatticeBox | None = None
    matrix: np.ndarray | None = None  # the decomposed operator, kept for reuse

    @property
    def n(self) -> int:
        return self.energies.size

    def to_eigenbasis(self, b: np.ndarray) -> np.ndarray:
        """Conjugate a coefficient matrix into the eigenbasis, V^* b V."""
        return self.modes.conj().T @ b @ self.modes

    def spectral_diameter(self) -> float:
        return float(self.energies[-1] - self.energies[0])


@dataclass(frozen=True)
class DensityMatrix:
    """One-particle symbol of a quasi-free state; eigenvalues in [0, 1]."""

    matrix: np.ndarray
    beta: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class QuadraticObservable:
    """Observable sum_{u,v} b_{uv} a*_u a_v + offset."""

    coefficient: np.ndarray
    offset: float = 0.0
    box: LatticeBox | None = None

    @property
    def n(self) -> int:
        return self.coefficient.shape[0]

    def dagger(self) -> "QuadraticObservable":
        return QuadraticObservable(
            coefficient=self.coefficient.conj().T,
            offset=float(np.conj(self.offset)),
            box=self.box,
        )


def eigendecompose(h: HermitianOperator | np.ndarray) -> EigenSystem:
    """Diagonalize a Hermitian operator.

    Returns ascending eigenvalues and orthonormal eigenvectors; raises
    DomainError when the input fails the Hermiticity tolerance.
    """
    if isinstance(h, HermitianOperator):
        m, box = h.matrix, h.box
    else:
        m, box = np.asarray(h), None
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise DomainError("matrix is not Hermitian to 1e-12")
    energies, modes = np.linalg.eigh(m)
    return EigenSystem(energies=energies, modes=modes, box=box, matrix=m)


def _fermi_factors(energies: np.ndarray, beta: float) -> np.ndarray:
    # 1/(1 + e^{beta*e}) through logaddexp, safe for large |beta*e|.
    return np.exp(-np.logaddexp(0.0, beta * energies))


def fermi_symbol(es: EigenSystem, beta: float) -> DensityMatrix:
    """Fermi-Dirac symbol (1 + e^{beta h})^{-1} in the site basis."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    f = _fermi_factors(es.energies, beta)
    d = (es.modes * f) @ es.modes.conj().T
    d = 0.5 * (d + d.conj().T)
    return DensityMatrix(matrix=d, beta=float(beta))


def complex_time_correlation(es: EigenSystem, beta: float, t: float, alpha: float, x) -> complex:
    """Two-point function <e_{x2}, e^{-ith} F(h) e_{x1}> with F = e^{alpha k}/(1+e^{beta k}).

    x is an ordered pair (x1, x2) of site indices, or of lattice sites when the
    eigensystem carries a box.  alpha must lie in [0, beta].
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    if not 0.0 <= alpha <= beta:
        raise DomainError(f"alpha = {alpha} outside [0, beta]")
    x1, x2 = x
    if es.box is not None and not np.isscalar(x1):
        x1 = es.box.index(x1)
        x2 = es.box.index(x2)
    # e^{alpha e}/(1+e^{beta e}) = e^{alpha e - logaddexp(0, beta e)}, stable
    # for all alpha in [0, beta] since the exponent is <= max(alpha-beta, 0)*e.
    eng = es.energies
    weights = np.exp(alpha * eng - np.logaddexp(0.0, beta * eng))
    phases = np.exp(-1j * t * eng)
    return complex(np.sum(phases * weights * es.modes[int(x2), :] * es.modes[int(x1), :].conj()))


def _duhamel_kernel(es: EigenSystem, beta: float):
    """Pairwise Kubo-Mori weights kappa[n, m] = (f_n - f_m)/(e_m - e_n).

    Evaluated as beta * f_m(1-f_n) * g(u) with u = beta(e_n - e_m) and
    g(u) = (1 - e^{-u})/u, g(0) = 1; this is exact in the degenerate limit and
    avoids cancellation for small gaps.
    """
    eng = es.energies
    log_f = -np.logaddexp(0.0, beta * eng)  # log f_n
    log_1mf = -np.logaddexp(0.0, -beta * eng)  # log (1 - f_n)
    p = np.exp(log_f[None, :] + log_1mf[:, None])  # f_m (1 - f_n), index [n, m]
    u = beta * (eng[:, None] - eng[None, :])
    small = np.abs(u) < 1e-7
    g = np.empty_like(u)
    usafe = np.where(small, 1.0, u)
    g[~small] = -np.expm1(-usafe[~small]) / usafe[~small]
    g[small] = 1.0 - 0.5 * u[small] + u[small] ** 2 / 6.0
    return beta * p * g


def duhamel_inner_product(
    es: EigenSystem, beta: float, a: QuadraticObservable, b: QuadraticObservable
) -> complex:
    """Duhamel two-point function (A, B)~ = int_0^beta omega(A* tau_{i alpha}(B)) d alpha.

    Computed by the closed-form eigenbasis kernel

        (A, B)~ = sum_{n,m} conj(Ae[n,m]) Be[n,m] kappa[n,m]
                  + beta * conj(omega(A)) * omega(B),

    which is positive semidefinite as a sesquilinear form.  The defining
    alpha-quadrature is kept as a test oracle only.
    """
    if a.n != b.n or a.n != es.n:
        raise ShapeError("observables and eigensystem live on different spaces")
    if beta <= 0:
        raise DomainError("beta must be positive")
    ae = es.to_eigenbasis(a.coefficient)
    be = es.to_eigenbasis(b.coefficient)
    kappa = _duhamel_kernel(es, beta)
    f = _fermi_factors(es.energies, beta)
    omega_a = np.sum(np.diagonal(ae) * f) + a.offset
    omega_b = np.sum(np.diagonal(be) * f) + b.offset
    value = np.sum(ae.conj() * be * kappa) + beta * np.conj(omega_a) * omega_b
    return complex(value)


def duhamel_time_series(
    es: EigenSystem, beta: float, a: QuadraticObservable, b: QuadraticObservable, t_grid
) -> np.ndarray:
    """(A, tau_t(B))~ on a grid of times.

    Heisenberg evolution acts on the coefficient in the eigenbasis by entrywise
    phases e^{i t (e_n - e_m)}; the disconnected part is time independent.
    """
    if a.n != b.n or a.n != es.n:
        raise ShapeError("observables and eigensystem live on different spaces")
    ae = es.to_eigenbasis(a.coefficient)
    be = es.to_eigenbasis(b.coefficient)
    kappa = _duhamel_kernel(es, beta)
    f = _fermi_factors(es.energies, beta)
    omega_a = np.sum(np.diagonal(ae) * f) + a.offset
    omega_b = np.sum(np.diagonal(be) * f) + b.offset
    nu = (es.energies[:, None] - es.energies[None, :]).ravel()
    weights = (ae.conj() * be * kappa).ravel()
    t = np.asarray(t_grid, dtype=float)
    phases = np.exp(1j * np.outer(t, nu))
    return phases @ weights + beta * np.conj(omega_a) * omega_b


def expectation_quadratic(d: DensityMatrix, b: QuadraticObservable) -> complex:
    """omega(sum b_{uv} a*_u a_v + c) = tr(b d) + c for symbol d."""
    if d.n != b.n:
        raise ShapeError("symbol and observable have different sizes")
    return complex(np.sum(b.coefficient * d.matrix.T) + b.offset)


def heisenberg_coefficient(es: EigenSystem, b: QuadraticObservable, t: float) -> np.ndarray:
    """Coefficient of tau_t(B): e^{ith} b e^{-ith} in the site basis."""
    phases = np.exp(1j * t * es.energies)
    be = es.to_eigenbasis(b.coefficient)
    rotated = (phases[:, None] * be) * phases.conj()[None, :]
    return es.modes @ rotated @ es.modes.conj().T


def generator_coefficient(es: EigenSystem, b: QuadraticObservable) -> np.ndarray:
    """Coefficient of the derivation delta(B): i[h, b] in the site basis."""
    if es.matrix is None:
        raise ShapeError("eigensystem does not retain its source matrix")
    h = es.matrix
    return 1j * (h @ b.coefficient - b.coefficient @ h)
