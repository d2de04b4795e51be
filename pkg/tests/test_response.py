"""Tests for linear response, the Hilbert transform, and heat duality."""

import numpy as np
import pytest

from fermilat import (
    ACFieldSpace,
    DomainError,
    FieldProfile,
    GridError,
    OutsideDomainError,
    ShapeError,
    SpectralMeasure,
    build_hamiltonian,
    build_measure,
    conductivity_map,
    dual_pairing,
    eigendecompose,
    fourier_ohm_current,
    full_conductivity_measure,
    heat_form,
    hilbert_grid,
    hilbert_transform,
    linear_currents,
    make_box,
    out_of_phase_current,
    resistivity_map,
    sample_potential,
    sigma_kernel,
    xi_dia,
    xi_para,
)


@pytest.fixture(scope="module")
def response_setup(request):
    chain13 = request.getfixturevalue("chain13")
    box, pot, es = chain13
    beta, l = 1.3, 3
    mu_p = build_measure(es, beta, l)
    X = xi_dia(es, beta, l)
    field = FieldProfile(
        direction=np.array([1.0]),
        support_radius=l,
        t_on=0.0,
        t_off=4.0,
        amplitude=1.0,
        carrier=1.5,
    )
    xp = xi_para(es, beta, l, np.linspace(0.0, 6.0, 3001))
    return es, beta, l, mu_p, X, field, xp


def test_linear_currents_before_onset(response_setup):
    _, _, _, _, X, field, xp = response_setup
    for t in (-1.0, 0.0):
        j_p, j_d, j = linear_currents(xp, -X, field, t)
        assert np.all(j_p == 0.0) and np.all(j_d == 0.0) and np.all(j == 0.0)


def test_paramagnetic_convolution_quadrature_oracle(response_setup):
    # Independent route: per-atom Gauss-Legendre integral of
    # (cos(nu u) - 1) E(t - u) summed against the measure weights.
    _, _, _, mu_p, X, field, xp = response_setup
    w = np.array([1.0])
    nodes, wq = np.polynomial.legendre.leggauss(16)
    for t in (1.1, 2.7, 4.0):
        span = t - field.t_on
        edges = np.linspace(0.0, span, 17)
        us, ws = [], []
        for p in range(16):
            mid, half = 0.5 * (edges[p] + edges[p + 1]), 0.5 * (edges[p + 1] - edges[p])
            us.append(mid + half * nodes)
            ws.append(half * wq)
        us, ws = np.concatenate(us), np.concatenate(ws)
        e_vals = np.asarray(field.field_strength(t - us), dtype=float)
        i_atoms = ((np.cos(np.outer(mu_p.frequencies, us)) - 1.0) * (ws * e_vals)).sum(axis=1)
        oracle = np.einsum("j,jab,b->a", i_atoms, mu_p.weights, w)
        j_p, j_d, _ = linear_currents(xp, -X, field, t)
        assert np.max(np.abs(j_p - oracle)) < 1e-10
        expected_dia = float(field.strength_integral(t)) * ((-X) @ w)
        assert np.max(np.abs(j_d - expected_dia)) < 1e-14


def test_linear_currents_validation(response_setup):
    _, _, _, _, X, field, xp = response_setup
    with pytest.raises(ShapeError):
        linear_currents(xp, np.eye(2), field, 1.0)
    field2 = FieldProfile(direction=np.array([0.6, 0.8]), support_radius=1,
                          t_on=0.0, t_off=1.0, amplitude=1.0, carrier=1.0)
    with pytest.raises(ShapeError):
        linear_currents(xp, -X, field2, 1.0)
    with pytest.raises(GridError):
        linear_currents(xp, -X, field, 7.0)  # past the sampled kernel


def test_sigma_kernel_structure(response_setup):
    _, _, _, _, X, _, xp = response_setup
    t_grid = np.linspace(-2.0, 2.0, 21)
    ck = sigma_kernel(xp, -X, t_grid)
    neg = t_grid < 0.0
    assert np.all(ck.total.values[neg] == 0.0)
    # value at a positive node equals xi_d + Xi_p there
    idx = int(np.argmin(np.abs(t_grid - 1.2)))
    xp_idx = int(np.argmin(np.abs(xp.grid - 1.2)))
    assert np.isclose(t_grid[idx], xp.grid[xp_idx], rtol=0.0, atol=1e-12)
    assert np.max(np.abs(ck.total.values[idx] - (-X + xp.values[xp_idx]))) < 1e-14
    pos = t_grid > 0.0
    recon = ck.even_part.values + ck.odd_part.values
    assert np.max(np.abs(recon[pos] - ck.total.values[pos])) < 1e-14
    assert np.max(np.abs(recon[neg])) < 1e-14
    # odd part is antisymmetric on the symmetric grid
    assert np.max(np.abs(ck.odd_part.values + ck.odd_part.values[::-1])) == 0.0
    with pytest.raises(GridError):
        sigma_kernel(xp, -X, [0.0011])  # strictly between grid nodes
    with pytest.raises(ShapeError):
        sigma_kernel(xp, np.eye(2), [0.0, 1.0])


def test_hilbert_kramers_kronig_pair():
    # u + iv with u = 1/(1+x^2), v = x/(1+x^2) is a causal boundary pair;
    # this transform is the NEGATIVE of the classical one: H[u] = -v, H[v] = u.
    grid = hilbert_grid(20.0)
    u = 1.0 / (1.0 + grid**2)
    v = grid / (1.0 + grid**2)
    inner = np.abs(grid) <= 5.0
    hu = hilbert_transform(grid, u)
    hv = hilbert_transform(grid, v)
    assert np.max(np.abs(hu + v)[inner]) < 0.02  # truncated 1/x^2 tails
    assert np.max(np.abs(hv - u)[inner]) < 0.06  # v has slower 1/x tails
    assert np.max(np.abs(hu - v)[inner]) > 0.5
    assert np.max(np.abs(hv + u)[inner]) > 0.5


def test_hilbert_double_is_minus_identity():
    grid = hilbert_grid(20.0)
    inner = np.abs(grid) <= 0.75 * grid[-1]
    for c, width in ((0.0, 3.0), (2.0, 4.0), (-4.0, 3.5)):
        f = ((grid - c) / width) * np.exp(-(((grid - c) / width) ** 2))
        hh = hilbert_transform(grid, hilbert_transform(grid, f))
        rel = np.max(np.abs(hh + f)[inner]) / np.max(np.abs(f))
        assert rel <= 0.05


def test_hilbert_validation():
    with pytest.raises(DomainError):
        hilbert_grid(0.0)
    grid = hilbert_grid(5.0)
    assert abs(grid[0] + grid[-1]) < 1e-12
    with pytest.raises(GridError):
        hilbert_transform(np.array([0.0, 0.1, 0.3, 0.4, 0.5, 0.6, 0.7, -0.7]), np.zeros(8))
    with pytest.raises(GridError):
        hilbert_transform(np.linspace(0.0, 1.0, 64), np.zeros(64))
    with pytest.raises(GridError):
        hilbert_transform(np.linspace(-1.0, 1.0, 4), np.zeros(4))
    with pytest.raises(ShapeError):
        hilbert_transform(grid, np.zeros(7))


def test_fourier_route_matches_time_domain(response_setup):
    _, _, _, mu_p, X, field, xp = response_setup
    mu_full = full_conductivity_measure(mu_p, -X)
    for t in (2.7, 5.0):
        _, _, j_time = linear_currents(xp, -X, field, t)
        j_four, diag = fourier_ohm_current(mu_full, field, t, return_diagnostics=True)
        assert np.max(np.abs(j_four - j_time)) <= max(1e-6, diag["route_tolerance"])
        out = out_of_phase_current(mu_full, field, t)
        assert np.array_equal(out, diag["out_of_phase"])
        assert np.max(np.abs(diag["in_phase"] + out - j_four)) < 1e-15


def test_fourier_route_empty_measure():
    empty = SpectralMeasure(np.zeros(0), np.zeros((0, 1, 1)))
    field = FieldProfile(direction=np.array([1.0]), support_radius=1,
                         t_on=0.0, t_off=1.0, amplitude=1.0, carrier=1.0)
    j, diag = fourier_ohm_current(empty, field, 0.5, return_diagnostics=True)
    assert np.all(j == 0.0)
    assert diag["hh_defect"] == 0.0
    assert np.all(out_of_phase_current(empty, field, 0.5) == 0.0)


def test_out_of_phase_does_no_work():
    # Pairing the quadrature current against the drive integrates to zero:
    # the odd kernel makes the double integral antisymmetric under s <-> t.
    mu = SpectralMeasure(
        np.array([-2.1, -1.3, 0.0, 1.3, 2.1]),
        np.array([[[0.2]], [[0.4]], [[0.1]], [[0.4]], [[0.2]]]),
    )
    space = ACFieldSpace(t_on=0.0, t_off=4.0, n_harmonics=8)
    coef = np.zeros(space.size)
    coef[8], coef[9], coef[11] = 1.0, 0.5, -0.7  # sin-only: continuous drive
    field = space.field(coef, direction=(1.0,))
    ts = np.linspace(0.0, 4.0, 161)
    e_t = np.asarray(field.field_strength(ts), dtype=float)
    j_out = np.array([out_of_phase_current(mu, field, float(t), n_grid=1024)[0] for t in ts])
    j_tot = np.array([fourier_ohm_current(mu, field, float(t), n_grid=1024)[0] for t in ts])
    work_out = np.trapezoid(e_t * j_out, ts)
    work_in = np.trapezoid(e_t * (j_tot - j_out), ts)
    assert abs(work_out) <= 1e-12 * abs(work_in)
    assert work_in > 0.0


def test_ac_field_space_properties():
    space = ACFieldSpace(t_on=0.0, t_off=4.0, n_harmonics=8)
    assert space.size == 16
    assert np.allclose(space.harmonics, 2.0 * np.pi * np.arange(1, 9) / 4.0)
    rng = np.random.default_rng(5)
    e = rng.normal(size=space.size)
    field = space.field(e, direction=(1.0,))
    assert field.ac_defect() < 1e-12
    assert field.field_strength(-0.1) == 0.0
    assert field.field_strength(4.1) == 0.0
    assert field.strength_integral(9.0) == field.strength_integral(4.0)

    # closed-form window transform against a fine trapezoid with the open
    # endpoint limits restored (members jump at the window edges)
    nus = np.array([-2.3, 0.0, 0.7, 1.9])
    s = np.linspace(0.0, 4.0, 200001)
    e_s = np.asarray(field.field_strength(s), dtype=float)
    e_s[0] = e_s[-1] = e[: space.n_harmonics].sum()
    direct = np.array([np.trapezoid(e_s * np.exp(-1j * nu * s), s) for nu in nus])
    assert np.max(np.abs(field.truncated_transform(nus, 4.0) - direct)) < 1e-8
    assert abs(field.truncated_transform(np.array([0.0]), 4.0)[0]) < 1e-12

    with pytest.raises(DomainError):
        ACFieldSpace(t_on=1.0, t_off=1.0, n_harmonics=2)
    with pytest.raises(DomainError):
        ACFieldSpace(t_on=0.0, t_off=1.0, n_harmonics=0)
    with pytest.raises(ShapeError):
        space.field(np.zeros(5))
    with pytest.raises(DomainError):
        space.field(e, direction=(2.0,))


@pytest.fixture(scope="module")
def small_heat_form():
    box = make_box(1, 1)
    es = eigendecompose(build_hamiltonian(box, sample_potential(box, 0, "zero"), 0.0))
    mu = build_measure(es, 1.0, 0)
    space = ACFieldSpace(t_on=0.0, t_off=4.0, n_harmonics=8)
    return mu, space, heat_form(mu, [1.0], space)


def test_heat_form_value_oracle(small_heat_form):
    mu, space, q = small_heat_form
    assert q.min_eigenvalue() >= -1e-12
    rng = np.random.default_rng(5)
    e = rng.normal(size=space.size)
    field = space.field(e, direction=(1.0,))
    s = np.linspace(0.0, 4.0, 200001)
    e_s = np.asarray(field.field_strength(s), dtype=float)
    e_s[0] = e_s[-1] = e[: space.n_harmonics].sum()
    mw = mu.weights[:, 0, 0]
    ehat = np.array([np.trapezoid(e_s * np.exp(-1j * nu * s), s) for nu in mu.frequencies])
    oracle = 0.5 * float(np.sum(mw * np.abs(ehat) ** 2))
    assert q.value(e) == pytest.approx(oracle, rel=1e-8)
    assert q.seminorm(e) == pytest.approx(np.sqrt(oracle), rel=1e-8)


def test_conductivity_resistivity_duality(small_heat_form):
    _, space, q = small_heat_form
    rng = np.random.default_rng(9)
    e1, e2 = rng.normal(size=(2, space.size))
    j1 = conductivity_map(q, e1)
    j2 = conductivity_map(q, e2)
    r1 = resistivity_map(q, j1)
    # sigma o rho is the identity on the range of the form
    assert np.max(np.abs(conductivity_map(q, r1.coefficients) - j1)) < 1e-12
    assert r1.q_star == pytest.approx(q.value(r1.coefficients), abs=1e-12)
    assert dual_pairing(q, j1, j1) == pytest.approx(r1.q_star, abs=1e-12)
    # additivity and homogeneity of the inverse map
    r_sum = resistivity_map(q, 2.5 * j1 - 0.5 * j2)
    combo = 2.5 * r1.coefficients - 0.5 * resistivity_map(q, j2).coefficients
    assert np.max(np.abs(r_sum.coefficients - combo)) < 1e-10
    # polarization identity of the dual pairing
    lhs = dual_pairing(q, j1, j2)
    rhs = 0.5 * (
        resistivity_map(q, j1 + j2).q_star - r1.q_star - resistivity_map(q, j2).q_star
    )
    assert lhs == pytest.approx(rhs, abs=1e-10)
    # zero current maps to the zero field
    r0 = resistivity_map(q, np.zeros(space.size))
    assert r0.q_star == 0.0 and np.all(r0.coefficients == 0.0)


def test_resistivity_outside_domain(small_heat_form):
    _, space, q = small_heat_form
    vals, vecs = np.linalg.eigh(q.matrix)
    assert int(np.sum(vals > 1e-9 * vals[-1])) < space.size  # kernel exists
    with pytest.raises(OutsideDomainError):
        resistivity_map(q, vecs[:, 0])
    with pytest.raises(ShapeError):
        resistivity_map(q, np.zeros(3))
    with pytest.raises(ShapeError):
        conductivity_map(q, np.zeros(3))


def test_heat_form_validation(small_heat_form):
    mu, space, _ = small_heat_form
    with pytest.raises(ShapeError):
        heat_form(mu, [1.0, 0.0], space)
    empty = SpectralMeasure(np.zeros(0), np.zeros((0, 1, 1)))
    q0 = heat_form(empty, [1.0], space)
    assert np.all(q0.matrix == 0.0)
