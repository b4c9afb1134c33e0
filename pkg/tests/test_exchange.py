"""Exchange-collision kernel: collision map, nonlinear equations,
linearization, diffusion coefficients and closed-form results."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from spinxfer.exchange import (
    COHERENCE_LABELS,
    DensityState,
    ExchangeRates,
    collision_update,
    diffusion_exchange,
    exchange_correlation_functions,
    exchange_initial_covariance,
    exchange_pair_system,
    exchange_spectra,
    exchange_steady_variances,
    integrate_nonlinear,
    linearize_exchange,
    me_rhs,
)
from spinxfer.langevin import evolve_covariance, noise_spectrum, steady_covariance
from spinxfer.langevin import SingularSystemError


def random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def cg_unitary_oracle():
    """Clebsch-Gordan basis change obtained independently by diagonalizing
    F^2 = (I + J)^2 in the decoupled product basis."""
    # spin-1/2 and spin-1 operators
    si = [np.array([[0, 1], [1, 0]]) / 2, np.array([[0, -1j], [1j, 0]]) / 2,
          np.diag([-0.5, 0.5])]  # basis order (-1/2, +1/2)
    s1 = np.sqrt(0.5)
    jx = np.array([[0, s1, 0], [s1, 0, s1], [0, s1, 0]]) * np.sqrt(2) / np.sqrt(2)
    jx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]) / np.sqrt(2)
    jy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]]) / np.sqrt(2)
    jz = np.diag([-1.0, 0.0, 1.0])  # basis order (-1, 0, +1)
    eye2, eye3 = np.eye(2), np.eye(3)
    F = [np.kron(si[k], eye3) + np.kron(eye2, [jx, jy, jz][k]) for k in range(3)]
    F2 = sum(f @ f for f in F)
    Fz = F[2]
    # simultaneous eigenbasis, ordered as (F=3/2, m=-3/2..3/2), (F=1/2, m=-1/2,1/2)
    vals, vecs = np.linalg.eigh(F2 + 0.01 * Fz)
    f2 = np.real(np.einsum("ij,jk,ki->i", vecs.conj().T, F2, vecs))
    mz = np.real(np.einsum("ij,jk,ki->i", vecs.conj().T, Fz, vecs))
    order = []
    for f_target, ms in ((3.75, [-1.5, -0.5, 0.5, 1.5]), (0.75, [-0.5, 0.5])):
        for m in ms:
            k = np.argmin(np.abs(f2 - f_target) + np.abs(mz - m))
            order.append(k)
    return vecs[:, order]  # columns: decoupled components of each F-level


def test_collision_polarized_pair_is_fixed_point():
    rho_m = np.zeros((6, 6), dtype=complex)
    rho_m[3, 3] = 1.0
    rho_g = np.diag([0.0, 1.0]).astype(complex)
    g_new, m_new = collision_update(rho_g, rho_m)
    assert_allclose(g_new, rho_g, atol=1e-14)
    assert_allclose(m_new, rho_m, atol=1e-14)


def test_collision_maximally_mixed_metastable():
    rng = np.random.default_rng(0)
    rho_g = random_density(rng, 2)
    rho_m = np.eye(6, dtype=complex) / 6
    g_new, _ = collision_update(rho_g, rho_m)
    assert_allclose(g_new, np.eye(2) / 2, atol=1e-14)


def test_collision_level3_clebsch_gordan_populations():
    # |3> = |F=3/2, m=+1/2> splits as 1/3 on m_I=-1/2 and 2/3 on m_I=+1/2
    rho_m = np.zeros((6, 6), dtype=complex)
    rho_m[2, 2] = 1.0
    rho_g = np.diag([0.0, 1.0]).astype(complex)
    g_new, _ = collision_update(rho_g, rho_m)
    assert_allclose(np.diag(g_new).real, [1 / 3, 2 / 3], atol=1e-14)

    # same numbers from the independent CG oracle
    U = cg_unitary_oracle()
    level3 = U[:, 2]
    rho_dec = np.outer(level3, level3.conj()).reshape(2, 3, 2, 3)
    tr_e = np.einsum("iaja->ij", rho_dec)
    assert_allclose(np.diag(g_new).real, np.diag(tr_e).real, atol=1e-12)


def test_collision_preserves_hermiticity_and_trace():
    rng = np.random.default_rng(42)
    for _ in range(25):
        rho_g = random_density(rng, 2)
        rho_m = random_density(rng, 6)
        g_new, m_new = collision_update(rho_g, rho_m)
        for out in (g_new, m_new):
            assert_allclose(out, out.conj().T, atol=1e-12)
            assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.eigvalsh(out).min() >= -1e-12


def test_collision_rejects_bad_input():
    with pytest.raises(ValueError):
        collision_update(np.diag([0.7, 0.7]), np.eye(6) / 6)
    bad = np.eye(2) / 2
    nonherm = np.eye(6, dtype=complex) / 6
    nonherm[0, 1] = 0.3
    with pytest.raises(ValueError):
        collision_update(bad, nonherm)


def test_me_rhs_polarized_state_is_stationary():
    n, N = 1.0, 1e6
    rates = ExchangeRates(gamma_exc=5.0, n=n, N=N)
    state = DensityState.polarized(n, N)
    dm, dg = me_rhs(state, rates)
    scale = rates.gamma_exc * N * n
    assert np.abs(dm).max() < 1e-12 * scale
    assert np.abs(dg).max() < 1e-12 * scale


def test_me_rhs_inverted_ground_example():
    # rho_44 = n, rho_99 = N: the metastable population drains at
    # gamma_exc N n while the polarized ground level fills at the same rate
    n, N, g = 2.0, 5.0, 1.3
    rates = ExchangeRates(gamma_exc=g, n=n, N=N)
    rho_m = np.zeros((6, 6), dtype=complex)
    rho_m[3, 3] = n
    rho_g = np.diag([N, 0.0]).astype(complex)
    dm, dg = me_rhs(DensityState(rho_m, rho_g, n, N), rates)
    assert dm[3, 3].real == pytest.approx(-g * N * n, rel=1e-12)
    assert dg[1, 1].real == pytest.approx(g * N * n, rel=1e-12)
    # the drained population reappears in levels 3 and 6 (1/3 : 2/3)
    assert dm[2, 2].real == pytest.approx(g * N * n / 3, rel=1e-12)
    assert dm[5, 5].real == pytest.approx(2 * g * N * n / 3, rel=1e-12)


def test_me_rhs_conserves_traces():
    rng = np.random.default_rng(11)
    n, N = 2.0, 7.0
    rates = ExchangeRates(gamma_exc=0.9, n=n, N=N)
    for _ in range(10):
        rho_m = n * random_density(rng, 6)
        # keep only the propagated coherences (no inter-manifold ones)
        keep = np.zeros((6, 6), dtype=bool)
        for i, j in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5)]:
            keep[i, j] = keep[j, i] = True
        keep |= np.eye(6, dtype=bool)
        rho_m = np.where(keep, rho_m, 0.0)
        rho_g = N * random_density(rng, 2)
        dm, dg = me_rhs(DensityState(rho_m, rho_g, n, N), rates)
        assert abs(np.trace(dm)) < 1e-12 * rates.gamma_exc * n * N
        assert abs(np.trace(dg)) < 1e-12 * rates.gamma_exc * n * N


def test_me_rhs_matches_collision_map():
    # the explicit element equations are the collision map
    #   d rho_g = -gamma_f rho_g + gamma_f N Tr_e(rho_m)/n
    #   d rho_m = -gamma_m rho_m + gamma_m n (rho_g/N (x) Tr_n(rho_m)/n)
    # restricted to states without inter-manifold coherences
    rng = np.random.default_rng(5)
    n, N = 3.0, 11.0
    rates = ExchangeRates(gamma_exc=1.0, n=n, N=N)
    gm, gf = rates.gamma_m, rates.gamma_f
    keep = np.zeros((6, 6), dtype=bool)
    for i, j in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5)]:
        keep[i, j] = keep[j, i] = True
    keep |= np.eye(6, dtype=bool)

    for _ in range(8):
        rho_m = np.where(keep, n * random_density(rng, 6), 0.0)
        rho_g = N * random_density(rng, 2)
        g_new, m_new = collision_update(rho_g / N, rho_m / n)
        dm_map = -gm * rho_m + gm * n * m_new
        dg_map = -gf * rho_g + gf * N * g_new
        dm_map = np.where(keep, dm_map, 0.0)  # secular truncation
        dm, dg = me_rhs(DensityState(rho_m, rho_g, n, N), rates)
        assert_allclose(dm, dm_map, atol=1e-11 * gm * n)
        assert_allclose(dg, dg_map, atol=1e-11 * gm * n)


def test_integrate_polarized_stays_put():
    n, N = 1.0, 4.0
    rates = ExchangeRates(gamma_exc=1.0, n=n, N=N)
    state = integrate_nonlinear(DensityState.polarized(n, N), rates, 3.0, tol=1e-10)
    assert state.rho_m[3, 3].real == pytest.approx(n, rel=1e-9)
    assert state.rho_g[1, 1].real == pytest.approx(N, rel=1e-9)
    state.validate(1e-8)


def test_integrate_short_time_taylor_consistency():
    n, N = 1.0, 3.0
    rates = ExchangeRates(gamma_exc=1.0, n=n, N=N)
    rng = np.random.default_rng(2)
    rho_m = n * random_density(rng, 6)
    keep = np.zeros((6, 6), dtype=bool)
    for i, j in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5)]:
        keep[i, j] = keep[j, i] = True
    keep |= np.eye(6, dtype=bool)
    rho_m = np.where(keep, rho_m, 0.0)
    state0 = DensityState(rho_m, N * random_density(rng, 2), n, N)
    dt = 1e-4
    state_dt = integrate_nonlinear(state0, rates, dt, tol=1e-12)
    dm, dg = me_rhs(state0, rates)
    assert_allclose(state_dt.rho_m, state0.rho_m + dt * dm, atol=50 * dt**2)
    assert_allclose(state_dt.rho_g, state0.rho_g + dt * dg, atol=50 * dt**2)


def test_integrate_relaxes_within_bounds():
    # metastable polarized up, ground polarized down: exchange mixes them
    n, N = 1.0, 3.0
    rates = ExchangeRates(gamma_exc=1.0, n=n, N=N)
    rho_m = np.zeros((6, 6), dtype=complex)
    rho_m[3, 3] = n
    rho_g = np.diag([N, 0.0]).astype(complex)
    state = integrate_nonlinear(DensityState(rho_m, rho_g, n, N), rates, 60.0,
                                tol=1e-10)
    pops_m = np.diag(state.rho_m).real
    pops_g = np.diag(state.rho_g).real
    assert pops_m.min() >= -1e-9 and pops_m.max() <= n + 1e-9
    assert pops_g.min() >= -1e-9 and pops_g.max() <= N + 1e-9
    dm, dg = me_rhs(state, rates)
    assert np.abs(dm).max() < 1e-8 * rates.gamma_exc * n * N
    assert np.abs(dg).max() < 1e-8 * rates.gamma_exc * n * N


# ---------------------------------------------------------------------------
# linearization


def test_linearize_exact_coefficients():
    n, N, g = 1.0, 1e6, 5.0
    lin = linearize_exchange(n, N, g)
    gm, gf = N * g, n * g
    i43 = lin.variables.index("S43")
    i09 = lin.variables.index("I09")
    assert lin.drift[i43, i09] == pytest.approx(np.sqrt(3) / 3 * gf, rel=1e-15)
    assert lin.drift[i09, i43] == pytest.approx(np.sqrt(3) / 3 * gm, rel=1e-15)
    assert lin.drift[i43, i43] == pytest.approx(-gm / 3, rel=1e-15)
    assert lin.drift[i43, lin.variables.index("S32")] == pytest.approx(
        2 * np.sqrt(3) * gm / 9, rel=1e-15)


def test_linearize_matches_finite_difference_jacobian():
    n, N, g = 2.0, 9.0, 1.0
    lin = linearize_exchange(n, N, g)
    # fluctuation coordinates of (S21, S32, S65, S43, I09) in the matrices
    slots = [("m", 0, 1), ("m", 1, 2), ("m", 4, 5), ("m", 2, 3), ("g", 0, 1)]
    rates = ExchangeRates(gamma_exc=g, n=n, N=N)

    def rhs_vec(pert):
        state = DensityState.polarized(n, N)
        for val, (kind, i, j) in zip(pert, slots):
            m = state.rho_m if kind == "m" else state.rho_g
            m[i, j] += val
            m[j, i] += np.conj(val)
        dm, dg = me_rhs(state, rates)
        return np.array([
            (dm if kind == "m" else dg)[i, j] for kind, i, j in slots
        ])

    eps = 1e-6 * n
    J = np.zeros((5, 5))
    for col in range(5):
        e = np.zeros(5)
        e[col] = eps
        J[:, col] = np.real(rhs_vec(e) - rhs_vec(-e)) / (2 * eps)
    assert_allclose(J, lin.drift, rtol=1e-6, atol=1e-9 * N * g)


def test_singular_block_eigenvalues():
    n, N, g = 1.0, 1e6, 5.0
    pair = linearize_exchange(n, N, g).reduced_pair()
    gm, gf = N * g, n * g
    assert abs(np.linalg.det(pair.drift)) < 1e-9 * (gm * gf)
    eig = np.sort(np.linalg.eigvals(pair.drift).real)
    assert_allclose(eig, [-(gm + 3 * gf) / 3, 0.0], rtol=1e-12, atol=1e-12 * gm)


def test_diffusion_exchange_entries():
    D = diffusion_exchange(1.0, 1.0)
    i43 = COHERENCE_LABELS.index("S43")
    i09 = COHERENCE_LABELS.index("I09")
    assert D[i43, i43] == pytest.approx(2 / 3)
    assert D[i43, i09] == pytest.approx(-2 * np.sqrt(3) / 3)
    assert D[i09, i09] == pytest.approx(2.0)
    assert np.count_nonzero(D) == 4
    assert_allclose(diffusion_exchange(0.0, 1.0), np.zeros((5, 5)))


def test_diffusion_quadrature_transform():
    # <f_{Sy} f_{Sy}> = D_{43,34}/4 = gamma_m n / 6 in the quadrature basis
    n, N, g = 1.0, 1e6, 5.0
    gm = N * g
    sys = exchange_pair_system(n, N, g)
    iy = sys.labels.index("S43:y")
    assert sys.diffusion[iy, iy] == pytest.approx(gm * n / 6, rel=1e-12)
    jy = sys.labels.index("I09:y")
    assert sys.diffusion[jy, jy] == pytest.approx(gm * n / 2, rel=1e-12)
    assert sys.diffusion[iy, jy] == pytest.approx(-np.sqrt(3) * gm * n / 6, rel=1e-12)


def test_conserved_mode_is_noise_free():
    # sqrt(3) S_y + I_y is conserved by the drift and undriven by the forces
    n, N, g = 1.0, 1e6, 5.0
    sys = exchange_pair_system(n, N, g)
    w = np.zeros(4)
    w[sys.labels.index("S43:y")] = np.sqrt(3)
    w[sys.labels.index("I09:y")] = 1.0
    assert np.abs(w @ sys.drift).max() < 1e-9 * N * g
    assert abs(w @ sys.diffusion @ w) < 1e-9 * N * g * n


# ---------------------------------------------------------------------------
# closed forms


def test_steady_variances_coherent_input():
    assert exchange_steady_variances(1.0, 1e6, 0.0) == (1.0, 1.0)


def test_steady_variances_reference_point():
    var_s, var_i = exchange_steady_variances(1.0, 1e6, np.log(2) / 2)
    assert var_i == pytest.approx(0.500003, abs=1e-6)
    assert var_s == pytest.approx(0.9999985, abs=1e-7)


def test_steady_variances_match_time_domain_evolution():
    n, N = 1.0, 1e6
    gamma_exc = 5.0  # gamma_m = 5e6 1/s, gamma_f = 5 1/s
    r = np.log(2) / 2
    sys = exchange_pair_system(n, N, gamma_exc)
    C0 = exchange_initial_covariance(n, N, r)
    gf = n * gamma_exc
    C = evolve_covariance(sys, C0, 100.0 / gf)
    var_s_ref, var_i_ref = exchange_steady_variances(n, N, r)
    assert C.variance("S43:y") / (n / 4) == pytest.approx(var_s_ref, rel=1e-6)
    assert C.variance("I09:y") / (N / 4) == pytest.approx(var_i_ref, rel=1e-6)


def test_exchange_steady_state_rejected_by_lyapunov_solver():
    sys = exchange_pair_system(1.0, 1e6, 5.0)
    with pytest.raises(SingularSystemError):
        steady_covariance(sys)


def test_correlation_functions():
    n, N = 1.0, 1e6
    assert exchange_correlation_functions(n, N, 0.0) == (0.0, 0.0)
    c_s, c_i = exchange_correlation_functions(n, N, np.log(2) / 2)
    assert c_s / c_i == pytest.approx(3.0, rel=1e-12)
    assert c_i == pytest.approx(-0.125 / N, rel=1e-4)
    assert c_i < 0


@given(st.floats(0.01, 100), st.floats(1e3, 1e9), st.floats(0.0, 2.0))
@settings(max_examples=50, deadline=None)
def test_correlation_ratio_is_three(n, N, r):
    c_s, c_i = exchange_correlation_functions(n, N, r)
    assert c_s == pytest.approx(3 * c_i, rel=1e-12, abs=1e-300)


def test_spectra_closed_form_values():
    n, N, g = 1.0, 1e6, 5.0
    r = np.log(2) / 2
    s_ii, s_ss = exchange_spectra(n, N, r, g)
    assert s_ii.smooth(0.0) == pytest.approx(
        9 * g * n * N / (2 * (N + 3 * n) ** 2 * g**2), rel=1e-12)
    # the delta weight carries the squeezing; the smooth part does not
    s_ii_r0, _ = exchange_spectra(n, N, 0.0, g)
    assert s_ii_r0.smooth(1.0) == pytest.approx(s_ii.smooth(1.0), rel=1e-12)
    assert s_ii_r0.delta_weight > s_ii.delta_weight
    # coherent-state delta weight integrates to the coherent variance N/4
    assert s_ii_r0.sum_rule_value() == pytest.approx(N / 4, rel=1e-9)


def test_spectra_sum_rule_closed_form_and_quadrature():
    n, N, g = 1.0, 1e6, 5.0
    r = np.log(2) / 2
    s_ii, s_ss = exchange_spectra(n, N, r, g)
    var_s, var_i = exchange_steady_variances(n, N, r)
    assert s_ii.sum_rule_value() == pytest.approx(var_i * N / 4, rel=1e-9)
    assert s_ss.sum_rule_value() == pytest.approx(var_s * n / 4, rel=1e-9)
    # independent quadrature: map the whole line through omega = w tan(u)
    w = (N + 3 * n) * g / 3
    for spec in (s_ii, s_ss):
        val, _ = quad(lambda u: spec.smooth(w * np.tan(u)) * w / np.cos(u) ** 2,
                      -np.pi / 2, np.pi / 2, limit=200)
        assert val == pytest.approx(spec.smooth_integral, rel=1e-6)


def test_spectra_match_generic_engine():
    n, N, g = 1.0, 1e6, 5.0
    r = np.log(2) / 2
    sys = exchange_pair_system(n, N, g)
    C0 = exchange_initial_covariance(n, N, r)
    spec_i = noise_spectrum(sys, C0, "I09:y", "I09:y")
    spec_s = noise_spectrum(sys, C0, "S43:y", "S43:y")
    ref_i, ref_s = exchange_spectra(n, N, r, g)
    gm = N * g
    om = np.linspace(-3 * gm, 3 * gm, 21)
    assert_allclose(spec_i.smooth(om), ref_i.smooth(om), rtol=1e-6)
    assert_allclose(spec_s.smooth(om), ref_s.smooth(om), rtol=1e-6)
    assert spec_i.delta_weight == pytest.approx(ref_i.delta_weight, rel=1e-6)
    assert spec_s.delta_weight == pytest.approx(ref_s.delta_weight, rel=1e-6)
    assert spec_i.sum_rule_value() == pytest.approx(ref_i.equal_time, rel=1e-6)
    assert spec_s.sum_rule_value() == pytest.approx(ref_s.equal_time, rel=1e-6)
