"""Metastability-exchange collisions in helium-3.

A collision swaps the electronic degrees of freedom of a metastable
(2^3S, six hyperfine sublevels, labelled 1-6) and a ground-state atom
(purely nuclear spin 1/2, sublevels labelled 9 and 0).  In terms of the
one-body density matrices of the colliding atoms,

    rho_g' = Tr_e rho_m,        rho_m' = rho_g (x) Tr_n rho_m,

and the collective matrices relax toward the post-collision ones at rates
gamma_f = n gamma_exc (ground) and gamma_m = N gamma_exc (metastable).

This module carries the nonlinear evolution of the one-body density
matrix elements, the linearization around the fully polarized state
(rho_44 = n, rho_00 = N), the Langevin diffusion coefficients obtained
from the generalized Einstein relations, and the closed-form steady-state
variances, correlation functions and noise spectra of the exchange-only
dynamics.

Level labels: 1-4 are F=3/2 (m = -3/2..+3/2), 5-6 are F=1/2
(m = -1/2, +1/2); 9 and 0 are the ground sublevels m_I = -1/2, +1/2.
The fully polarized state occupies 4 and 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .langevin import (
    ComplexSystem,
    CovarianceMatrix,
    IntegrationError,
    LinearLangevinSystem,
    SpectrumResult,
)

SQRT3 = np.sqrt(3.0)

#: coherences retained by the linearization around the polarized state
COHERENCE_LABELS = ("S21", "S32", "S65", "S43", "I09")

# ground basis order (9, 0); metastable basis order (1, ..., 6)
_IDX_9, _IDX_0 = 0, 1


def _clebsch_gordan_matrix() -> np.ndarray:
    """Unitary mapping the decoupled |m_I> (x) |m_J> basis to levels 1-6.

    Decoupled basis ordering: index 3*i_I + i_J with i_I in (0: m_I=-1/2,
    1: m_I=+1/2) and i_J in (0: m_J=-1, 1: m_J=0, 2: m_J=+1).
    Rows are levels 1..6.
    """
    a, b = np.sqrt(1 / 3), np.sqrt(2 / 3)
    U = np.zeros((6, 6))
    # F = 3/2 manifold
    U[0, 0] = 1.0                       # |1> = |-,-1>
    U[1, 1], U[1, 3] = b, a             # |2> = sqrt(2/3)|-,0> + sqrt(1/3)|+,-1>
    U[2, 2], U[2, 4] = a, b             # |3> = sqrt(1/3)|-,+1> + sqrt(2/3)|+,0>
    U[3, 5] = 1.0                       # |4> = |+,+1>
    # F = 1/2 manifold
    U[4, 1], U[4, 3] = a, -b            # |5> = sqrt(1/3)|-,0> - sqrt(2/3)|+,-1>
    U[5, 2], U[5, 4] = b, -a            # |6> = sqrt(2/3)|-,+1> - sqrt(1/3)|+,0>
    return U


_CG = _clebsch_gordan_matrix()


@dataclass(frozen=True)
class ExchangeRates:
    """Per-atom exchange rate and the collective rates it induces."""

    gamma_exc: float
    n: float
    N: float

    @property
    def gamma_m(self) -> float:
        return self.N * self.gamma_exc

    @property
    def gamma_f(self) -> float:
        return self.n * self.gamma_exc


@dataclass
class DensityState:
    """Joint one-body density matrix, trace-weighted by atom numbers.

    rho_m is 6x6 with trace n (metastable), rho_g is 2x2 with trace N
    (ground, basis order (9, 0)).
    """

    rho_m: np.ndarray
    rho_g: np.ndarray
    n: float
    N: float

    def __post_init__(self):
        self.rho_m = np.array(self.rho_m, dtype=complex)
        self.rho_g = np.array(self.rho_g, dtype=complex)
        if self.rho_m.shape != (6, 6) or self.rho_g.shape != (2, 2):
            raise ValueError("rho_m must be 6x6 and rho_g 2x2")

    @classmethod
    def polarized(cls, n: float, N: float) -> "DensityState":
        rho_m = np.zeros((6, 6), dtype=complex)
        rho_m[3, 3] = n
        rho_g = np.zeros((2, 2), dtype=complex)
        rho_g[_IDX_0, _IDX_0] = N
        return cls(rho_m, rho_g, n, N)

    def validate(self, tol: float = 1e-9):
        for name, m, tr in (("rho_m", self.rho_m, self.n), ("rho_g", self.rho_g, self.N)):
            scale = max(abs(tr), 1.0)
            if not np.allclose(m, m.conj().T, atol=tol * scale):
                raise ValueError(f"{name} is not Hermitian")
            if abs(np.trace(m).real - tr) > tol * scale:
                raise ValueError(f"trace({name}) != expected atom number")
            if np.diag(m).real.min() < -tol * scale:
                raise ValueError(f"{name} has a negative population")
        return self


def _check_one_body(rho: np.ndarray, name: str, tol: float = 1e-9):
    rho = np.asarray(rho, dtype=complex)
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise ValueError(f"{name} must be Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"{name} must have unit trace")
    return rho


def collision_update(rho_g_at: np.ndarray, rho_m_at: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """One-body density matrices after a single exchange collision.

    rho_g' = Tr_e rho_m (the metastable atom's nuclear state becomes a
    ground atom), rho_m' = rho_g (x) Tr_n rho_m.  Inputs and outputs are
    unit-trace Hermitian matrices; rho_m is given in the hyperfine basis
    (levels 1-6), rho_g in the (9, 0) basis.
    """
    rho_g_at = _check_one_body(rho_g_at, "rho_g")
    rho_m_at = _check_one_body(rho_m_at, "rho_m")
    # to the decoupled nuclear (x) electronic basis
    rho_dec = _CG.T @ rho_m_at @ _CG
    rho_dec = rho_dec.reshape(2, 3, 2, 3)
    tr_e = np.einsum("iaja->ij", rho_dec)       # trace over electronic
    tr_n = np.einsum("iaib->ab", rho_dec)       # trace over nuclear
    rho_m_new_dec = np.kron(rho_g_at, tr_n)
    rho_m_new = _CG @ rho_m_new_dec @ _CG.T
    return tr_e, rho_m_new


def me_rhs(state: DensityState, rates: ExchangeRates
           ) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (d rho_m/dt, d rho_g/dt) under exchange collisions.

    Implements the explicit nonlinear equations for the sixteen retained
    matrix elements (populations, Delta-m = 1..3 coherences within each
    hyperfine manifold, and the ground coherence); Hermitian-conjugate
    elements are mirrored, inter-manifold coherences are not propagated
    (they oscillate at the hyperfine frequency and average away).
    """
    g = rates.gamma_exc
    m, gr = state.rho_m, state.rho_g
    n, N = state.n, state.N

    r11, r22, r33 = m[0, 0], m[1, 1], m[2, 2]
    r44, r55, r66 = m[3, 3], m[4, 4], m[5, 5]
    r12, r13, r14 = m[0, 1], m[0, 2], m[0, 3]
    r23, r24, r34 = m[1, 2], m[1, 3], m[2, 3]
    r56 = m[4, 5]
    r21, r32, r43, r65 = np.conj(r12), np.conj(r23), np.conj(r34), np.conj(r56)
    r99, r00 = gr[_IDX_9, _IDX_9], gr[_IDX_0, _IDX_0]
    r09 = gr[_IDX_0, _IDX_9]
    r90 = np.conj(r09)

    # recurring population/coherence combinations
    p_low = r22 + 3 * r11 + 2 * r55
    p_mid = 2 * r22 + r55 + r66 + 2 * r33
    p_high = 2 * r66 + r33 + 3 * r44
    c_sym = SQRT3 * r12 + r23 + r56
    c_up = SQRT3 * r21 + r65 + r32
    c34 = SQRT3 * r34 + r56 + r23
    c34_up = SQRT3 * r43 + r65 + r32
    c_2 = r13 + r24

    dm = np.zeros((6, 6), dtype=complex)
    dm[0, 0] = g * (-N * r11 + r99 * p_low / 3)
    dm[0, 1] = g * (-N * r12 + (2 / 9) * r99 * ((r23 + r56) * SQRT3 + 3 * r12)
                    + (SQRT3 / 9) * r90 * p_low)
    dm[0, 2] = g * (-N * r13 + r99 * c_2 / 3
                    + (2 / 9) * r90 * ((r23 + r56) * SQRT3 + 3 * r12))
    dm[0, 3] = g * (-N * r14 + (SQRT3 / 3) * r90 * c_2)
    dm[1, 1] = g * (-N * r22 + (2 / 9) * r99 * p_mid + (2 / 9) * r90 * c_up
                    + (2 / 9) * r09 * c_sym + r00 * p_low / 9)
    dm[1, 2] = g * (-N * r23 + (2 / 9) * r99 * c34 + (2 / 9) * r90 * p_mid
                    + (SQRT3 / 9) * r09 * c_2 + (2 / 9) * r00 * c_sym)
    dm[1, 3] = g * (-N * r24 + (2 / 9) * r90 * (SQRT3 * (r23 + r56) + 3 * r34)
                    + r00 * c_2 / 3)
    dm[2, 2] = g * (-N * r33 + r99 * p_high / 9 + (2 / 9) * r90 * c34_up
                    + (2 / 9) * r09 * c34 + (2 / 9) * r00 * p_mid)
    dm[2, 3] = g * (-N * r34 + (SQRT3 / 9) * r90 * p_high
                    + (2 / 9) * r00 * (SQRT3 * (r23 + r56) + 3 * r34))
    dm[3, 3] = g * (-N * r44 + r00 * p_high / 3)
    dm[4, 4] = g * (-N * r55 + r99 * p_mid / 9 - (2 / 9) * r90 * c_up
                    - (2 / 9) * r09 * c_sym + (2 / 9) * r00 * p_low)
    dm[4, 5] = g * (-N * r56 + (2 / 9) * r99 * c34 - r90 * p_mid / 9
                    - (2 * SQRT3 / 9) * r09 * c_2 + (2 / 9) * r00 * c_sym)
    dm[5, 5] = g * (-N * r66 + (2 / 9) * r99 * p_high - (2 / 9) * r90 * c34_up
                    - (2 / 9) * r09 * c34 + r00 * p_mid / 9)
    dm = dm + np.triu(dm, 1).conj().T

    dg = np.zeros((2, 2), dtype=complex)
    dg[_IDX_0, _IDX_0] = g * (-n * r00 + N * (3 * r44 + r66 + r22 + 2 * r55 + 2 * r33) / 3)
    dg[_IDX_9, _IDX_9] = g * (-n * r99 + N * (r33 + 2 * r22 + 3 * r11 + r55 + 2 * r66) / 3)
    dg[_IDX_0, _IDX_9] = g * (-n * r09 + N * ((r43 + r21) * SQRT3 + 2 * r32 - r65) / 3)
    dg[_IDX_9, _IDX_0] = np.conj(dg[_IDX_0, _IDX_9])
    return dm, dg


# packing for the nonlinear integrator: Hermiticity is built in by evolving
# only independent elements, and the two trace constraints are eliminated
# exactly (rho_44 = n - rest, rho_99 = N - rho_00).  The trace manifold of
# the truncated equations is a saddle, so integrating all populations would
# amplify roundoff exponentially.
_M_DIAG_IND = [(0, 0), (1, 1), (2, 2), (4, 4), (5, 5)]
_M_COH = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (4, 5)]


def _pack(rho_m: np.ndarray, rho_g: np.ndarray) -> np.ndarray:
    y = [rho_m[i, j].real for i, j in _M_DIAG_IND]
    y.append(rho_g[_IDX_0, _IDX_0].real)
    for i, j in _M_COH:
        y += [rho_m[i, j].real, rho_m[i, j].imag]
    c = rho_g[_IDX_0, _IDX_9]
    y += [c.real, c.imag]
    return np.array(y)


def _unpack(y: np.ndarray, n: float, N: float) -> DensityState:
    rho_m = np.zeros((6, 6), dtype=complex)
    for k, (i, j) in enumerate(_M_DIAG_IND):
        rho_m[i, j] = y[k]
    rho_m[3, 3] = n - np.trace(rho_m)
    rho_g = np.zeros((2, 2), dtype=complex)
    rho_g[_IDX_0, _IDX_0] = y[5]
    rho_g[_IDX_9, _IDX_9] = N - y[5]
    off = 6
    for k, (i, j) in enumerate(_M_COH):
        rho_m[i, j] = y[off + 2 * k] + 1j * y[off + 2 * k + 1]
        rho_m[j, i] = np.conj(rho_m[i, j])
    c = y[off + 14] + 1j * y[off + 15]
    rho_g[_IDX_0, _IDX_9] = c
    rho_g[_IDX_9, _IDX_0] = np.conj(c)
    return DensityState(rho_m, rho_g, n, N)


def integrate_nonlinear(state0: DensityState, rates: ExchangeRates,
                        t_final: float, tol: float = 1e-9) -> DensityState:
    """Evolve the nonlinear exchange equations up to t_final.

    Adaptive embedded Runge-Kutta on the independent matrix elements;
    Hermiticity and the traces n, N hold exactly by construction.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n, N = state0.n, state0.N

    def rhs(_, y):
        dm, dg = me_rhs(_unpack(y, n, N), rates)
        return _pack(dm, dg)

    scale = max(n, N, 1.0)
    sol = solve_ivp(rhs, (0.0, t_final), _pack(state0.rho_m, state0.rho_g),
                    method="RK45", rtol=tol, atol=tol * scale)
    if not sol.success:
        raise IntegrationError(f"nonlinear exchange integration failed: {sol.message}")
    return _unpack(sol.y[:, -1], n, N)


# ---------------------------------------------------------------------------
# linearization around the fully polarized state


@dataclass(frozen=True)
class ExchangeLinearization:
    """Linear drift/diffusion of the coherences around full polarization.

    ``variables`` orders the retained coherences; drift is the real matrix
    of their coupled equations and ``diffusion`` holds the Einstein-relation
    coefficients D[a, b] = <f_a f_b^dag> (only the S43/I09 block is fed by
    the collisional Langevin forces in the polarized limit).
    """

    variables: tuple
    drift: np.ndarray
    diffusion: np.ndarray
    n: float
    N: float
    gamma_exc: float

    def to_real_system(self) -> LinearLangevinSystem:
        """Quadrature-doubled Langevin system for covariance work."""
        d = len(self.variables)
        return ComplexSystem(
            labels=self.variables,
            drift=self.drift.astype(complex),
            scales=np.full(d, 0.5),
            emission=self.diffusion,
        ).realize()

    def reduced_pair(self) -> "ExchangeLinearization":
        """Keep only (S43, I09): the pair that carries all the spin noise."""
        idx = [self.variables.index("S43"), self.variables.index("I09")]
        return ExchangeLinearization(
            variables=("S43", "I09"),
            drift=self.drift[np.ix_(idx, idx)],
            diffusion=self.diffusion[np.ix_(idx, idx)],
            n=self.n, N=self.N, gamma_exc=self.gamma_exc,
        )


def linearize_exchange(n: float, N: float, gamma_exc: float) -> ExchangeLinearization:
    """Drift and diffusion of the linearized exchange equations.

    Variables (S21, S32, S65, S43, I09); coefficients agree with the
    finite-difference Jacobian of :func:`me_rhs` at the polarized state.
    """
    if n <= 0 or N <= 0:
        raise ValueError("atom numbers must be positive")
    gm = N * gamma_exc
    gf = n * gamma_exc
    A = np.zeros((5, 5))
    # S21
    A[0, 0] = -gm
    # S32
    A[1, 0] = 2 * SQRT3 * gm / 9
    A[1, 1] = -7 * gm / 9
    A[1, 2] = 2 * gm / 9
    # S65
    A[2, 0] = 2 * SQRT3 * gm / 9
    A[2, 1] = 2 * gm / 9
    A[2, 2] = -7 * gm / 9
    # S43
    A[3, 1] = 2 * SQRT3 * gm / 9
    A[3, 2] = 2 * SQRT3 * gm / 9
    A[3, 3] = -gm / 3
    A[3, 4] = SQRT3 * gf / 3
    # I09
    A[4, 0] = SQRT3 * gm / 3
    A[4, 1] = 2 * gm / 3
    A[4, 2] = -gm / 3
    A[4, 3] = SQRT3 * gm / 3
    A[4, 4] = -gf
    return ExchangeLinearization(
        variables=COHERENCE_LABELS,
        drift=A,
        diffusion=diffusion_exchange(n, gm),
        n=n, N=N, gamma_exc=gamma_exc,
    )


def diffusion_exchange(n: float, gamma_m: float) -> np.ndarray:
    """Exchange Langevin diffusion coefficients over (S21, S32, S65, S43, I09).

    Entry (a, b) is <f_a f_b^dag>, i.e. the generalized-Einstein coefficient
    D_{a, conj(b)}; in the fully polarized limit the only nonzero ones are
    D_{43,34} = 2/3 gamma_m n, D_{09,34} = D_{43,90} = -2 sqrt(3)/3 gamma_m n
    and D_{09,90} = 2 gamma_m n.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    D = np.zeros((5, 5))
    i43 = COHERENCE_LABELS.index("S43")
    i09 = COHERENCE_LABELS.index("I09")
    D[i43, i43] = 2 * gamma_m * n / 3
    D[i43, i09] = D[i09, i43] = -2 * SQRT3 * gamma_m * n / 3
    D[i09, i09] = 2 * gamma_m * n
    return D


def exchange_pair_system(n: float, N: float, gamma_exc: float) -> LinearLangevinSystem:
    """Real 4-dimensional (S43, I09) quadrature system, ready for the engine."""
    return linearize_exchange(n, N, gamma_exc).reduced_pair().to_real_system()


def exchange_initial_covariance(n: float, N: float, r: float) -> CovarianceMatrix:
    """Metastable coherent spin state, ground spin squeezed along y.

    Delta I_y^2(0) = e^{-2r} N/4 with the conjugate quadrature
    anti-squeezed; Delta S_x,y^2(0) = n/4.
    """
    labels = ("S43:x", "S43:y", "I09:x", "I09:y")
    C = np.diag([n / 4, n / 4, np.exp(2 * r) * N / 4, np.exp(-2 * r) * N / 4])
    return CovarianceMatrix(labels, C)


# ---------------------------------------------------------------------------
# closed forms of the exchange-only dynamics


def exchange_steady_variances(n: float, N: float, r: float) -> tuple[float, float]:
    """Normalized steady-state variances (Delta S_y^2, Delta I_y^2).

    Long-time limit of the covariance evolution started from a squeezed
    ground spin, e^{-2r} N/4, and a coherent metastable spin.  The exchange
    drift has an exactly conserved mode, so the limit retains the initial
    squeezing:

        Delta S_y^2 = 1 - (1 - e^{-2r}) 3 n N / (3n + N)^2
        Delta I_y^2 = 1 - (1 - e^{-2r}) N^2 / (3n + N)^2
    """
    if n <= 0 or N <= 0:
        raise ValueError("atom numbers must be positive")
    dep = 1.0 - np.exp(-2 * r)
    denom = (3 * n + N) ** 2
    var_s = 1.0 - dep * 3 * n * N / denom
    var_i = 1.0 - dep * N**2 / denom
    return float(var_s), float(var_i)


def exchange_correlation_functions(n: float, N: float, r: float) -> tuple[float, float]:
    """Pair-correlation functions (C_S, C_I) of two individual spins.

    C_S = (Delta S_y^2 - 1)/(4 n) and C_I = (Delta I_y^2 - 1)/(4 N);
    exchange collisions equalize them up to the ratio C_S = 3 C_I exactly.
    Evaluated in the cancellation-free form -(1 - e^{-2r}) N/(4 (3n+N)^2)
    since the variances sit within O(n/N) of 1.
    """
    if n <= 0 or N <= 0:
        raise ValueError("atom numbers must be positive")
    dep = 1.0 - np.exp(-2 * r)
    c_i = -dep * N / (4 * (3 * n + N) ** 2)
    return 3 * c_i, c_i


def exchange_spectra(n: float, N: float, r: float, gamma_exc: float,
                     omega: np.ndarray | None = None
                     ) -> tuple[SpectrumResult, SpectrumResult]:
    """Closed-form noise spectra (S_II, S_SS) of the y spin quadratures.

    Each spectrum is a delta(omega) line whose weight remembers the initial
    squeezing plus an even Lorentzian of width ~ gamma_exc (N + 3n)/3 fed
    by the collisional Langevin forces; the r-independent smooth part obeys
    the sum rule <x^2> = (weight + integral)/(2 pi).  ``omega`` is accepted
    for convenience but the smooth parts are returned as callables.
    """
    del omega
    e2r = np.exp(-2 * r)
    denom = (N + 3 * n) ** 2
    c = 18.0
    width_sq = 2 * denom * gamma_exc**2

    w_ii = np.pi * (N * e2r + 3 * n) * N**2 / (2 * denom)
    a_ii = 9 * gamma_exc * n * N

    w_ss = 3 * np.pi * (N * e2r + 3 * n) * n**2 / (2 * denom)
    a_ss = 3 * gamma_exc * n * N

    def make(a):
        def smooth(om):
            om = np.asarray(om, dtype=float)
            return a / (c * om**2 + width_sq)
        # integral of a/(18 w^2 + width_sq) dw = a pi / sqrt(18 width_sq)
        integral = a * np.pi / np.sqrt(c * width_sq)
        return smooth, integral

    sm_ii, int_ii = make(a_ii)
    sm_ss, int_ss = make(a_ss)
    var_s, var_i = exchange_steady_variances(n, N, r)
    s_ii = SpectrumResult(float(w_ii), sm_ii, float(int_ii),
                          equal_time=float(var_i * N / 4))
    s_ss = SpectrumResult(float(w_ss), sm_ss, float(int_ss),
                          equal_time=float(var_s * n / 4))
    return s_ii, s_ss
