"""Linear Heisenberg-Langevin machinery.

Everything downstream (exchange collisions, transfer scheme, readout,
two-cell entanglement, imperfect-polarization toy model) reduces to a set
of linear Langevin equations

    dx/dt = M x + f(t) + B u(t),

with white Langevin forces <f(t) f(t')^T> = D delta(t-t') and white inputs
<u(t) u(t')^T> = Sigma_in delta(t-t').  This module provides the generic
tools on that form: steady-state covariance (Lyapunov), transient
covariance evolution, and stationary noise spectra including the
delta(omega) weights carried by conserved modes.

Physical builders assemble their equations for complex amplitudes
(coherences, cavity field); :class:`ComplexSystem` performs the doubling
to real quadratures x = s(a^dag + a), y = i s(a^dag - a) with the
appropriate scale s (1/2 for atomic coherences, 1 for field modes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "SingularSystemError",
    "IntegrationError",
    "LinearLangevinSystem",
    "CovarianceMatrix",
    "SpectrumResult",
    "ComplexSystem",
    "steady_covariance",
    "evolve_covariance",
    "noise_spectrum",
    "quadrature_variance",
    "best_quadrature_variance",
]

# Relative threshold (times the spectral radius) below which an eigenvalue
# of the drift is treated as an exact conserved mode.  Has to sit well
# above eps*rho(M), the absolute accuracy of computed eigenvalues.
_ZERO_EIG_REL = 100 * np.finfo(float).eps


class SingularSystemError(ValueError):
    """Drift matrix is not Hurwitz where a strictly stable one is required."""


class IntegrationError(RuntimeError):
    """Covariance or density-matrix integration failed to converge."""


def _as_readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LinearLangevinSystem:
    """Real-quadrature linear Langevin system.

    drift           : real (d, d) matrix M
    diffusion       : real symmetric PSD (d, d) matrix D of Langevin-force
                      correlations, <f f^T> = D delta(t - t')
    input_coupling  : real (d, k) matrix B multiplying the external inputs
    input_spectrum  : real symmetric (k, k) matrix Sigma_in of the white
                      input correlations (frequency-flat)
    """

    labels: tuple
    drift: np.ndarray
    diffusion: np.ndarray
    input_coupling: np.ndarray
    input_spectrum: np.ndarray

    def __post_init__(self):
        d = len(self.labels)
        drift = _as_readonly(self.drift)
        diff = _as_readonly(self.diffusion)
        if drift.shape != (d, d) or diff.shape != (d, d):
            raise ValueError("drift/diffusion shape does not match labels")
        B = _as_readonly(self.input_coupling)
        if B.ndim != 2 or B.shape[0] != d:
            raise ValueError("input_coupling must be (dim, k)")
        S = _as_readonly(self.input_spectrum)
        if S.shape != (B.shape[1], B.shape[1]):
            raise ValueError("input_spectrum must be (k, k)")
        if not np.allclose(diff, diff.T, atol=1e-12 * max(1.0, np.linalg.norm(diff))):
            raise ValueError("diffusion matrix must be symmetric")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.linalg.norm(S))):
            raise ValueError("input_spectrum must be symmetric")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diff)
        object.__setattr__(self, "input_coupling", B)
        object.__setattr__(self, "input_spectrum", S)
        total = self.total_diffusion
        scale = max(1.0, np.linalg.norm(total))
        if np.linalg.eigvalsh((total + total.T) / 2).min() < -1e-12 * scale:
            raise ValueError("total diffusion D + B Sigma B^T is not PSD")

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def total_diffusion(self) -> np.ndarray:
        B = self.input_coupling
        D = self.diffusion + B @ self.input_spectrum @ B.T
        return (D + D.T) / 2

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown variable label {label!r}") from None


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric second-moment matrix of operator fluctuations."""

    labels: tuple
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_readonly(self.matrix)
        d = len(self.labels)
        if m.shape != (d, d):
            raise ValueError("covariance shape does not match labels")
        scale = max(1.0, np.linalg.norm(m))
        if not np.allclose(m, m.T, atol=1e-9 * scale):
            raise ValueError("covariance matrix must be symmetric")
        object.__setattr__(self, "matrix", m)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown variable label {label!r}") from None

    def variance(self, label) -> float:
        i = self.index(label)
        return float(self.matrix[i, i])

    def covariance(self, label_a, label_b) -> float:
        return float(self.matrix[self.index(label_a), self.index(label_b)])

    def block(self, labels: Sequence) -> np.ndarray:
        idx = [self.index(l) for l in labels]
        return self.matrix[np.ix_(idx, idx)]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


@dataclass(frozen=True)
class SpectrumResult:
    """Noise spectrum split into a delta(omega) weight and a smooth part.

    ``delta_weight`` is the total integrated weight of the singular part,
    i.e. S(omega) = delta_weight * delta(omega) + smooth(omega).  The
    equal-time second moment follows from the sum rule

        <x_i x_j> = (delta_weight + integral of smooth) / (2 pi).
    """

    delta_weight: float
    smooth: Callable[[np.ndarray], np.ndarray]
    smooth_integral: float
    equal_time: float

    def sum_rule_value(self) -> float:
        return (self.delta_weight + self.smooth_integral) / (2 * np.pi)


# ---------------------------------------------------------------------------
# complex -> real quadrature doubling


@dataclass(frozen=True)
class ComplexSystem:
    """Closed linear system for complex amplitudes and its quadrature form.

    The equations are d a_i/dt = sum_j K_ij a_j + sum_l G_il u_l + f_i with
    no coupling to the conjugate amplitudes.  Noise is specified by the two
    real symmetric rate matrices

        emission[i, j]   = <f_i(t) f_j^dag(t')> / delta(t - t')
        absorption[i, j] = <f_i^dag(t) f_j(t')> / delta(t - t')

    (anomalous <f f> correlations vanish for every process modelled here).
    ``scales`` fixes the quadrature convention per variable, x = s(a^dag + a),
    y = i s(a^dag - a): s = 1/2 for atomic coherences (coherent-state
    variance n/4), s = 1 for field modes (vacuum variance 1).
    """

    labels: tuple
    drift: np.ndarray               # complex (d, d)
    scales: np.ndarray              # (d,)
    emission: np.ndarray            # real symmetric (d, d)
    absorption: np.ndarray | None = None
    input_labels: tuple = ()
    input_coupling: np.ndarray | None = None   # complex (d, k)
    input_scales: np.ndarray | None = None

    def __post_init__(self):
        d = len(self.labels)
        drift = np.array(self.drift, dtype=complex)
        if drift.shape != (d, d):
            raise ValueError("drift shape does not match labels")
        emission = np.array(self.emission, dtype=float)
        absorption = (np.zeros((d, d)) if self.absorption is None
                      else np.array(self.absorption, dtype=float))
        for name, m in (("emission", emission), ("absorption", absorption)):
            if m.shape != (d, d) or not np.allclose(m, m.T):
                raise ValueError(f"{name} noise matrix must be real symmetric (d, d)")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(self, "absorption", absorption)
        object.__setattr__(self, "scales", np.array(self.scales, dtype=float))

    def realize(self, input_spectrum: np.ndarray | None = None) -> LinearLangevinSystem:
        """Double to real quadratures, interleaved as (x_1, y_1, x_2, y_2, ...).

        ``input_spectrum`` is the real (2k, 2k) correlation matrix of the
        input quadratures (X_1, Y_1, ...); squeezed vacuum on a single input
        is diag(e^{-2r}, e^{+2r}).
        """
        d = len(self.labels)
        s = self.scales
        labels = []
        for lab in self.labels:
            labels += [f"{lab}:x", f"{lab}:y"]

        M = np.zeros((2 * d, 2 * d))
        re, im = self.drift.real, self.drift.imag
        ratio = s[:, None] / s[None, :]
        M[0::2, 0::2] = ratio * re
        M[0::2, 1::2] = -ratio * im
        M[1::2, 0::2] = ratio * im
        M[1::2, 1::2] = ratio * re

        # <f_x f_x> = <f_y f_y> = s_i s_j (emission + absorption)_ij; the
        # symmetrized x-y cross terms vanish for real symmetric rate matrices.
        pair = s[:, None] * s[None, :] * (self.emission + self.absorption)
        D = np.zeros((2 * d, 2 * d))
        D[0::2, 0::2] = pair
        D[1::2, 1::2] = pair

        k = len(self.input_labels)
        B = np.zeros((2 * d, 2 * k))
        if k:
            G = np.array(self.input_coupling, dtype=complex)
            if G.shape != (d, k):
                raise ValueError("input_coupling must be (d, k)")
            t = (np.ones(k) if self.input_scales is None
                 else np.array(self.input_scales, dtype=float))
            r_in = s[:, None] / t[None, :]
            B[0::2, 0::2] = r_in * G.real
            B[0::2, 1::2] = -r_in * G.imag
            B[1::2, 0::2] = r_in * G.imag
            B[1::2, 1::2] = r_in * G.real
        if input_spectrum is None:
            input_spectrum = np.eye(2 * k)
        return LinearLangevinSystem(tuple(labels), M, D, B, np.asarray(input_spectrum, float))


# ---------------------------------------------------------------------------
# steady state


def _hurwitz_check(drift: np.ndarray):
    eigs = np.linalg.eigvals(drift)
    scale = max(np.abs(eigs).max(), np.finfo(float).tiny)
    worst = eigs[np.argmax(eigs.real)]
    if worst.real > -_ZERO_EIG_REL * scale:
        raise SingularSystemError(
            f"drift eigenvalue {worst:.6g} has non-negative real part; "
            "steady covariance requires a strictly Hurwitz drift"
        )
    return eigs


def steady_covariance(sys: LinearLangevinSystem) -> CovarianceMatrix:
    """Stationary covariance: solve M C + C M^T + D_total = 0.

    Dense vectorized solve with iterative refinement; the residual is
    required to come out below 1e-10 * ||D_total||.
    """
    _hurwitz_check(sys.drift)
    M = sys.drift
    D = sys.total_diffusion
    d = sys.dim
    eye = np.eye(d)
    A = np.kron(M, eye) + np.kron(eye, M)
    lu, piv = scipy.linalg.lu_factor(A)
    C = scipy.linalg.lu_solve((lu, piv), -D.ravel()).reshape(d, d)
    C = (C + C.T) / 2
    dnorm = max(np.linalg.norm(D), np.finfo(float).tiny)
    for _ in range(4):
        R = M @ C + C @ M.T + D
        if np.linalg.norm(R) <= 1e-13 * dnorm:
            break
        dC = scipy.linalg.lu_solve((lu, piv), -R.ravel()).reshape(d, d)
        C = C + (dC + dC.T) / 2
    R = M @ C + C @ M.T + D
    if np.linalg.norm(R) > 1e-10 * dnorm:
        raise IntegrationError(
            f"Lyapunov residual {np.linalg.norm(R):.3e} exceeds 1e-10 * ||D|| "
            f"= {1e-10 * dnorm:.3e}"
        )
    return CovarianceMatrix(sys.labels, C)


# ---------------------------------------------------------------------------
# transient covariance


def _phi(s: np.ndarray, t: float) -> np.ndarray:
    """(exp(s t) - 1)/s with the s -> 0 limit handled."""
    s = np.asarray(s, dtype=complex)
    out = np.empty_like(s)
    small = np.abs(s) * abs(t) < 1e-10
    out[small] = t * (1 + s[small] * t / 2)
    out[~small] = (np.exp(s[~small] * t) - 1.0) / s[~small]
    return out

def _spectral(drift: np.ndarray):
    lam, V = np.linalg.eig(drift)
    cond = np.linalg.cond(V)
    W = np.linalg.inv(V)
    return lam, V, W, cond


def evolve_covariance(sys: LinearLangevinSystem, C0: CovarianceMatrix,
                      t_final: float, tol: float = 1e-9) -> CovarianceMatrix:
    """Integrate dC/dt = M C + C M^T + D_total from C0 up to t_final.

    Uses the exact spectral propagator when the drift is cleanly
    diagonalizable (the dynamics here are extremely stiff: exchange rates
    and optical rates differ by many decades), falling back to an implicit
    ODE solver otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = sys.drift
    D = sys.total_diffusion
    C0m = C0.matrix if isinstance(C0, CovarianceMatrix) else np.asarray(C0, float)
    lam, V, W, cond = _spectral(M)
    if cond < 1e9:
        Ct = V @ ((W @ C0m @ W.T) * np.exp((lam[:, None] + lam[None, :]) * t_final)
                  + (W @ D @ W.T) * _phi(lam[:, None] + lam[None, :], t_final)) @ V.T
        C = np.real(Ct)
        return CovarianceMatrix(sys.labels, (C + C.T) / 2)

    from scipy.integrate import solve_ivp

    def rhs(_, y):
        C = y.reshape(M.shape)
        dC = M @ C + C @ M.T + D
        return ((dC + dC.T) / 2).ravel()

    sol = solve_ivp(rhs, (0.0, t_final), C0m.ravel(), method="Radau",
                    rtol=tol, atol=tol * max(1.0, np.abs(C0m).max()))
    if not sol.success:
        raise IntegrationError(
            "covariance integration failed (stiff system); retry with a "
            f"smaller step / tighter tolerance: {sol.message}"
        )
    C = sol.y[:, -1].reshape(M.shape)
    return CovarianceMatrix(sys.labels, (C + C.T) / 2)


# ---------------------------------------------------------------------------
# noise spectra


def noise_spectrum(sys: LinearLangevinSystem, C0: CovarianceMatrix,
                   i, j, omega_grid: np.ndarray | None = None) -> SpectrumResult:
    """Stationary two-sided noise spectrum of (x_i, x_j).

    The drift may carry an exact conserved subspace (null space); the
    projection of C0 onto it sets the delta(omega) weight, while the smooth
    part lives on the stable subspace and is independent of the initial
    condition.  Any eigenvalue with positive real part is an error.
    """
    ii = sys.index(i) if not isinstance(i, (int, np.integer)) else int(i)
    jj = sys.index(j) if not isinstance(j, (int, np.integer)) else int(j)
    M = sys.drift
    D = sys.total_diffusion
    C0m = C0.matrix if isinstance(C0, CovarianceMatrix) else np.asarray(C0, float)

    lam, V, W, cond = _spectral(M)
    if cond > 1e12:
        raise SingularSystemError("drift is too close to non-diagonalizable")
    scale = max(np.abs(lam).max(), np.finfo(float).tiny)
    zero = np.abs(lam) <= _ZERO_EIG_REL * scale
    if np.any(lam.real > _ZERO_EIG_REL * scale):
        worst = lam[np.argmax(lam.real)]
        raise SingularSystemError(
            f"drift eigenvalue {worst:.6g} has positive real part"
        )
    stable = ~zero

    P0 = np.real(V[:, zero] @ W[zero, :]) if zero.any() else np.zeros_like(M)
    C_delta = P0 @ C0m @ P0.T

    # A noise-driven conserved mode would diffuse without bound and admit
    # no stationary spectrum.
    if zero.any():
        leak = np.linalg.norm(P0 @ D @ P0.T)
        if leak > 1e-8 * max(np.linalg.norm(D), np.finfo(float).tiny):
            raise SingularSystemError(
                "conserved drift mode is driven by noise; no stationary spectrum"
            )

    Dt = W @ D @ W.T
    denom = lam[:, None] + lam[None, :]
    Cs_t = np.zeros_like(Dt)
    mask = np.outer(stable, stable)
    Cs_t[mask] = -Dt[mask] / denom[mask]
    C_stable = np.real(V @ Cs_t @ V.T)
    C_stable = (C_stable + C_stable.T) / 2

    # residues of C_stable e^{M^T tau} (tau > 0) and its mirror
    idx = np.flatnonzero(stable)
    a_res = []
    b_res = []
    for k in idx:
        vk = V[:, k]
        wk = W[k, :]
        a_res.append((C_stable @ wk)[ii] * vk[jj])
        b_res.append(vk[ii] * (wk @ C_stable)[jj])
    a_res = np.array(a_res)
    b_res = np.array(b_res)
    lam_s = lam[idx]

    def smooth(omega):
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        val = np.zeros_like(om, dtype=complex)
        for ak, bk, lk in zip(a_res, b_res, lam_s):
            val += ak / (1j * om - lk) + bk / (-1j * om - lk)
        out = np.real(val)
        return out if np.ndim(omega) else float(out[0])

    delta_weight = float(2 * np.pi * C_delta[ii, jj])
    smooth_integral = float(2 * np.pi * C_stable[ii, jj])
    equal_time = float(C_delta[ii, jj] + C_stable[ii, jj])
    return SpectrumResult(delta_weight, smooth, smooth_integral, equal_time)


# ---------------------------------------------------------------------------
# quadrature extraction


def quadrature_variance(C: CovarianceMatrix, label, normalization: float) -> float:
    """Variance of one quadrature divided by its reference (n/4, N/4 or 1)."""
    return C.variance(label) / normalization


def best_quadrature_variance(C: CovarianceMatrix, x_label, y_label,
                             normalization: float) -> tuple[float, float]:
    """Minimize the variance of cos(theta) x + sin(theta) y over theta.

    Returns (theta, variance/normalization); the minimum equals the smaller
    eigenvalue of the (x, y) covariance sub-block.
    """
    block = C.block([x_label, y_label])
    vals, vecs = np.linalg.eigh(block)
    vmin = vals[0]
    vec = vecs[:, 0]
    theta = float(np.arctan2(vec[1], vec[0])) % np.pi
    return theta, float(vmin) / normalization
