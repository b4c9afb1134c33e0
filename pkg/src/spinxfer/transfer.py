"""Cavity-mediated squeezing transfer to the ground-state nuclear spin.

A coherent control field (Rabi frequency Omega, pi-polarized) and a
squeezed vacuum cavity mode (coupling g_A, sigma- polarized) drive Raman
transitions on the 1.08 um line from the F=3/2 metastable level toward
the highest 2^3P state, building up the metastable coherence S43;
metastability-exchange collisions then pass the correlations on to the
ground-state coherence I09.

The module assembles the closed linear system of the eleven coupled
amplitudes (or the reduced four that actually carry noise), evaluates the
adiabatic-elimination closed forms for the steady-state variances, the
transfer efficiency and the detuning-mismatch penalty, and maps the
two-photon resonance condition onto the static magnetic field, including
averaging over field inhomogeneity across the cell.

Rate conventions: all frequencies/detunings are angular (rad/s); the
pumping parameter Gamma = 3 gamma Omega^2 (1 + C)/Delta^2 measures the
optical drive against the exchange rate gamma_m = N gamma_exc.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .langevin import (
    ComplexSystem,
    CovarianceMatrix,
    LinearLangevinSystem,
    best_quadrature_variance,
    steady_covariance,
)

SQRT3 = np.sqrt(3.0)

#: gyromagnetic ratios over h, in Hz per gauss
MU_I_HZ_PER_G = 3.24e3    # ground state (pure nuclear spin)
MU_S_HZ_PER_G = 1.87e6    # metastable F=3/2 manifold

FULL_LABELS = ("S21", "S81", "S32", "S72", "S43", "S65",
               "S47", "S38", "S78", "I09", "A")
REDUCED_LABELS = ("S43", "S47", "I09", "A")


def cooperativity(g_A: float, n: float, kappa: float, gamma: float) -> float:
    """Atom-cavity cooperativity C = g_A^2 n / (kappa gamma)."""
    if kappa <= 0 or gamma <= 0:
        raise ValueError("kappa and gamma must be positive")
    return g_A**2 * n / (kappa * gamma)


@dataclass(frozen=True)
class TransferParams:
    """All rates, detunings, couplings and populations of the transfer scheme.

    Angular units (rad/s) throughout.  ``delta_34`` etc. are the two-photon
    detunings of the individual coherences; the effective metastable
    detuning including the control light shift, delta_tilde = delta_34 +
    Omega^2/Delta, is exposed as a property and never stored separately.
    """

    gamma: float                 # optical coherence decay
    kappa: float                 # cavity decay
    Delta: float                 # one-photon detuning of the 4-7 transition
    Omega: float                 # control Rabi frequency (real)
    g_A: float                   # cavity coupling on 4-7
    g_B: float                   # cavity coupling on 3-8
    n: float                     # metastable atoms
    N: float                     # ground-state atoms
    gamma_exc: float             # per-atom exchange rate
    r: float                     # input squeezing parameter
    gamma_0: float = 0.0         # extra metastable relaxation
    Delta_C: float | None = None  # cavity detuning; None -> C kappa gamma / Delta
    delta_34: float = 0.0
    delta_90: float = 0.0
    delta_12: float = 0.0
    delta_23: float = 0.0
    delta_56: float = 0.0
    delta_87: float = 0.0
    Delta_18: float | None = None
    Delta_27: float | None = None
    Delta_38: float | None = None
    delta_las: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0 or self.kappa <= 0:
            raise ValueError("gamma and kappa must be positive")
        if self.n <= 0 or self.N <= 0:
            raise ValueError("atom numbers must be positive")
        if self.n / self.N > 1e-2:
            warnings.warn("n/N > 1e-2: the fully polarized linearization "
                          "assumes a dilute metastable population",
                          stacklevel=2)

    # -- derived rates -----------------------------------------------------
    @property
    def gamma_m(self) -> float:
        return self.N * self.gamma_exc

    @property
    def gamma_f(self) -> float:
        return self.n * self.gamma_exc

    @property
    def C(self) -> float:
        return cooperativity(self.g_A, self.n, self.kappa, self.gamma)

    @property
    def Gamma(self) -> float:
        return pumping_parameter(self)

    @property
    def light_shift(self) -> float:
        return self.Omega**2 / self.Delta

    @property
    def delta_tilde(self) -> float:
        return self.delta_34 + self.light_shift

    @property
    def delta_I(self) -> float:
        return self.delta_90

    @property
    def squeezing_in(self) -> float:
        return float(np.exp(-2 * self.r))

    @property
    def cavity_detuning(self) -> float:
        if self.Delta_C is not None:
            return self.Delta_C
        return self.C * self.kappa * self.gamma / self.Delta

    def one_photon(self, which: str) -> float:
        val = {"18": self.Delta_18, "27": self.Delta_27, "38": self.Delta_38}[which]
        return self.Delta if val is None else val

    # -- construction ------------------------------------------------------
    @classmethod
    def at_operating_point(cls, *, Gamma_over_gamma_m: float = 0.1,
                           squeezing_in: float = 0.5,
                           cooperativity: float = 500.0,
                           kappa_over_gamma: float = 100.0,
                           Delta_over_gamma: float = -2000.0,
                           gamma: float = 2.0e7,
                           gamma_m: float = 5.0e6,
                           n_over_N: float = 1e-6,
                           n: float = 1.0,
                           gamma_0: float = 0.0,
                           delta_tilde: float = 0.0,
                           delta_I: float = 0.0) -> "TransferParams":
        """Build a parameter set from the dimensionless operating knobs.

        Omega is chosen to hit the requested Gamma/gamma_m, g_A to hit the
        requested cooperativity, and delta_34 is set so that the effective
        two-photon detuning equals ``delta_tilde`` (0 = Raman resonance,
        the control light shift compensated).
        """
        N = n / n_over_N
        gamma_exc = gamma_m / N
        kappa = kappa_over_gamma * gamma
        Delta = Delta_over_gamma * gamma
        C = cooperativity
        g_A = np.sqrt(C * kappa * gamma / n)
        Gamma = Gamma_over_gamma_m * gamma_m
        Omega = np.sqrt(Gamma * Delta**2 / (3 * gamma * (1 + C)))
        r = -0.5 * np.log(squeezing_in)
        delta_34 = delta_tilde - Omega**2 / Delta
        return cls(gamma=gamma, kappa=kappa, Delta=Delta, Omega=Omega,
                   g_A=g_A, g_B=g_A, n=n, N=N, gamma_exc=gamma_exc, r=r,
                   gamma_0=gamma_0, delta_34=delta_34, delta_90=delta_I,
                   delta_12=delta_34, delta_23=delta_34, delta_56=delta_34)

    def with_detunings(self, delta_tilde: float, delta_I: float) -> "TransferParams":
        """Same operating point with shifted two-photon detunings.

        The whole metastable Zeeman ladder moves rigidly with delta_34.
        """
        d34 = delta_tilde - self.light_shift
        return dataclasses.replace(self, delta_34=d34, delta_12=d34,
                                   delta_23=d34, delta_56=d34, delta_90=delta_I)


def pumping_parameter(params: TransferParams) -> float:
    """Pumping parameter Gamma = 3 gamma Omega^2 (1 + C) / Delta^2."""
    if params.Delta == 0:
        raise ValueError("one-photon detuning Delta must be nonzero")
    return 3 * params.gamma * params.Omega**2 * (1 + params.C) / params.Delta**2


# ---------------------------------------------------------------------------
# system builders


def _langevin_noise(params: TransferParams, labels, include_gamma_0: bool
                    ) -> np.ndarray:
    """Langevin emission coefficients <f_a f_b^dag> in the polarized limit.

    Exchange feeds the (S43, I09) block, spontaneous emission the optical
    coherence S47.  Metastable wall relaxation gamma_0 adds 2 gamma_0 n on
    S43 only: of the metastable coherences, only S43 touches the populated
    level 4, and without this noise the extra damping would fake squeezing.
    """
    D = np.zeros((len(labels), len(labels)))
    i43, i09 = labels.index("S43"), labels.index("I09")
    gm, n = params.gamma_m, params.n
    D[i43, i43] = 2 * gm * n / 3
    D[i43, i09] = D[i09, i43] = -2 * SQRT3 * gm * n / 3
    D[i09, i09] = 2 * gm * n
    i47 = labels.index("S47")
    D[i47, i47] = 2 * params.gamma * n
    if include_gamma_0:
        D[i43, i43] += 2 * params.gamma_0 * n
    return D


def reduced_amplitude_system(params: TransferParams) -> ComplexSystem:
    """The four noise-carrying amplitudes (S43, S47, I09, A)."""
    p = params
    gm, gf = p.gamma_m, p.gamma_f
    K = np.zeros((4, 4), dtype=complex)
    i43, i47, i09, iA = range(4)
    K[i43, i43] = -gm / 3 + 1j * p.delta_34
    K[i43, i09] = SQRT3 * gf / 3
    K[i43, i47] = -1j * p.Omega
    K[i47, i47] = -(p.gamma + 1j * p.Delta)
    K[i47, iA] = -1j * p.g_A * p.n
    K[i47, i43] = -1j * p.Omega
    K[i09, i09] = -gf + 1j * p.delta_90
    K[i09, i43] = SQRT3 * gm / 3
    K[iA, iA] = -(p.kappa + 1j * p.cavity_detuning)
    K[iA, i47] = -1j * p.g_A
    G = np.zeros((4, 1), dtype=complex)
    G[iA, 0] = np.sqrt(2 * p.kappa)
    return ComplexSystem(
        labels=REDUCED_LABELS,
        drift=K,
        scales=np.array([0.5, 0.5, 0.5, 1.0]),
        emission=_exchange_noise(p, list(REDUCED_LABELS)),
        input_labels=("Ain",),
        input_coupling=G,
    )


def full_amplitude_system(params: TransferParams) -> ComplexSystem:
    """All eleven coupled amplitudes of the transfer scheme.

    The seven extra metastable/optical coherences close among themselves
    and carry no Langevin noise in the polarized limit; gamma_0 adds to
    the decay of every purely metastable coherence.
    """
    p = params
    gm, gf, g0 = p.gamma_m, p.gamma_f, p.gamma_0
    W = p.Omega
    lab = FULL_LABELS
    ix = {l: k for k, l in enumerate(lab)}
    K = np.zeros((len(lab), len(lab)), dtype=complex)

    def put(row, col, val):
        K[ix[row], ix[col]] += val

    put("S21", "S21", -(gm + g0) + 1j * p.delta_12)
    put("S21", "S81", 1j * W)

    put("S81", "S81", -(p.gamma - 1j * (p.one_photon("18") - 2 * p.delta_las)))
    put("S81", "S21", 1j * W)

    put("S32", "S32", -(7 / 9) * gm - g0 + 1j * p.delta_23)
    put("S32", "S21", (2 / 9) * gm * SQRT3)
    put("S32", "S65", (2 / 9) * gm)
    put("S32", "S38", -1j * W)
    put("S32", "S72", 1j * W)

    put("S72", "S72", -(p.gamma - 1j * (p.one_photon("27") - 2 * p.delta_las)))
    put("S72", "S78", -1j * W)
    put("S72", "S32", 1j * W)

    put("S43", "S43", -gm / 3 - g0 + 1j * p.delta_34)
    put("S43", "S32", (2 * SQRT3 / 9) * gm)
    put("S43", "S65", (2 * SQRT3 / 9) * gm)
    put("S43", "I09", SQRT3 * gf / 3)
    put("S43", "S47", -1j * W)

    put("S65", "S65", -(7 / 9) * gm - g0 + 1j * p.delta_56)
    put("S65", "S21", (2 * SQRT3 / 9) * gm)
    put("S65", "S32", (2 / 9) * gm)

    put("S47", "S47", -(p.gamma + 1j * p.Delta))
    put("S47", "A", -1j * p.g_A * p.n)
    put("S47", "S43", -1j * W)

    put("S38", "S38", -(p.gamma + 1j * p.one_photon("38")))
    put("S38", "S32", -1j * W)
    put("S38", "S78", 1j * W)

    put("S78", "S78", -(2 * p.gamma - 1j * p.delta_87))
    put("S78", "S72", -1j * W)
    put("S78", "S38", 1j * W)

    put("I09", "I09", -gf + 1j * p.delta_90)
    put("I09", "S32", (2 / 3) * gm)
    put("I09", "S65", -(1 / 3) * gm)
    put("I09", "S43", SQRT3 * gm / 3)
    put("I09", "S21", SQRT3 * gm / 3)

    put("A", "A", -(p.kappa + 1j * p.cavity_detuning))
    put("A", "S38", -1j * p.g_B)
    put("A", "S47", -1j * p.g_A)

    G = np.zeros((len(lab), 1), dtype=complex)
    G[ix["A"], 0] = np.sqrt(2 * p.kappa)
    scales = np.full(len(lab), 0.5)
    scales[ix["A"]] = 1.0
    return ComplexSystem(
        labels=lab,
        drift=K,
        scales=scales,
        emission=_exchange_noise(p, list(lab)),
        input_labels=("Ain",),
        input_coupling=G,
    )


def squeezed_input_spectrum(r: float) -> np.ndarray:
    """White squeezed vacuum: Delta X_in^2 = e^{-2r}, Delta Y_in^2 = e^{+2r}."""
    return np.diag([np.exp(-2 * r), np.exp(2 * r)])


def build_reduced_system(params: TransferParams) -> LinearLangevinSystem:
    return reduced_amplitude_system(params).realize(squeezed_input_spectrum(params.r))


def build_full_system(params: TransferParams) -> LinearLangevinSystem:
    return full_amplitude_system(params).realize(squeezed_input_spectrum(params.r))


class TransferVariances(NamedTuple):
    norm_I_y: float
    norm_S_y: float
    norm_I_x: float
    norm_S_x: float


def steady_transfer_variances(params: TransferParams, *, full: bool = False
                              ) -> TransferVariances:
    """Normalized steady-state spin variances of the driven system."""
    sys = build_full_system(params) if full else build_reduced_system(params)
    C = steady_covariance(sys)
    n4, N4 = params.n / 4, params.N / 4
    return TransferVariances(
        norm_I_y=C.variance("I09:y") / N4,
        norm_S_y=C.variance("S43:y") / n4,
        norm_I_x=C.variance("I09:x") / N4,
        norm_S_x=C.variance("S43:x") / n4,
    )


def numeric_best_ground_variance(params: TransferParams, *, full: bool = True
                                 ) -> float:
    """Best normalized ground-spin variance, minimized over the quadrature angle."""
    sys = build_full_system(params) if full else build_reduced_system(params)
    C = steady_covariance(sys)
    _, best = best_quadrature_variance(C, "I09:x", "I09:y", params.N / 4)
    return best


# ---------------------------------------------------------------------------
# adiabatic-elimination closed forms


def analytic_variances(Gamma: float, gamma_m: float, C: float, r: float
                       ) -> tuple[float, float]:
    """Resonant steady variances (norm Delta I_y^2, norm Delta S_y^2).

    Valid after adiabatic elimination of the optical coherence and cavity
    (gamma, kappa >> gamma_m, Gamma >> gamma_f, two-photon resonance):

        Delta I_y^2 / (N/4) = 1 - gamma_m/(Gamma+gamma_m) * C/(C+1) * (1 - e^{-2r})
        Delta S_y^2 / (n/4) = 1 - Gamma/(Gamma+gamma_m) * C/(C+1) * (1 - e^{-2r})

    Gamma/gamma_m is the knob that shares the input squeezing between the
    ground and metastable spins.
    """
    if Gamma < 0 or gamma_m < 0 or Gamma + gamma_m == 0:
        raise ValueError("need Gamma, gamma_m >= 0 and not both zero")
    dep = (1 - np.exp(-2 * r)) * C / (C + 1)
    norm_i = 1 - gamma_m / (Gamma + gamma_m) * dep
    norm_s = 1 - Gamma / (Gamma + gamma_m) * dep
    return float(norm_i), float(norm_s)


class AdiabaticRates(NamedTuple):
    Gamma_F: float   # ground-coherence relaxation rate (memory write/read rate)
    b: float         # residual light shift brought back to the ground state
    m: float         # squeezed/anti-squeezed mixing weight, 0 on resonance


def adiabatic_rates(params: TransferParams) -> AdiabaticRates:
    """Effective ground-state rate Gamma_F, light shift b and mixing m.

    Obtained by adiabatically eliminating the metastable coherence:

        Gamma_F = gamma_f [Gamma(gamma_m+Gamma) + (3 dt)^2]
                          / [(gamma_m+Gamma)^2 + (3 dt)^2]
        b = -(gamma_f 3 dt gamma_m / [(gamma_m+Gamma)^2 + (3 dt)^2] + delta_I)
        m = 1 - 1/sqrt(1 + (b/Gamma_F)^2)

    with dt the effective metastable two-photon detuning.
    """
    Gamma, gm, gf = params.Gamma, params.gamma_m, params.gamma_f
    if Gamma + gm <= 0:
        raise ValueError("gamma_m + Gamma must be positive")
    dt3 = 3 * params.delta_tilde
    denom = (gm + Gamma) ** 2 + dt3**2
    Gamma_F = gf * (Gamma * (gm + Gamma) + dt3**2) / denom
    b = -(gf * dt3 * gm / denom + params.delta_I)
    m = 1 - 1 / np.sqrt(1 + (b / Gamma_F) ** 2) if Gamma_F > 0 else 1.0
    return AdiabaticRates(float(Gamma_F), float(b), float(m))


def best_variance_mismatch(params: TransferParams) -> float:
    """Best normalized ground-spin variance with imperfect resonance.

    Reduces to the resonant closed form when delta_tilde = delta_I = 0; a
    detuning mismatch mixes in the anti-squeezed input quadrature through
    m sinh(2r).  Gamma = 0 with a mismatch transfers nothing (variance 1).
    """
    Gamma, gm = params.Gamma, params.gamma_m
    if Gamma == 0:
        return 1.0
    _, _, m = adiabatic_rates(params)
    dt3 = 3 * params.delta_tilde
    r = params.r
    mix = np.exp(-2 * r) + m * np.sinh(2 * r)
    C = params.C
    val = 1 - gm / (Gamma + gm + dt3**2 / Gamma) * C / (C + 1) * (1 - mix)
    return float(val)


def transfer_efficiency(norm_var_I: float, r: float) -> float:
    """Fraction of the input squeezing found on the ground-state spin."""
    if r == 0:
        raise ValueError("efficiency is undefined for a coherent input (r = 0)")
    return float((1 - norm_var_I) / (1 - np.exp(-2 * r)))


# ---------------------------------------------------------------------------
# magnetic field calibration


@dataclass(frozen=True)
class FieldCalibration:
    """Static field satisfying the two-photon resonance conditions.

    The control light shift Omega^2/Delta has to bridge the difference of
    the metastable and ground Larmor frequencies; with mu_S >> mu_I this
    pins B to |Omega^2/Delta| / (2 pi (mu_S - mu_I)/h).
    """

    B: float                                  # gauss
    DeltaB_over_B: float = 0.0
    mu_I_over_h: float = MU_I_HZ_PER_G
    mu_S_over_h: float = MU_S_HZ_PER_G

    @property
    def omega_I_Hz(self) -> float:
        return self.mu_I_over_h * self.B

    @property
    def omega_S_Hz(self) -> float:
        return self.mu_S_over_h * self.B

    @property
    def omega_I(self) -> float:
        """Ground-state Larmor angular frequency (rad/s)."""
        return 2 * np.pi * self.omega_I_Hz


def resonance_field(params: TransferParams, mode: str = "exact") -> FieldCalibration:
    """Magnetic field that satisfies both two-photon resonance conditions.

    mode="exact" balances Omega^2/Delta (with the full 1+C factor) against
    the Larmor mismatch (mu_S - mu_I) B; mode="approx" uses the large-C
    shortcut Omega^2/Delta ~= Gamma Delta/(3 gamma C) ~= mu_S B / hbar.
    """
    p = params
    if mode == "exact":
        shift = p.light_shift
        mu = MU_S_HZ_PER_G - MU_I_HZ_PER_G
    elif mode == "approx":
        shift = p.Gamma * p.Delta / (3 * p.gamma * p.C)
        mu = MU_S_HZ_PER_G
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if shift > 0:
        raise ValueError(
            "light shift Omega^2/Delta must be negative (blue control detuning) "
            "to compensate the Larmor mismatch at positive field"
        )
    B = -shift / (2 * np.pi * mu)
    return FieldCalibration(B=float(B))


def inhomogeneity_average(params: TransferParams, DeltaB_over_B: float,
                          samples: int = 41, distribution: str = "uniform"
                          ) -> float:
    """Best ground-spin variance averaged over field inhomogeneity.

    The cell samples fields in [B - DeltaB, B + DeltaB] around the resonant
    value; each offset detunes the metastable and ground coherences by
    their respective Larmor shifts and the local best variance is averaged.
    ``distribution`` selects uniform or gaussian-truncated (sigma = DeltaB/2)
    weights over the sampled offsets.
    """
    if samples < 3:
        raise ValueError("need at least 3 field samples")
    if DeltaB_over_B == 0:
        return best_variance_mismatch(params)
    B = resonance_field(params).B
    dB = np.linspace(-1.0, 1.0, samples) * DeltaB_over_B * B
    if distribution == "uniform":
        w = np.ones(samples)
    elif distribution == "gaussian-truncated":
        sigma = DeltaB_over_B * B / 2
        w = np.exp(-0.5 * (dB / sigma) ** 2)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    w = w / w.sum()
    vals = np.empty(samples)
    for k, off in enumerate(dB):
        pk = params.with_detunings(
            delta_tilde=params.delta_tilde + 2 * np.pi * MU_S_HZ_PER_G * off,
            delta_I=params.delta_I + 2 * np.pi * MU_I_HZ_PER_G * off,
        )
        vals[k] = best_variance_mismatch(pk)
    return float(w @ vals)
