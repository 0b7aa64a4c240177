"""Flux-pumped parametric amplifier: tuning curve, reflection, gain, noise PSD.

All frequencies are angular (rad/s) unless a name says otherwise.  The gain
profile is the phenomenological Lorentzian G(delta) = 1 + (G0 - 1) /
(1 + (2 delta / B)^2) tied to the linewidth through the gain-bandwidth
relation sqrt(G0) * B = c_gb * kappa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    FitDegenerateError,
    FluxDivergenceError,
    NoConvergenceError,
    UnstableRegimeError,
)

TWO_PI = 2.0 * np.pi

# Default gain-bandwidth constant in units of kappa.  Calibrated (see
# scripts/calibrate_defaults.py) so that the default filter applied to the
# default operating profile yields a predicted squeezing parameter of 1.75;
# with the 5 MHz sideband offset the filtered gain is capped at
# 1 + (c_gb * kappa / (2 offset))^2, so c_gb = 1 cannot reach that target.
GAIN_BANDWIDTH_CONST = 1.1481518224756206


@dataclass(frozen=True)
class DeviceParams:
    """Static amplifier parameters.

    omega_r_max: zero-flux resonance (rad/s); e_j_max: Josephson energy over h
    (Hz), carried as metadata; kerr_k: Kerr shift per photon (rad/s, < 0);
    kappa: external coupling rate; gamma_i: internal loss rate; participation:
    SQUID inductance participation at zero flux (0 < p < 1);
    gain_bandwidth_const: c_gb in sqrt(G0) * B = c_gb * kappa.
    """

    omega_r_max: float = TWO_PI * 6.9e9
    e_j_max: float = 6.1e12
    kerr_k: float = TWO_PI * -1932.0
    kappa: float = TWO_PI * 25.0e6
    gamma_i: float = TWO_PI * 2.0e6
    participation: float = 0.03
    gain_bandwidth_const: float = GAIN_BANDWIDTH_CONST

    def __post_init__(self) -> None:
        if self.omega_r_max <= 0:
            raise ValueError("omega_r_max must be > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.gamma_i < 0:
            raise ValueError("gamma_i must be >= 0")
        if self.kerr_k >= 0:
            raise ValueError("kerr_k must be < 0")
        if not 0.0 < self.participation < 1.0:
            raise ValueError("participation must lie in (0, 1)")
        if self.gain_bandwidth_const <= 0:
            raise ValueError("gain_bandwidth_const must be > 0")


@dataclass(frozen=True)
class PumpConfig:
    """Pump drive point and the measured critical point (rad/s, dBm)."""

    omega_p: float = TWO_PI * 6.8834e9
    power_dbm: float = -80.8
    critical_omega_p: float = TWO_PI * 6.882e9
    critical_power_dbm: float = -80.6


@dataclass(frozen=True)
class GainAnchor:
    """Configured anchor for the gain map: G0 observed at one pump setting."""

    omega_p: float = TWO_PI * 6.8834e9
    power_dbm: float = -80.8
    g0: float = 100.0
    freq_scale: float = TWO_PI * 2.0e6

    def __post_init__(self) -> None:
        if self.g0 < 1:
            raise ValueError("anchor g0 must be >= 1")
        if self.freq_scale <= 0:
            raise ValueError("freq_scale must be > 0")


DEFAULT_DEVICE = DeviceParams()
DEFAULT_PUMP = PumpConfig()
DEFAULT_GAIN_ANCHOR = GainAnchor()


@dataclass(frozen=True)
class GainProfile:
    """Lorentzian gain profile: peak g0 (power gain), full bandwidth, pump."""

    g0: float
    bandwidth: float
    omega_p: float

    def __post_init__(self) -> None:
        if self.g0 < 1:
            raise ValueError("g0 must be >= 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")


def resonance_frequency(phi, params: DeviceParams):
    """Flux tuning curve omega_r(phi), phi in flux quanta.

    omega_r(phi) = omega0 / (1 + p0 / |cos(pi phi)|) with omega0 and p0 fixed
    by omega_r(0) = omega_r_max and participation = p0 / (1 + p0).  Even and
    1-periodic in phi, strictly decreasing on [0, 1/2).
    """
    phi = np.asarray(phi, dtype=np.float64)
    p0 = params.participation / (1.0 - params.participation)
    cosine = np.abs(np.cos(np.pi * phi))
    if np.any(cosine <= 1e-6):
        raise FluxDivergenceError("flux too close to half a quantum")
    out = params.omega_r_max * ((1.0 + p0) / (1.0 + p0 / cosine))
    return float(out) if out.ndim == 0 else out


def reflection(omega, params: DeviceParams, omega_r: float | None = None):
    """Linear-regime reflection off the resonator input port.

    Gamma(delta) = ((gamma_i - kappa)/2 - i delta) / ((gamma_i + kappa)/2 - i delta)
    with delta = omega - omega_r; omega_r defaults to the zero-flux resonance.
    """
    if omega_r is None:
        omega_r = params.omega_r_max
    raw = np.asarray(omega, dtype=np.float64)
    delta = np.atleast_1d(raw) - omega_r
    num = 0.5 * (params.gamma_i - params.kappa) - 1j * delta
    den = 0.5 * (params.gamma_i + params.kappa) - 1j * delta
    out = num / den
    return complex(out[0]) if raw.ndim == 0 else out


def gain_profile(
    pump: PumpConfig,
    params: DeviceParams,
    anchor: GainAnchor = DEFAULT_GAIN_ANCHOR,
) -> GainProfile:
    """Map a pump setting to (G0, bandwidth) via a monotone anchored model.

    With x = P_p / P_crit (linear power fraction) the peak gain follows the
    below-threshold parametric form G0 - 1 proportional to x / (1 - x)^2,
    weighted by a Lorentzian in the pump detuning from the critical frequency
    (width anchor.freq_scale) and normalized to reproduce the configured
    anchor point exactly.  G0 grows monotonically as (omega_p, P_p) approach
    the critical point, diverges at the critical power, and tends to 1 as the
    power backs off; the bandwidth follows from sqrt(G0) * B = c_gb * kappa.
    """
    margin = pump.critical_power_dbm - pump.power_dbm
    if margin <= 0:
        raise UnstableRegimeError(
            f"pump power {pump.power_dbm} dBm at or above critical "
            f"{pump.critical_power_dbm} dBm"
        )
    anchor_margin = pump.critical_power_dbm - anchor.power_dbm
    if anchor_margin <= 0:
        raise ValueError("gain anchor must sit below the critical power")

    def power_shape(margin_db: float) -> float:
        x = 10.0 ** (-margin_db / 10.0)
        return x / (1.0 - x) ** 2

    def lor(detuning: float) -> float:
        return 1.0 / (1.0 + (detuning / anchor.freq_scale) ** 2)

    d = abs(pump.omega_p - pump.critical_omega_p)
    d_a = abs(anchor.omega_p - pump.critical_omega_p)
    g0 = 1.0 + (anchor.g0 - 1.0) * (power_shape(margin) / power_shape(anchor_margin)) * (
        lor(d) / lor(d_a)
    )
    bandwidth = params.gain_bandwidth_const * params.kappa / np.sqrt(g0)
    return GainProfile(g0=g0, bandwidth=bandwidth, omega_p=pump.omega_p)


def gain(delta, profile: GainProfile):
    """Power gain at sideband detuning delta from the half-pump frame."""
    delta = np.asarray(delta, dtype=np.float64)
    out = 1.0 + (profile.g0 - 1.0) / (1.0 + (2.0 * delta / profile.bandwidth) ** 2)
    return float(out) if out.ndim == 0 else out


def amp_coefficients(delta, profile: GainProfile):
    """Scattering amplitudes (A, B): |A|^2 = G, |B|^2 = G - 1, real gauge."""
    g = np.asarray(gain(delta, profile), dtype=np.float64)
    a = np.sqrt(g).astype(np.complex128)
    b = np.sqrt(np.maximum(g - 1.0, 0.0)).astype(np.complex128)
    return a, b


def psd(delta, profile: GainProfile, n_noise: float):
    """Output noise power spectral density S = (G - 1) + n_noise."""
    if n_noise < 0:
        raise ValueError("n_noise must be >= 0")
    return gain(delta, profile) - 1.0 + n_noise


@dataclass(frozen=True)
class PsdFit:
    """Lorentzian-plus-floor fit result with asymptotic standard errors."""

    g0: float
    bandwidth: float
    n_noise: float
    g0_stderr: float
    bandwidth_stderr: float
    n_noise_stderr: float


def fit_psd(samples) -> PsdFit:
    """Fit S(delta) = (g0 - 1)/(1 + (2 delta / B)^2) + n_noise.

    `samples` is an (n, 2) array of (delta, S) pairs, n >= 10.  Bounded
    least squares (g0 >= 1, B > 0, n_noise >= 0) with deterministic initial
    guesses from the data; converges on relative parameter change < 1e-10.
    Exactly flat data collapses to the identifiable limit (g0 -> 1,
    n_noise = mean); data without detuning spread cannot constrain the
    bandwidth and raises FitDegenerateError.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be an (n, 2) array of (delta, S)")
    if arr.shape[0] < 10:
        raise ValueError("need at least 10 PSD samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("PSD samples must be finite")
    deltas, values = arr[:, 0], arr[:, 1]
    if len(np.unique(deltas)) < 4:
        raise FitDegenerateError("PSD samples need at least 4 distinct detunings")
    if np.ptp(values) == 0.0:
        return PsdFit(
            g0=1.0,
            bandwidth=np.nan,
            n_noise=float(values[0]),
            g0_stderr=np.nan,
            bandwidth_stderr=np.nan,
            n_noise_stderr=0.0,
        )

    floor = float(np.min(values))
    amp = float(np.max(values) - floor)
    above_half = deltas[values - floor >= 0.5 * amp]
    span = float(np.ptp(deltas))
    b0 = float(np.ptp(above_half)) if above_half.size >= 2 else span / 4.0
    b0 = max(b0, span * 1e-3)
    x0 = np.array([1.0 + amp, b0, max(floor, 0.0)])

    def residual(x):
        g0, bw, noise = x
        return (g0 - 1.0) / (1.0 + (2.0 * deltas / bw) ** 2) + noise - values

    res = least_squares(
        residual,
        x0,
        bounds=([1.0, span * 1e-9, 0.0], [np.inf, np.inf, np.inf]),
        method="trf",
        x_scale="jac",
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=10_000,
    )
    if res.status == 0:
        raise NoConvergenceError("PSD fit hit the evaluation cap")

    dof = arr.shape[0] - 3
    if dof > 0:
        s2 = 2.0 * res.cost / dof
        cov = s2 * np.linalg.pinv(res.jac.T @ res.jac)
        err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        err = np.full(3, np.nan)
    return PsdFit(
        g0=float(res.x[0]),
        bandwidth=float(res.x[1]),
        n_noise=float(res.x[2]),
        g0_stderr=float(err[0]),
        bandwidth_stderr=float(err[1]),
        n_noise_stderr=float(err[2]),
    )
