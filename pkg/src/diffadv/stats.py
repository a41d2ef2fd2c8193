"""Analytic channel statistics.

The impulse response factorises as ``h = beta(tau) * exp(-alpha(tau) |m - X|^2)``
with ``X`` the zero-mean integrated wind fluctuation over the delay window and
``m`` the mean-wind-corrected horizontal offset. Its moments are therefore
Gaussian expectations of exponentiated quadratic forms, which have closed
forms through the moment generating function of ``Q = Y^T A Y``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernel import FLUSH, LOG_FLUSH, Geometry, Medium, Scenario
from .wind import DEFAULT_QUAD_STEP, CovarianceKernel, WindModel, big_l, sigma_x_squared

SINGULAR_RATIO = 1e-10
STEADY_STATE_T0 = 120.0


# --------------------------------------------------------------------------
# envelope and mean
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeTerms:
    """``beta`` (1/m^3): vertical image-pair envelope; ``alpha`` (1/m^2) = 1/(4 D tau)."""

    tau: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray


def _log_beta(tau, x3: float, z3: float, D: float):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        # exp(-(x3+z3)^2/4Dtau) = exp(-(x3-z3)^2/4Dtau) * exp(-x3 z3 / (D tau))
        img = np.log(-np.expm1(-x3 * z3 / (D * tau)))
    return -1.5 * np.log(4.0 * np.pi * D * tau) - (x3 - z3) ** 2 / (4.0 * D * tau) + img


def envelope(tau, geo: Geometry, med: Medium) -> EnvelopeTerms:
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise ValueError("envelope needs tau > 0")
    lb = _log_beta(tau, geo.receiver[2], geo.source[2], med.D)
    with np.errstate(under="ignore"):
        beta = np.where(lb > LOG_FLUSH, np.exp(lb), 0.0)
    return EnvelopeTerms(tau, beta, 1.0 / (4.0 * med.D * tau))


def _sigma2(kernel: CovarianceKernel, tau: np.ndarray, t, step: float) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), tau.shape)
    if kernel.is_white:
        return kernel.params["intensity"] * tau
    flat = [sigma_x_squared(kernel, float(a), float(b), step) for a, b in zip(tau.ravel(), t.ravel())]
    return np.asarray(flat).reshape(tau.shape)


def mean_response(tau, t, scenario: Scenario, step: float = DEFAULT_QUAD_STEP):
    """Expected impulse response ``E[h(tau, t)]`` over the wind distribution.

    Each horizontal axis contributes a factor ``(1 + 2 alpha sigma_X^2)^(-1/2)``
    so the two axes together give a single ``1 / (1 + 2 alpha sigma_X^2)``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise ValueError("mean_response needs tau > 0")
    geo, D = scenario.geometry, scenario.medium.D
    alpha = 1.0 / (4.0 * D * tau)
    s2 = _sigma2(scenario.wind.kernel, tau, t, step)
    m = scenario.mean_offsets(tau)
    m2 = np.sum(m * m, axis=-1)
    g = 1.0 + 2.0 * alpha * s2
    lv = _log_beta(tau, geo.receiver[2], geo.source[2], D) - np.log(g) - alpha * m2 / g
    with np.errstate(under="ignore"):
        out = np.where(lv > LOG_FLUSH, np.exp(lv), 0.0)
    out = np.where(out >= FLUSH, out, 0.0)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# quadratic-form MGF
# --------------------------------------------------------------------------


class MgfBranch(str, enum.Enum):
    FULL_RANK = "full_rank"
    SINGULAR = "singular"


def _eig2(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(0.5 * (S + S.T))
    return np.maximum(w, 0.0), v


def sqrtm_psd(S) -> np.ndarray:
    """Symmetric square root of a PSD matrix via its eigendecomposition."""
    w, v = _eig2(np.asarray(S, dtype=float))
    return (v * np.sqrt(w)) @ v.T


def quadratic_form_log_mgf(
    t: float, A, mean, cov, singular_ratio: float = SINGULAR_RATIO
) -> tuple[float, MgfBranch]:
    """``ln E[exp(t Y^T A Y)]`` for ``Y ~ N(mean, cov)``; also returns the branch used.

    Full rank: ``-1/2 ln|I - 2tR| + t m^T A (I - 2t cov A)^{-1} m`` with
    ``R = cov^{1/2} A cov^{1/2}``. The exponent is the usual
    ``t m^T cov^{-1/2} R (I - 2tR)^{-1} cov^{-1/2} m`` rearranged so that no
    inverse square root of ``cov`` is needed.

    Rank deficient (smallest eigenvalue below ``singular_ratio`` times the
    largest): ``cov = B B^T`` with ``B`` the scaled leading eigenvector, and
    ``-1/2 ln(1 - 2t lam) + t m^T A m + 2 t^2 b^2 / (1 - 2t lam)`` with
    ``lam = B^T A B`` and ``b = B^T A m``.
    """
    A = np.asarray(A, dtype=float)
    m = np.asarray(mean, dtype=float)
    S = np.asarray(cov, dtype=float)
    w, v = _eig2(S)
    p = m.size
    if w[-1] > 0 and w[0] >= singular_ratio * w[-1]:
        half = (v * np.sqrt(w)) @ v.T
        R = half @ A @ half
        lam = np.linalg.eigvalsh(0.5 * (R + R.T))
        den = 1.0 - 2.0 * t * lam
        if np.any(den <= 0):
            raise ValueError("divergent MGF: 1 - 2 t lambda <= 0")
        quad = t * m @ A @ np.linalg.solve(np.eye(p) - 2.0 * t * S @ A, m)
        return float(-0.5 * np.sum(np.log(den)) + quad), MgfBranch.FULL_RANK
    B = math.sqrt(w[-1]) * v[:, -1]
    lam = float(B @ A @ B)
    den = 1.0 - 2.0 * t * lam
    if den <= 0:
        raise ValueError("divergent MGF: 1 - 2 t lambda <= 0")
    alpha_q = float(m @ A @ m)
    b = float(B @ A @ m)
    return float(-0.5 * math.log(den) + alpha_q * t + 2.0 * t * t * b * b / den), MgfBranch.SINGULAR


# --------------------------------------------------------------------------
# autocorrelation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticFormSpec:
    """Inputs to the per-axis MGF: ``A = diag(1/tau1, 1/tau2)``, ``t = -1/(4D)``."""

    A: np.ndarray
    means: np.ndarray  # (2 axes, 2)
    cov: np.ndarray
    t_mgf: float

    def __post_init__(self):
        S = self.cov
        if not np.allclose(S, S.T, rtol=0, atol=0):
            raise ValueError("covariance must be symmetric")
        if S[0, 0] < 0 or S[1, 1] < 0:
            raise ValueError("covariance diagonal must be >= 0")
        lim = math.sqrt(S[0, 0] * S[1, 1])
        if abs(S[0, 1]) > lim * (1 + 1e-12) + 1e-300:
            raise ValueError("covariance violates Cauchy-Schwarz")


def quadratic_form_spec(
    tau1: float, tau2: float, t1: float, t2: float, scenario: Scenario, step: float = DEFAULT_QUAD_STEP
) -> QuadraticFormSpec:
    k = scenario.wind.kernel
    s11 = sigma_x_squared(k, tau1, t1, step)
    s22 = sigma_x_squared(k, tau2, t2, step)
    s12 = big_l(k, tau1, tau2, t1, t2, step)
    # quadrature can overshoot the bound by rounding
    lim = math.sqrt(s11 * s22)
    s12 = max(-lim, min(lim, s12))
    cov = np.array([[s11, s12], [s12, s22]])
    d = scenario.geometry.offset
    mu = scenario.mean_wind
    means = np.array([[d[i] - mu[i] * tau1, d[i] - mu[i] * tau2] for i in range(2)])
    A = np.diag([1.0 / tau1, 1.0 / tau2])
    return QuadraticFormSpec(A, means, cov, -1.0 / (4.0 * scenario.medium.D))


@dataclass(frozen=True)
class AutocorrelationResult:
    value: float
    branch: MgfBranch


def autocorrelation_detail(
    tau1: float, tau2: float, t1: float, t2: float, scenario: Scenario, step: float = DEFAULT_QUAD_STEP
) -> AutocorrelationResult:
    if not (tau1 > 0 and tau2 > 0):
        raise ValueError("autocorrelation needs tau1, tau2 > 0")
    spec = quadratic_form_spec(tau1, tau2, t1, t2, scenario, step)
    geo, D = scenario.geometry, scenario.medium.D
    lb = float(_log_beta(tau1, geo.receiver[2], geo.source[2], D) + _log_beta(tau2, geo.receiver[2], geo.source[2], D))
    total = lb
    branch = MgfBranch.FULL_RANK
    for axis in range(2):
        lm, branch = quadratic_form_log_mgf(spec.t_mgf, spec.A, spec.means[axis], spec.cov)
        total += lm
    val = math.exp(total) if total > LOG_FLUSH else 0.0
    return AutocorrelationResult(val if val >= FLUSH else 0.0, branch)


def autocorrelation(
    tau1: float, tau2: float, t1: float, t2: float, scenario: Scenario, step: float = DEFAULT_QUAD_STEP
) -> float:
    """``R_h(tau1, tau2; t1, t2) = E[h(tau1, t1) h(tau2, t2)]``."""
    return autocorrelation_detail(tau1, tau2, t1, t2, scenario, step).value


def wss_autocorrelation(
    tau1: float,
    tau2: float,
    dt: float,
    scenario: Scenario,
    t0: float = STEADY_STATE_T0,
    step: float = DEFAULT_QUAD_STEP,
) -> float:
    """``R_h(tau1, tau2; dt)`` for a WSS wind, evaluated at ``(t1, t2) = (t0, t0 + dt)``."""
    if not scenario.wind.kernel.is_wss:
        raise ValueError(f"wind kernel {scenario.wind.kernel.describe()} is not WSS")
    return autocorrelation(tau1, tau2, t0, t0 + dt, scenario, step)


def autocorrelation_grid(tau1, tau2, t1: float, t2: float, scenario: Scenario, step: float = DEFAULT_QUAD_STEP):
    """``R_h`` on the outer product of two delay grids, shape ``(len(tau1), len(tau2))``."""
    tau1 = np.atleast_1d(np.asarray(tau1, dtype=float))
    tau2 = np.atleast_1d(np.asarray(tau2, dtype=float))
    out = np.empty((tau1.size, tau2.size))
    for i, a in enumerate(tau1):
        for j, b in enumerate(tau2):
            out[i, j] = autocorrelation(float(a), float(b), t1, t2, scenario, step)
    return out


# --------------------------------------------------------------------------
# power delay profile
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PdpCurve:
    tau: np.ndarray
    values: np.ndarray
    peclet: float
    dispersion_time: Optional[float]

    @property
    def peak_delay(self) -> float:
        return float(self.tau[int(np.argmax(self.values))])


def _white_intensity(wind: WindModel, what: str) -> float:
    if not wind.kernel.is_white:
        raise ValueError(f"{what} needs a white wind model, got {wind.kernel.describe()}")
    return wind.intensity


def pdp_values(tau, scenario: Scenario):
    """Closed-form PDP ``beta^2 D/(D+s2) exp(-|m|^2 / (2 tau (D+s2)))`` for white wind."""
    s2 = _white_intensity(scenario.wind, "closed-form PDP")
    tau = np.asarray(tau, dtype=float)
    geo, D = scenario.geometry, scenario.medium.D
    pos = tau > 0
    ts = np.where(pos, tau, 1.0)
    m = scenario.mean_offsets(ts)
    m2 = np.sum(m * m, axis=-1)
    de = D + s2
    lv = 2.0 * _log_beta(ts, geo.receiver[2], geo.source[2], D) + math.log(D / de) - m2 / (2.0 * ts * de)
    with np.errstate(under="ignore"):
        out = np.where(pos & (lv > LOG_FLUSH), np.exp(lv), 0.0)
    return np.where(out >= FLUSH, out, 0.0)


def pdp(tau, scenario: Scenario) -> PdpCurve:
    tau = np.asarray(tau, dtype=float)
    vals = pdp_values(tau, scenario)
    pe = peclet(scenario.geometry, scenario.medium, scenario.wind)
    td = dispersion_time(scenario.geometry, scenario.medium, scenario.wind) if scenario.wind.mean_speed > 0 else None
    return PdpCurve(tau, vals, pe, td)


def pdp_general(tau, scenario: Scenario, t0: float = STEADY_STATE_T0, step: float = DEFAULT_QUAD_STEP) -> np.ndarray:
    """PDP through the coincident-window autocorrelation; works for any kernel."""
    tau = np.asarray(tau, dtype=float)
    return np.array([autocorrelation(float(a), float(a), t0, t0, scenario, step) if a > 0 else 0.0 for a in tau])


@dataclass(frozen=True)
class PdpCrossCheck:
    """Closed form versus the quadratic-form route; reported, never asserted."""

    tau: np.ndarray
    closed_form: np.ndarray
    general: np.ndarray
    max_rel_diff: float

    def summary(self) -> str:
        return f"closed-form vs quadratic-form PDP: max relative difference {self.max_rel_diff:.3e}"


def pdp_crosscheck(tau, scenario: Scenario) -> PdpCrossCheck:
    tau = np.asarray(tau, dtype=float)
    a = pdp_values(tau, scenario)
    b = pdp_general(tau, scenario)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), FLUSH)
    sig = np.maximum(np.abs(a), np.abs(b)) > 1e-12 * scale
    rel = np.abs(a - b)[sig] / np.maximum(np.abs(a), np.abs(b))[sig]
    return PdpCrossCheck(tau, a, b, float(rel.max()) if rel.size else 0.0)


@dataclass(frozen=True)
class PdpSpectrum:
    freq: np.ndarray  # Hz
    magnitude: np.ndarray


def _uniform_step(tau: np.ndarray) -> float:
    if tau.ndim != 1 or tau.size < 2:
        raise ValueError("PDP grid needs at least two points")
    d = np.diff(tau)
    h = float(d.mean())
    if not h > 0 or np.max(np.abs(d - h)) > 1e-9 * max(1.0, abs(float(tau[-1]))):
        raise ValueError("PDP spectrum needs a uniform delay grid")
    return h


def pdp_spectrum(curve: PdpCurve) -> PdpSpectrum:
    """``dtau * |DFT|`` of the PDP samples on the non-negative frequencies."""
    tau = np.asarray(curve.tau, dtype=float)
    h = _uniform_step(tau)
    mag = h * np.abs(np.fft.rfft(np.asarray(curve.values, dtype=float)))
    return PdpSpectrum(np.fft.rfftfreq(tau.size, h), mag)


def bandwidth_3db(spec: PdpSpectrum) -> float:
    """First frequency where the magnitude drops below DC / sqrt(2) (linear interpolation)."""
    mag = spec.magnitude
    if mag[0] <= 0:
        return 0.0
    target = mag[0] / math.sqrt(2.0)
    below = np.nonzero(mag < target)[0]
    if below.size == 0:
        return float(spec.freq[-1])
    k = int(below[0])
    f0, f1, a0, a1 = spec.freq[k - 1], spec.freq[k], mag[k - 1], mag[k]
    return float(f0 + (a0 - target) / (a0 - a1) * (f1 - f0))


# --------------------------------------------------------------------------
# Peclet number, dispersion time, classification
# --------------------------------------------------------------------------


def peclet(geo: Geometry, med: Medium, wind: WindModel) -> float:
    """``L mu / (D + sigma_v^2)``: advective over diffusive transport."""
    s2 = _white_intensity(wind, "Peclet number")
    de = med.D + s2
    if not de > 0:
        raise ValueError("D + sigma_v^2 must be > 0")
    return geo.distance * wind.mean_speed / de


def dispersion_time(geo: Geometry, med: Medium, wind: WindModel) -> float:
    """``sqrt(L^2 (D + sigma_v^2) / (2 sqrt(2) mu^3))`` in seconds; needs ``mu > 0``."""
    s2 = _white_intensity(wind, "dispersion time")
    mu = wind.mean_speed
    if not mu > 0:
        raise ValueError("dispersion time needs a positive mean wind (advection-dominated regime)")
    return math.sqrt(geo.distance**2 * (med.D + s2) / (2.0 * math.sqrt(2.0) * mu**3))


class ChannelClass(str, enum.Enum):
    NON_DISPERSIVE = "NonDispersive"
    DISPERSIVE = "Dispersive"


def classify(t_sym: float, t_d: float) -> ChannelClass:
    if not (t_sym > 0 and t_d > 0):
        raise ValueError("classify needs positive T_sym and T_d")
    return ChannelClass.NON_DISPERSIVE if t_sym >= t_d else ChannelClass.DISPERSIVE
