"""Green's functions of the half-space diffusion problem and the LTV channel.

In the frame moving with the integrated wind the diffusion-advection
equation becomes a heat equation; the absorbing plane ``x3 = 0`` is handled
with a negative image source. Mapping back gives the time-varying impulse
response ``h(tau, t)`` (concentration at the receiver at time ``t`` per unit
mass released ``tau`` seconds earlier), which depends on the wind only
through the displacement accumulated over ``[t - tau, t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .wind import WindModel, WindPath

FLUSH = 1e-300
LOG_FLUSH = math.log(FLUSH)


@dataclass(frozen=True)
class Geometry:
    """Point source ``z0`` and receiver ``x``, both strictly above the absorbing plane."""

    source: tuple[float, float, float]
    receiver: tuple[float, float, float]

    def __post_init__(self):
        z = tuple(float(v) for v in np.asarray(self.source, dtype=float).reshape(3))
        x = tuple(float(v) for v in np.asarray(self.receiver, dtype=float).reshape(3))
        if not all(math.isfinite(v) for v in z + x):
            raise ValueError("geometry coordinates must be finite")
        if not z[2] > 0:
            raise ValueError(f"source height must be > 0, got {z[2]}")
        if not x[2] > 0:
            raise ValueError(f"receiver height must be > 0, got {x[2]}")
        if z == x:
            raise ValueError("receiver coincides with the source")
        object.__setattr__(self, "source", z)
        object.__setattr__(self, "receiver", x)

    @property
    def offset(self) -> np.ndarray:
        """Horizontal offset ``x_par - z0_par`` (m)."""
        return np.array([self.receiver[0] - self.source[0], self.receiver[1] - self.source[1]])

    @property
    def distance(self) -> float:
        """Horizontal transmitter-receiver distance (m)."""
        o = self.offset
        return float(math.hypot(o[0], o[1]))

    @property
    def direction(self) -> np.ndarray:
        """Unit horizontal vector from source to receiver; x-axis if vertically aligned."""
        d = self.distance
        if d == 0.0:
            return np.array([1.0, 0.0])
        return self.offset / d


@dataclass(frozen=True)
class Medium:
    D: float  # m^2/s

    def __post_init__(self):
        if not (math.isfinite(self.D) and self.D > 0):
            raise ValueError(f"diffusion coefficient must be > 0, got {self.D}")


@dataclass(frozen=True)
class Scenario:
    """Geometry, medium and wind. The wind direction defaults to source -> receiver."""

    geometry: Geometry
    medium: Medium
    wind: WindModel

    @property
    def wind_direction(self) -> np.ndarray:
        if self.wind.direction is not None:
            return np.asarray(self.wind.direction)
        return self.geometry.direction

    @property
    def mean_wind(self) -> np.ndarray:
        return self.wind.mean_vector(self.wind_direction)

    def mean_offsets(self, tau) -> np.ndarray:
        """``x_i - z0_i - mu_i * tau`` per axis; shape ``tau.shape + (2,)``."""
        tau = np.asarray(tau, dtype=float)
        return self.geometry.offset - tau[..., None] * self.mean_wind


def default_scenario(mean_speed: float = 0.5, intensity: float = 1e-6, D: float = 6.7698e-6) -> Scenario:
    """Directed-wind operating point: source (0,0,1), receiver (sqrt2/2, sqrt2/2, 1)."""
    s = math.sqrt(2.0) / 2.0
    return Scenario(Geometry((0.0, 0.0, 1.0), (s, s, 1.0)), Medium(D), WindModel.white(mean_speed, intensity))


# --------------------------------------------------------------------------
# Green's functions
# --------------------------------------------------------------------------


def heat_kernel(y, t, D: float):
    """Free-space heat kernel in R^3; zero for ``t <= 0``. ``y`` has trailing axis 3."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    r2 = np.sum(y * y, axis=-1)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    val = (4.0 * np.pi * D * ts) ** -1.5 * np.exp(-r2 / (4.0 * D * ts))
    out = np.where(pos, val, 0.0)
    return out if out.ndim else float(out)


def image_kernel(y_par, y3, z_par, z3, t, D: float):
    """Half-space kernel: direct source minus its mirror image below ``x3 = 0``."""
    y_par = np.asarray(y_par, dtype=float)
    z_par = np.asarray(z_par, dtype=float)
    y3 = np.asarray(y3, dtype=float)
    d_par = y_par - z_par
    zero = np.zeros(np.broadcast(d_par[..., 0], y3, np.asarray(z3)).shape)
    direct = np.stack([d_par[..., 0] + zero, d_par[..., 1] + zero, y3 - z3 + zero], axis=-1)
    mirror = np.stack([d_par[..., 0] + zero, d_par[..., 1] + zero, y3 + z3 + zero], axis=-1)
    return heat_kernel(direct, t, D) - heat_kernel(mirror, t, D)


def response_from_offset(offset, tau, x3: float, z3: float, D: float):
    """``h`` given the wind-corrected horizontal offset ``x_par - z0_par - disp``.

    Evaluated in log space: ``exp(log_pref - e_direct) * (1 - exp(-x3*z3/(D tau)))``;
    values below 1e-300 and ``tau <= 0`` give 0.
    """
    offset = np.asarray(offset, dtype=float)
    tau = np.asarray(tau, dtype=float)
    pos = tau > 0
    ts = np.where(pos, tau, 1.0)
    a2 = np.sum(offset * offset, axis=-1)
    inv = 1.0 / (4.0 * D * ts)
    log_val = -1.5 * np.log(4.0 * np.pi * D * ts) - (a2 + (x3 - z3) ** 2) * inv
    with np.errstate(under="ignore"):
        val = np.exp(log_val) * -np.expm1(-x3 * z3 / (D * ts))
    val = np.where(pos & (log_val > LOG_FLUSH) & (val >= FLUSH), val, 0.0)
    return val if val.ndim else float(val)


def impulse_response(geo: Geometry, med: Medium, path: WindPath, tau, t):
    """Time-varying impulse response ``h(tau, t)`` (1/m^3 per unit mass) for one wind path."""
    tau = np.asarray(tau, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(tau < 0):
        raise ValueError("delay must be non-negative")
    lo, hi = path.t0, path.t_end
    tol = 1e-9 * max(1.0, abs(hi))
    if np.any(t - tau < lo - tol) or np.any(t > hi + tol):
        raise ValueError(f"window [t - tau, t] outside the wind path range [{lo}, {hi}]")
    disp = path.displacement(t - tau, t)
    off = geo.offset - disp
    return response_from_offset(off, tau, geo.receiver[2], geo.source[2], med.D)


# --------------------------------------------------------------------------
# point-source propagation
# --------------------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _ltv_sum(q, r, out_idx, n_mem, dt, ox0, oy0, dz2, x3z3, D, max_step, log_floor):
    n_out = out_idx.size
    out = np.zeros(n_out)
    taps = np.arange(1, n_mem + 1) * dt
    inv4dt = 1.0 / (4.0 * D * taps)
    logpref = -1.5 * np.log(4.0 * np.pi * D * taps)
    image = -np.expm1(-x3z3 / (D * taps))
    inv_far = inv4dt[n_mem - 1]
    for m in range(n_out):
        n = out_idx[m]
        kmax = min(n_mem, n)
        rx = r[n, 0]
        ry = r[n, 1]
        acc = 0.0
        k = 1
        while k <= kmax:
            s = n - k
            ox = ox0 - (rx - r[s, 0])
            oy = oy0 - (ry - r[s, 1])
            d2 = ox * ox + oy * oy
            slack = logpref[k - 1] - log_floor
            if slack <= 0.0:
                break
            if max_step > 0.0:
                # later taps cannot get closer than dist - j * max_step
                reach2 = slack / inv_far
                if d2 > reach2:
                    j = int((math.sqrt(d2) - math.sqrt(reach2)) / max_step)
                    k += max(j, 1)
                    continue
            qs = q[s]
            if qs != 0.0:
                lv = logpref[k - 1] - (d2 + dz2) * inv4dt[k - 1]
                if lv > log_floor:
                    h = math.exp(lv) * image[k - 1]
                    if h >= 1e-300:
                        acc += h * qs
            k += 1
        out[m] = acc * dt
    return out


def propagate(
    q,
    dt: float,
    geo: Geometry,
    med: Medium,
    path: WindPath,
    t_mem: float,
    stride: int = 1,
    log_floor: float = LOG_FLUSH,
) -> np.ndarray:
    """Receiver concentration for a source release-rate waveform ``q`` (left rectangle rule).

    ``c[n] = dt * sum_{k=1..K} h(k dt, n dt) q[n - k]`` with ``K = t_mem / dt``;
    ``q`` starts at ``t = path.t0``. Only every ``stride``-th output sample is
    computed (phase 0), which is how decimation to a slower receiver is done.
    ``log_floor`` is the log-magnitude below which kernel values are dropped;
    the default matches the 1e-300 flush of :func:`impulse_response`.
    """
    q = np.ascontiguousarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("source waveform must be 1-D")
    if np.any(q < 0):
        raise ValueError("source waveform must be non-negative")
    if not t_mem > 0:
        raise ValueError("channel memory must be positive")
    if abs(path.dt - dt) > 1e-12 * dt:
        raise ValueError(f"waveform step {dt} does not match wind path step {path.dt}")
    if path.n < q.size:
        raise ValueError(f"wind path covers {path.n} samples, waveform has {q.size}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_mem = int(round(t_mem / dt))
    if n_mem < 1:
        raise ValueError("channel memory shorter than one sample")
    out_idx = np.arange(0, q.size, stride, dtype=np.int64)
    off = geo.offset
    x3, z3 = geo.receiver[2], geo.source[2]
    return _ltv_sum(
        q,
        path.r,
        out_idx,
        n_mem,
        float(dt),
        float(off[0]),
        float(off[1]),
        float((x3 - z3) ** 2),
        float(x3 * z3),
        float(med.D),
        path.max_step,
        float(log_floor),
    )
