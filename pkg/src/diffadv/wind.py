"""Wind models: covariance kernels, integrated-wind statistics and path sampling.

The horizontal wind components are iid Gaussian processes. The mean speed is
applied along a horizontal unit direction (normally source -> receiver), the
orthogonal component has zero mean.

White wind is parameterised by its intensity ``sigma_v^2`` in m^2/s, i.e.
``Cov(v(l1), v(l2)) = sigma_v^2 * delta(l1 - l2)``. With that reading the
integrated displacement over a window of length ``tau`` has variance
``sigma_v^2 * tau`` and ``D + sigma_v^2`` is a well formed effective diffusion
coefficient.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

DEFAULT_QUAD_STEP = 0.05
CHOLESKY_JITTER = 1e-10
MAX_DENSE_POINTS = 8000


class KernelKind(str, enum.Enum):
    WHITE = "white"
    WSS_EXPONENTIAL = "wss_exponential"
    WSS_GAUSSIAN = "wss_gaussian"
    NONSTATIONARY_EXPONENTIAL = "nonstationary_exponential"
    NONSTATIONARY_OSCILLATORY = "nonstationary_oscillatory"
    CUSTOM = "custom"


# required and optional parameters per kind (defaults reproduce the reference study)
_PARAMS: dict[KernelKind, dict[str, Optional[float]]] = {
    KernelKind.WHITE: {"intensity": None},
    KernelKind.WSS_EXPONENTIAL: {"variance": None, "corr_time": None},
    KernelKind.WSS_GAUSSIAN: {"variance": None, "corr_time": None},
    KernelKind.NONSTATIONARY_EXPONENTIAL: {
        "variance": None,
        "corr_time": None,
        "center": 5.0,
        "width": 30.0,
    },
    KernelKind.NONSTATIONARY_OSCILLATORY: {
        "variance": None,
        "corr_time": None,
        "period": 8.0,
        "mod_depth": 0.3,
        "mod_scale": 20.0,
    },
    KernelKind.CUSTOM: {},
}


@dataclass(frozen=True)
class CovarianceKernel:
    """Covariance function of one horizontal wind component.

    Parameters
    ----------
    kind : KernelKind
        Kernel family.
    params : mapping
        Named scalars. ``intensity`` (m^2/s) for white wind, ``variance``
        (m^2/s^2) and ``corr_time`` (s) for the finite kernels, plus the
        modulation parameters of the nonstationary kinds.
    func : callable, optional
        ``func(t1, t2)`` for ``KernelKind.CUSTOM``; must broadcast.
    stationary : bool
        Only consulted for custom kernels.
    """

    kind: KernelKind
    params: Mapping[str, float] = field(default_factory=dict)
    func: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    stationary: bool = False

    def __post_init__(self):
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is KernelKind.CUSTOM:
            if self.func is None:
                raise ValueError("custom kernel needs a covariance function")
            object.__setattr__(self, "params", dict(self.params))
            return
        spec = _PARAMS[kind]
        unknown = set(self.params) - set(spec)
        if unknown:
            raise ValueError(f"unknown parameter(s) for {kind.value} kernel: {sorted(unknown)}")
        full = {}
        for name, default in spec.items():
            if name in self.params:
                full[name] = float(self.params[name])
            elif default is not None:
                full[name] = default
            else:
                raise ValueError(f"{kind.value} kernel requires parameter '{name}'")
        for name in ("intensity", "variance"):
            if name in full and not full[name] >= 0.0:
                raise ValueError(f"{kind.value} kernel: {name} must be >= 0, got {full[name]}")
        for name in ("corr_time", "width", "period", "mod_scale"):
            if name in full and not full[name] > 0.0:
                raise ValueError(f"{kind.value} kernel: {name} must be > 0, got {full[name]}")
        object.__setattr__(self, "params", full)

    # constructors -----------------------------------------------------------

    @classmethod
    def white(cls, intensity: float) -> "CovarianceKernel":
        return cls(KernelKind.WHITE, {"intensity": intensity})

    @classmethod
    def wss_exponential(cls, variance: float, corr_time: float) -> "CovarianceKernel":
        return cls(KernelKind.WSS_EXPONENTIAL, {"variance": variance, "corr_time": corr_time})

    @classmethod
    def wss_gaussian(cls, variance: float, corr_time: float) -> "CovarianceKernel":
        return cls(KernelKind.WSS_GAUSSIAN, {"variance": variance, "corr_time": corr_time})

    @classmethod
    def custom(cls, func, stationary: bool = False) -> "CovarianceKernel":
        return cls(KernelKind.CUSTOM, {}, func=func, stationary=stationary)

    @property
    def is_white(self) -> bool:
        return self.kind is KernelKind.WHITE

    @property
    def is_wss(self) -> bool:
        if self.kind is KernelKind.CUSTOM:
            return self.stationary
        return self.kind in (KernelKind.WHITE, KernelKind.WSS_EXPONENTIAL, KernelKind.WSS_GAUSSIAN)

    def describe(self) -> str:
        body = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind.value}({body})"


def reference_kernels(std: float = 0.2) -> dict[str, CovarianceKernel]:
    """The four finite wind covariances of the autocorrelation study (sigma = 0.2 m/s)."""
    var = std**2
    return {
        "wss_exponential": CovarianceKernel(KernelKind.WSS_EXPONENTIAL, {"variance": var, "corr_time": 10.0}),
        "wss_gaussian": CovarianceKernel(KernelKind.WSS_GAUSSIAN, {"variance": var, "corr_time": 10.0}),
        "nonstationary_exponential": CovarianceKernel(
            KernelKind.NONSTATIONARY_EXPONENTIAL, {"variance": var, "corr_time": 10.0}
        ),
        "nonstationary_oscillatory": CovarianceKernel(
            KernelKind.NONSTATIONARY_OSCILLATORY, {"variance": var, "corr_time": 10.0}
        ),
    }


def cov(kernel: CovarianceKernel, t1, t2):
    """Pointwise covariance ``Cov(v(t1), v(t2))``; broadcasts over array inputs.

    White kernels have no pointwise value and raise ``ValueError``; use
    :func:`sigma_x_squared` or :func:`big_l` for them.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    kind = kernel.kind
    p = kernel.params
    if kind is KernelKind.WHITE:
        raise ValueError("white wind covariance is a delta; use sigma_x_squared/big_l instead")
    if kind is KernelKind.CUSTOM:
        out = np.asarray(kernel.func(t1, t2), dtype=float)
        return out if out.ndim else float(out)
    dt = t1 - t2
    if kind is KernelKind.WSS_EXPONENTIAL:
        out = p["variance"] * np.exp(-np.abs(dt) / p["corr_time"])
    elif kind is KernelKind.WSS_GAUSSIAN:
        out = p["variance"] * np.exp(-((dt / p["corr_time"]) ** 2))
    elif kind is KernelKind.NONSTATIONARY_EXPONENTIAL:
        tbar = 0.5 * (t1 + t2)
        out = (
            p["variance"]
            * np.exp(-np.abs(dt) / p["corr_time"])
            * np.exp(-((tbar - p["center"]) ** 2) / (2.0 * p["width"] ** 2))
        )
    elif kind is KernelKind.NONSTATIONARY_OSCILLATORY:
        out = (
            p["variance"]
            * np.cos(2.0 * np.pi * dt / p["period"])
            * np.exp(-np.abs(dt) / p["corr_time"])
            * (1.0 + p["mod_depth"] * np.sin((t1 + t2) / p["mod_scale"]))
        )
    else:  # pragma: no cover
        raise ValueError(f"unsupported kernel kind {kind}")
    return out if out.ndim else float(out)


def _window_nodes(start: float, length: float, step: float):
    """Trapezoid nodes and weights on ``[start, start + length]``."""
    h_max = min(step, length / 64.0)
    n = max(int(math.ceil(length / h_max - 1e-9)), 1) + 1
    nodes = np.linspace(start, start + length, n)
    h = length / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return nodes, w


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def sigma_x_squared(kernel: CovarianceKernel, tau: float, t: float, step: float = DEFAULT_QUAD_STEP) -> float:
    """Variance of the wind integrated over ``[t - tau, t]`` (m^2)."""
    return big_l(kernel, tau, tau, t, t, step=step)


def big_l(
    kernel: CovarianceKernel,
    tau1: float,
    tau2: float,
    t1: float,
    t2: float,
    step: float = DEFAULT_QUAD_STEP,
) -> float:
    """Covariance of the wind integrals over ``[t1 - tau1, t1]`` and ``[t2 - tau2, t2]`` (m^2).

    White kernels are integrated analytically (intensity times window overlap);
    finite kernels by a nested trapezoid rule with step ``min(step, tau/64)``.
    """
    if tau1 < 0 or tau2 < 0:
        raise ValueError(f"delays must be non-negative, got tau1={tau1}, tau2={tau2}")
    if tau1 == 0 or tau2 == 0:
        return 0.0
    if kernel.is_white:
        return kernel.params["intensity"] * _overlap(t1 - tau1, t1, t2 - tau2, t2)
    n1, w1 = _window_nodes(t1 - tau1, tau1, step)
    n2, w2 = _window_nodes(t2 - tau2, tau2, step)
    k = cov(kernel, n1[:, None], n2[None, :])
    return float(w1 @ k @ w2)


# --------------------------------------------------------------------------
# wind models and sampled paths
# --------------------------------------------------------------------------


def _unit(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float).reshape(2)
    n = np.hypot(d[0], d[1])
    if n == 0:
        raise ValueError("wind direction must be a non-zero 2-vector")
    return d / n


@dataclass(frozen=True)
class WindModel:
    """Mean speed along a horizontal direction plus a per-axis covariance kernel.

    ``direction`` may be left as ``None``; a :class:`~diffadv.kernel.Scenario`
    resolves it to the source -> receiver direction. Positive ``mean_speed``
    means flow from source to receiver.
    """

    mean_speed: float
    kernel: CovarianceKernel
    direction: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not math.isfinite(self.mean_speed):
            raise ValueError("mean_speed must be finite")
        if self.direction is not None:
            object.__setattr__(self, "direction", tuple(float(x) for x in _unit(self.direction)))

    @classmethod
    def white(cls, mean_speed: float, intensity: float, direction=None) -> "WindModel":
        return cls(mean_speed, CovarianceKernel.white(intensity), direction)

    @property
    def intensity(self) -> float:
        """White-noise intensity sigma_v^2 (m^2/s)."""
        if not self.kernel.is_white:
            raise ValueError(f"intensity is only defined for white wind, not {self.kernel.kind.value}")
        return self.kernel.params["intensity"]

    def mean_vector(self, direction=None) -> np.ndarray:
        d = direction if direction is not None else self.direction
        if d is None:
            d = (1.0, 0.0)
        return self.mean_speed * _unit(d)

    def with_direction(self, direction) -> "WindModel":
        return WindModel(self.mean_speed, self.kernel, tuple(_unit(direction)))


@dataclass(frozen=True)
class WindPath:
    """One sampled realisation of the horizontal wind on a uniform grid.

    ``velocity[i]`` is held constant on ``[t[i], t[i] + dt)`` so the cumulative
    displacement ``r[i] = sum_{j < i} velocity[j] * dt`` is exact for that
    piecewise-constant path and ``r`` is piecewise linear in between.
    """

    t0: float
    dt: float
    velocity: np.ndarray  # (n, 2)
    r: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.velocity, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("velocity must have shape (n, 2)")
        if not self.dt > 0:
            raise ValueError("grid step must be positive")
        v.flags.writeable = False
        r = np.zeros((v.shape[0] + 1, 2))
        np.cumsum(v * self.dt, axis=0, out=r[1:])
        r.flags.writeable = False
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.velocity.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        """End of the covered interval (the last sample is held for one step)."""
        return self.t0 + self.dt * self.n

    @property
    def max_step(self) -> float:
        """Largest displacement over one grid step (m)."""
        if self.n == 0:
            return 0.0
        return float(np.max(np.hypot(self.velocity[:, 0], self.velocity[:, 1])) * self.dt)

    def position(self, t) -> np.ndarray:
        """Cumulative displacement r(t) relative to ``t0``; piecewise linear between nodes."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.t0, self.t_end
        tol = 1e-9 * max(1.0, abs(hi))
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise ValueError(f"time outside wind path extent [{lo}, {hi}]")
        u = np.clip((t - self.t0) / self.dt, 0.0, self.n)
        i = np.floor(u + 1e-9).astype(int)
        i = np.minimum(i, self.n)
        frac = u - i
        frac = np.where(np.abs(frac) < 1e-9, 0.0, frac)
        out = self.r[i].copy()
        mid = frac > 0
        if np.any(mid):
            out[mid] += frac[mid, None] * self.velocity[i[mid]] * self.dt
        return out

    def displacement(self, a, b) -> np.ndarray:
        """Integral of the sampled wind over ``[a, b]`` (m, per axis)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a > b):
            raise ValueError("displacement needs a <= b")
        return self.position(b) - self.position(a)


def uniform_grid(duration: float, dt: float, t0: float = 0.0) -> np.ndarray:
    n = int(round(duration / dt))
    if n < 2:
        raise ValueError("grid needs at least two points")
    return t0 + dt * np.arange(n)


def _grid_step(grid) -> tuple[float, float, int]:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValueError("grid must be a 1-D array with at least two points")
    d = np.diff(g)
    dt = float(d.mean())
    if not dt > 0 or np.max(np.abs(d - dt)) > 1e-9 * max(1.0, abs(g[-1])):
        raise ValueError("grid must be uniform with positive step")
    return float(g[0]), dt, g.size


def _sample_component(kernel: CovarianceKernel, t: np.ndarray, dt: float, rng: np.random.Generator, size: int):
    """Zero-mean samples of one wind component, shape (size, n)."""
    n = t.size
    if kernel.is_white:
        std = math.sqrt(kernel.params["intensity"] / dt)
        return std * rng.standard_normal((size, n))
    if kernel.kind is KernelKind.WSS_EXPONENTIAL:
        # exponential covariance is Markov: exact AR(1) recursion on a uniform grid
        var = kernel.params["variance"]
        rho = math.exp(-dt / kernel.params["corr_time"])
        eps = rng.standard_normal((size, n))
        out = np.empty((size, n))
        out[:, 0] = math.sqrt(var) * eps[:, 0]
        innov = math.sqrt(var * (1.0 - rho * rho))
        for i in range(1, n):
            out[:, i] = rho * out[:, i - 1] + innov * eps[:, i]
        return out
    if n > MAX_DENSE_POINTS:
        raise ValueError(
            f"{kernel.describe()}: {n} grid points exceeds the dense factorisation limit "
            f"({MAX_DENSE_POINTS}); use a coarser grid"
        )
    k = cov(kernel, t[:, None], t[None, :])
    k = 0.5 * (k + k.T)
    jitter = CHOLESKY_JITTER * max(float(np.max(np.diag(k))), 0.0)
    try:
        chol = np.linalg.cholesky(k + jitter * np.eye(n))
    except np.linalg.LinAlgError:
        raise ValueError(
            f"covariance of {kernel.describe()} is not positive definite on the requested grid "
            f"(jitter {jitter:.3g})"
        ) from None
    return rng.standard_normal((size, n)) @ chol.T


def sample_wind_velocities(
    model: WindModel, grid, seed, n_paths: int = 1, direction=None
) -> np.ndarray:
    """Batch sampler: velocities of shape (n_paths, n, 2)."""
    t0, dt, n = _grid_step(grid)
    t = t0 + dt * np.arange(n)
    rng = np.random.default_rng(seed)
    mean = model.mean_vector(direction)
    out = np.empty((n_paths, n, 2))
    for axis in range(2):
        out[:, :, axis] = mean[axis] + _sample_component(model.kernel, t, dt, rng, n_paths)
    return out


def sample_wind_path(model: WindModel, grid, seed, direction=None) -> WindPath:
    """Draw one wind realisation on a uniform grid; reproducible for a given seed."""
    t0, dt, _ = _grid_step(grid)
    v = sample_wind_velocities(model, grid, seed, 1, direction)[0]
    return WindPath(t0, dt, v)


def constant_wind_path(velocity: Sequence[float], grid) -> WindPath:
    t0, dt, n = _grid_step(grid)
    v = np.tile(np.asarray(velocity, dtype=float).reshape(1, 2), (n, 1))
    return WindPath(t0, dt, v)


def displacement(path: WindPath, a: float, b: float) -> np.ndarray:
    return path.displacement(a, b)
