"""Pulse-modulated link over the sampled diffusion-advection channel.

Transmit chain: symbol indices -> constellation amplitudes -> rectangular
segment pulses at the transmitter rate -> zero-order hold to the channel rate.
The channel is :func:`diffadv.kernel.propagate` over one wind realisation,
decimated to the receiver rate. The receiver adds AWGN, runs a matched filter
bank, locks timing on the pilots, samples once per symbol, fits an MMSE
equaliser on the pilots and makes minimum-distance decisions.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.spatial import ConvexHull, QhullError

from .kernel import Scenario, default_scenario, propagate
from .stats import STEADY_STATE_T0, mean_response
from .wind import sample_wind_path, uniform_grid

# kernel values this many e-folds below the smallest on-axis peak within the
# channel memory are dropped; measured effect is below 1e-28 relative
CHANNEL_LOG_MARGIN = 60.0

# independent random streams of one simulation
STREAM_PAYLOAD = 0
STREAM_WIND = 1
STREAM_NOISE = 2


def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
    """Child seed for ``(master, *keys)``; independent of evaluation order."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


def _int_ratio(num: float, den: float, what: str) -> int:
    r = num / den
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-9 * max(1.0, r):
        raise ValueError(f"{what}: {num} / {den} is not a positive integer")
    return k


# --------------------------------------------------------------------------
# pulses and constellations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PulseSet:
    """``N`` segment-indicator pulses over one symbol, unit energy at ``rate``."""

    n_dim: int
    t_sym: float
    rate: float
    waveforms: np.ndarray  # (N, samples_per_symbol)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def samples_per_symbol(self) -> int:
        return self.waveforms.shape[1]

    @property
    def samples_per_segment(self) -> int:
        return self.samples_per_symbol // self.n_dim

    def gram(self) -> np.ndarray:
        return self.waveforms @ self.waveforms.T * self.dt


def build_pulse_set(n_dim: int, t_sym: float, rate: float = 100.0) -> PulseSet:
    if n_dim < 1:
        raise ValueError("signalling dimension must be >= 1")
    if not (t_sym > 0 and rate > 0):
        raise ValueError("symbol period and rate must be positive")
    seg = _int_ratio(t_sym * rate, n_dim, "samples per segment (T_sym * rate / N)")
    amp = math.sqrt(n_dim / t_sym)
    w = np.zeros((n_dim, n_dim * seg))
    for k in range(n_dim):
        w[k, k * seg : (k + 1) * seg] = amp
    w.flags.writeable = False
    return PulseSet(n_dim, float(t_sym), float(rate), w)


class Scheme(str, enum.Enum):
    TWO = "two"
    FOUR = "four"
    EIGHT_SYMMETRIC = "eight_symmetric"
    EIGHT_WIDE = "eight_wide"
    EIGHT_TALL = "eight_tall"
    SIXTEEN = "sixteen"


_POINTS: dict[Scheme, list[tuple[int, int]]] = {
    Scheme.TWO: [(1, 0), (0, 1)],
    Scheme.FOUR: [(0, 0), (1, 0), (0, 1), (1, 1)],
    Scheme.EIGHT_SYMMETRIC: [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2)],
    Scheme.EIGHT_WIDE: [(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1), (2, 1), (3, 1)],
    Scheme.EIGHT_TALL: [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2), (0, 3), (1, 3)],
    Scheme.SIXTEEN: [(x, y) for y in range(4) for x in range(4)],
}


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _bit_labels(scheme: Scheme, points: np.ndarray) -> np.ndarray:
    if scheme in (Scheme.FOUR, Scheme.SIXTEEN):
        # per-axis Gray code, x in the low bits
        bits = 1 if scheme is Scheme.FOUR else 2
        return np.array([(_gray(int(y)) << bits) | _gray(int(x)) for x, y in points])
    return np.array([_gray(i) for i in range(len(points))])


@dataclass(frozen=True)
class Constellation:
    scheme: Scheme
    points: np.ndarray  # (M, 2), canonical order
    labels: np.ndarray  # bit label per point

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.size))

    @property
    def average_energy(self) -> float:
        return float(np.mean(np.sum(self.points**2, axis=1)))

    def pilot_order(self) -> list[int]:
        """Hull corners (non-zero ones first, canonical order), then the other points."""
        pts = self.points
        if self.size < 3:
            corners = list(range(self.size))
        else:
            try:
                corners = sorted(int(i) for i in ConvexHull(pts).vertices)
            except QhullError:
                corners = list(range(self.size))
        zero = [i for i in corners if not np.any(pts[i])]
        corners = [i for i in corners if np.any(pts[i])] + zero
        rest = [i for i in range(self.size) if i not in corners]
        return corners + rest

    def pilots(self, n: int) -> np.ndarray:
        order = self.pilot_order()
        return np.array([order[k % len(order)] for k in range(n)], dtype=np.int64)


def build_constellation(scheme) -> Constellation:
    scheme = Scheme(scheme)
    pts = np.array(_POINTS[scheme], dtype=float)
    pts.flags.writeable = False
    labels = _bit_labels(scheme, pts)
    labels.flags.writeable = False
    return Constellation(scheme, pts, labels)


# --------------------------------------------------------------------------
# transmitter and channel
# --------------------------------------------------------------------------


def modulate(indices, constellation: Constellation, pulses: PulseSet) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= constellation.size):
        raise ValueError(f"symbol index out of range [0, {constellation.size})")
    if constellation.points.shape[1] != pulses.n_dim:
        raise ValueError(
            f"constellation has {constellation.points.shape[1]} coordinates, pulse set has {pulses.n_dim}"
        )
    amps = constellation.points[idx]
    return (amps @ pulses.waveforms).ravel()


def upconvert(waveform, from_rate: float, to_rate: float) -> np.ndarray:
    """Zero-order hold."""
    k = _int_ratio(to_rate, from_rate, "upconversion ratio")
    return np.repeat(np.asarray(waveform, dtype=float), k)


def downconvert(waveform, from_rate: float, to_rate: float, phase: int = 0) -> np.ndarray:
    """Keep every k-th sample starting at ``phase`` (no anti-alias filter)."""
    k = _int_ratio(from_rate, to_rate, "decimation ratio")
    if not 0 <= phase < k:
        raise ValueError(f"phase must be in [0, {k})")
    return np.asarray(waveform, dtype=float)[phase::k]


class ChannelOutageError(ValueError):
    """The realised discrete response is identically zero, so it cannot be normalised."""


class ChannelMode(str, enum.Enum):
    REALIZATION = "realization"  # one seeded wind path, time varying
    MEAN = "mean"  # ensemble-mean impulse response, time invariant


@dataclass(frozen=True)
class ChannelOutput:
    samples: np.ndarray  # rx rate
    gain: float  # applied normalisation factor (1 when disabled)
    response: np.ndarray  # realised discrete response before normalisation


def mean_channel_taps(scenario: Scenario, t_mem: float, channel_rate: float) -> np.ndarray:
    """``E[h](k dt)`` for ``k = 1..t_mem*rate``; the wind must be WSS so it does not depend on t."""
    if not scenario.wind.kernel.is_wss:
        raise ValueError(f"mean channel needs a WSS wind, got {scenario.wind.kernel.describe()}")
    dt = 1.0 / channel_rate
    n_mem = int(round(t_mem * channel_rate))
    if n_mem < 1:
        raise ValueError("channel memory shorter than one sample")
    return np.asarray(mean_response(dt * np.arange(1, n_mem + 1), STEADY_STATE_T0, scenario))


def lti_pass(q, taps: np.ndarray, dt: float, stride: int = 1) -> np.ndarray:
    """``c[n] = dt * sum_{k>=1} taps[k-1] q[n-k]`` at every ``stride``-th output."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        return np.zeros(0)
    full = fftconvolve(q, np.concatenate([[0.0], taps]))[: q.size] * dt
    # FFT rounding can leave tiny negative values where the exact sum is >= 0
    return np.maximum(full[::stride], 0.0)


def channel_pass(
    tx,
    scenario: Scenario,
    seed,
    t_mem: float = 30.0,
    tx_rate: float = 100.0,
    channel_rate: float = 1000.0,
    rx_rate: float = 100.0,
    normalize: bool = True,
    mode=ChannelMode.REALIZATION,
) -> ChannelOutput:
    """Send a transmitter-rate waveform through the channel to the receiver rate.

    By default the channel is one seeded wind realisation; ``mode="mean"``
    uses the ensemble-mean response instead (``seed`` is then unused). The
    realised discrete response is the receiver-rate output for a unit
    amplitude held for one receiver sample at ``t = 0``; with ``normalize``
    both it and the output are scaled so that its energy is 1.
    """
    mode = ChannelMode(mode)
    tx = np.asarray(tx, dtype=float)
    q = upconvert(tx, tx_rate, channel_rate)
    stride = _int_ratio(channel_rate, rx_rate, "channel/rx rate ratio")
    dt = 1.0 / channel_rate
    n_mem = int(round(t_mem * channel_rate))
    if n_mem < 1:
        raise ValueError("channel memory shorter than one sample")
    probe = np.zeros(n_mem + stride)
    probe[:stride] = 1.0
    if mode is ChannelMode.MEAN:
        taps = mean_channel_taps(scenario, t_mem, channel_rate)
        g = lti_pass(probe, taps, dt, stride)
        out = lti_pass(q, taps, dt, stride)
    else:
        n_path = max(q.size, probe.size)
        path = sample_wind_path(scenario.wind, uniform_grid(n_path * dt, dt), seed, scenario.wind_direction)
        geo, med = scenario.geometry, scenario.medium
        floor = -1.5 * math.log(4.0 * math.pi * med.D * n_mem * dt) - CHANNEL_LOG_MARGIN
        g = propagate(probe, dt, geo, med, path, t_mem, stride=stride, log_floor=floor)
        out = propagate(q, dt, geo, med, path, t_mem, stride=stride, log_floor=floor) if q.size else np.zeros(0)
    gain = 1.0
    if normalize:
        e = float(np.sum(g * g))
        if not e > 0:
            raise ChannelOutageError(
                "realised channel response is identically zero (wind carries the release away "
                "from the receiver); cannot normalise"
            )
        gain = 1.0 / math.sqrt(e)
    return ChannelOutput(out * gain, gain, g)


# --------------------------------------------------------------------------
# noise
# --------------------------------------------------------------------------


class NoiseKind(str, enum.Enum):
    SNR_DB = "snr_db"
    EBN0_DB = "ebn0_db"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    value_db: float

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if math.isnan(self.value_db):
            raise ValueError("noise level must not be NaN")

    @classmethod
    def snr(cls, db: float) -> "NoiseSpec":
        return cls(NoiseKind.SNR_DB, float(db))

    @classmethod
    def ebn0(cls, db: float) -> "NoiseSpec":
        return cls(NoiseKind.EBN0_DB, float(db))


@dataclass(frozen=True)
class NoiseReference:
    """Transmitter-side energies the noise level is defined against.

    ``symbol_energy`` is the average discrete (unweighted) symbol energy at
    the receiver sampling rate, so ``symbol_energy / samples_per_symbol`` is
    the average signal power per sample.
    """

    symbol_energy: float
    samples_per_symbol: int
    bits_per_symbol: int


def noise_reference(constellation: Constellation, pulses_rx: PulseSet) -> NoiseReference:
    # discrete energy of a unit-energy pulse at rate f is f; points scale it by |a|^2
    es = constellation.average_energy * float(np.sum(pulses_rx.waveforms[0] ** 2))
    return NoiseReference(es, pulses_rx.samples_per_symbol, constellation.bits_per_symbol)


def noise_variance(spec: Optional[NoiseSpec], ref: NoiseReference) -> float:
    """``sigma_n^2 = E_s / (M * SNR)`` with ``SNR = (Eb/N0) * bits`` for the Eb/N0 form."""
    if spec is None or math.isinf(spec.value_db) and spec.value_db > 0:
        return 0.0
    lin = 10.0 ** (spec.value_db / 10.0)
    if spec.kind is NoiseKind.EBN0_DB:
        lin *= ref.bits_per_symbol
    return ref.symbol_energy / (ref.samples_per_symbol * lin)


def add_awgn(samples, spec: Optional[NoiseSpec], ref: NoiseReference, seed) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    var = noise_variance(spec, ref)
    if var == 0.0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + math.sqrt(var) * rng.standard_normal(x.shape)


# --------------------------------------------------------------------------
# receiver
# --------------------------------------------------------------------------


def matched_filter_bank(samples, pulses: PulseSet) -> np.ndarray:
    """Causal matched filters: ``y_k[n] = dt * sum_j r[n - L + 1 + j] p_k[j]``.

    Output shape ``(N, len(samples))``; a symbol starting at index ``s`` peaks
    at ``s + L - 1``.
    """
    r = np.asarray(samples, dtype=float)
    n = r.size
    out = np.empty((pulses.n_dim, n))
    for k in range(pulses.n_dim):
        out[k] = np.convolve(r, pulses.waveforms[k][::-1])[:n] * pulses.dt
    return out


class SyncError(RuntimeError):
    pass


def synchronize(
    mf,
    template,
    samples_per_symbol: int,
    threshold_fraction: float = 0.05,
    reference_energy: Optional[float] = None,
) -> int:
    """Two-step timing recovery; returns the decision index of the first template symbol.

    Step 1 takes the first index where the cumulative matched-filter energy
    reaches ``threshold_fraction * reference_energy`` (default: the total
    energy of ``mf``). Step 2 scans decision indices within one symbol of it
    and keeps the one maximising the inner product between ``mf`` and
    ``template``; ties go to the earliest index.

    ``template`` holds the expected ``(N, K)`` matched-filter outputs of the
    pilot block, with its first decision instant at column
    ``samples_per_symbol - 1``. Samples outside ``mf`` count as zero.
    """
    mf = np.asarray(mf, dtype=float)
    tpl = np.asarray(template, dtype=float)
    if mf.ndim != 2 or mf.shape[1] == 0:
        raise ValueError("matched filter outputs must be a non-empty (N, n) array")
    if tpl.ndim != 2 or tpl.shape[0] != mf.shape[0] or tpl.shape[1] == 0:
        raise ValueError("template must be non-empty with one row per matched filter")
    m = int(samples_per_symbol)
    if m < 1:
        raise ValueError("samples_per_symbol must be >= 1")
    energy = np.sum(mf * mf, axis=0)
    cum = np.cumsum(energy)
    if not cum[-1] > 0:
        raise SyncError("no signal: matched filter outputs are all zero")
    ref = cum[-1] if reference_energy is None else float(reference_energy)
    n, k = mf.shape[1], tpl.shape[1]
    i1 = min(int(np.searchsorted(cum, threshold_fraction * ref, side="left")), n - 1)
    lead = m - 1
    lo, hi = max(i1 - m, 0), min(i1 + m, n - 1)
    # padded[:, j + pad] = mf[:, j]
    pad = lead
    padded = np.zeros((mf.shape[0], pad + n + k))
    padded[:, pad : pad + n] = mf
    scores = np.array([np.sum(padded[:, d - lead + pad : d - lead + pad + k] * tpl) for d in range(lo, hi + 1)])
    return lo + int(np.argmax(scores))


class EqualizerMode(str, enum.Enum):
    AFFINE = "affine"
    DIAGONAL = "diagonal"


RIDGE = 1e-8


@dataclass(frozen=True)
class Equalizer:
    """Affine map ``z = W y + b`` in signal space."""

    W: np.ndarray
    b: np.ndarray
    mode: EqualizerMode = EqualizerMode.AFFINE

    def apply(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y @ self.W.T + self.b


def _ridge_lstsq(X: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    G = X.T @ X
    lam = ridge * np.trace(G) / G.shape[0]
    return np.linalg.solve(G + lam * np.eye(G.shape[0]), X.T @ Y)


def train_mmse(observations, points, mode=EqualizerMode.AFFINE, ridge: float = RIDGE) -> Equalizer:
    """Least-squares affine equaliser from pilot observations and their known points.

    Minimises ``sum_k |W y_k + b - s_k|^2`` plus a ridge of ``ridge * trace / dim``
    on the normal equations. ``mode="diagonal"`` fits an independent gain and
    offset per signal-space axis instead.
    """
    mode = EqualizerMode(mode)
    Y = np.atleast_2d(np.asarray(observations, dtype=float))
    S = np.atleast_2d(np.asarray(points, dtype=float))
    if Y.shape != S.shape:
        raise ValueError(f"observations {Y.shape} and points {S.shape} differ in shape")
    n, dim = Y.shape
    if n < dim + 1:
        raise ValueError(f"affine equaliser in {dim}-D needs at least {dim + 1} pilots, got {n}")
    if mode is EqualizerMode.AFFINE:
        theta = _ridge_lstsq(np.hstack([Y, np.ones((n, 1))]), S, ridge)
        return Equalizer(theta[:dim].T.copy(), theta[dim].copy(), mode)
    W = np.zeros((dim, dim))
    b = np.zeros(dim)
    for k in range(dim):
        th = _ridge_lstsq(np.column_stack([Y[:, k], np.ones(n)]), S[:, k], ridge)
        W[k, k], b[k] = th[0], th[1]
    return Equalizer(W, b, mode)


def detect(z, constellation: Constellation):
    """Minimum-distance decision(s); ties go to the lowest point index."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    d = np.sum((z2[:, None, :] - constellation.points[None, :, :]) ** 2, axis=-1)
    out = np.argmin(d, axis=1)
    return int(out[0]) if single else out


def bit_errors(tx, rx, constellation: Constellation) -> int:
    x = constellation.labels[np.asarray(tx)] ^ constellation.labels[np.asarray(rx)]
    return int(sum(bin(int(v)).count("1") for v in x))


def cluster_accuracy(observations, labels) -> float:
    """Fraction of observations closest to the centroid of their own label."""
    y = np.asarray(observations, dtype=float)
    lab = np.asarray(labels)
    keys = np.unique(lab)
    cent = np.array([y[lab == k].mean(axis=0) for k in keys])
    d = np.sum((y[:, None, :] - cent[None, :, :]) ** 2, axis=-1)
    return float(np.mean(keys[np.argmin(d, axis=1)] == lab))


# --------------------------------------------------------------------------
# end-to-end link
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkConfig:
    scenario: Scenario = field(default_factory=default_scenario)
    scheme: Scheme = Scheme.FOUR
    t_sym: float = 2.0
    n_dim: int = 2
    n_symbols: int = 1000
    n_pilots: int = 10
    n_trailing: int = 100
    tx_rate: float = 100.0
    channel_rate: float = 1000.0
    rx_rate: float = 100.0
    t_mem: float = 30.0
    noise: Optional[NoiseSpec] = None
    normalize_channel: bool = True
    channel_mode: ChannelMode = ChannelMode.REALIZATION
    equalizer: EqualizerMode = EqualizerMode.AFFINE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "equalizer", EqualizerMode(self.equalizer))
        object.__setattr__(self, "channel_mode", ChannelMode(self.channel_mode))
        if self.n_dim != 2:
            raise ValueError("the constellations are two-dimensional; n_dim must be 2")
        if self.n_symbols < 0 or self.n_trailing < 0:
            raise ValueError("symbol counts must be non-negative")
        if self.n_pilots < self.n_dim + 1:
            raise ValueError(f"need at least {self.n_dim + 1} pilots for the affine equaliser")
        if not self.t_mem > 0:
            raise ValueError("channel memory must be positive")
        _int_ratio(self.channel_rate, self.tx_rate, "channel/tx rate ratio")
        _int_ratio(self.channel_rate, self.rx_rate, "channel/rx rate ratio")
        build_pulse_set(self.n_dim, self.t_sym, self.tx_rate)
        build_pulse_set(self.n_dim, self.t_sym, self.rx_rate)
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def constellation(self) -> Constellation:
        return build_constellation(self.scheme)

    def pulses(self, rate: float) -> PulseSet:
        return build_pulse_set(self.n_dim, self.t_sym, rate)


@dataclass(frozen=True)
class CleanRun:
    """Transmitted stream and noiseless receiver samples of one trial."""

    pilots: np.ndarray
    payload: np.ndarray
    rx: np.ndarray
    channel_gain: float
    trial: int


def simulate_channel(config: LinkConfig, trial: int = 0) -> CleanRun:
    con = config.constellation
    pilots = con.pilots(config.n_pilots)
    rng = np.random.default_rng(derive_seed(config.seed, STREAM_PAYLOAD, trial))
    payload = rng.integers(0, con.size, config.n_symbols)
    ptx = config.pulses(config.tx_rate)
    tx = modulate(np.concatenate([pilots, payload]), con, ptx)
    tx = np.concatenate([tx, np.zeros(config.n_trailing * ptx.samples_per_symbol)])
    ch = channel_pass(
        tx,
        config.scenario,
        derive_seed(config.seed, STREAM_WIND, trial),
        config.t_mem,
        config.tx_rate,
        config.channel_rate,
        config.rx_rate,
        config.normalize_channel,
        config.channel_mode,
    )
    return CleanRun(pilots, payload, ch.samples, ch.gain, trial)


@dataclass(frozen=True)
class LinkResult:
    transmitted: np.ndarray  # payload indices
    decided: np.ndarray
    symbol_errors: int
    bit_errors: int
    bits_total: int
    sync_index: int
    equalizer: Equalizer
    observations: np.ndarray  # raw payload matched-filter samples (n, 2)
    equalized: np.ndarray
    noise_variance: float
    channel_gain: float
    seeds: dict

    @property
    def ser(self) -> float:
        return self.symbol_errors / max(self.transmitted.size, 1)

    @property
    def ber(self) -> float:
        return self.bit_errors / max(self.bits_total, 1)


def pilot_template(config: LinkConfig) -> np.ndarray:
    """Matched-filter outputs of the pilot block through an ideal channel."""
    prx = config.pulses(config.rx_rate)
    con = config.constellation
    return matched_filter_bank(modulate(con.pilots(config.n_pilots), con, prx), prx)


def receive(
    clean: CleanRun, config: LinkConfig, noise: Optional[NoiseSpec], noise_seed, point: int = 0
) -> LinkResult:
    con = config.constellation
    prx = config.pulses(config.rx_rate)
    m = prx.samples_per_symbol
    ref = noise_reference(con, prx)
    var = noise_variance(noise, ref)
    r = add_awgn(clean.rx, noise, ref, noise_seed)
    mf = matched_filter_bank(r, prx)
    tpl = pilot_template(config)
    d0 = synchronize(mf, tpl, m, reference_energy=float(np.sum(tpl * tpl)))
    n_tot = config.n_pilots + config.n_symbols
    idx = d0 + m * np.arange(n_tot)
    obs = np.zeros((n_tot, prx.n_dim))
    ok = idx < mf.shape[1]
    obs[ok] = mf[:, idx[ok]].T
    eq = train_mmse(obs[: config.n_pilots], con.points[clean.pilots], config.equalizer)
    y = obs[config.n_pilots :]
    z = eq.apply(y)
    dec = detect(z, con) if y.shape[0] else np.zeros(0, dtype=np.int64)
    dec = np.asarray(dec, dtype=np.int64)
    return LinkResult(
        transmitted=clean.payload,
        decided=dec,
        symbol_errors=int(np.sum(dec != clean.payload)),
        bit_errors=bit_errors(clean.payload, dec, con),
        bits_total=int(clean.payload.size * con.bits_per_symbol),
        sync_index=int(d0),
        equalizer=eq,
        observations=y,
        equalized=z,
        noise_variance=var,
        channel_gain=clean.channel_gain,
        seeds={"master": config.seed, "trial": clean.trial, "point": point},
    )


def run_link(config: LinkConfig) -> LinkResult:
    """One end-to-end run: trial 0, sweep point 0 of the seed tree."""
    clean = simulate_channel(config, 0)
    return receive(clean, config, config.noise, derive_seed(config.seed, STREAM_NOISE, 0, 0))


@dataclass(frozen=True)
class BerCurve:
    abscissa_db: np.ndarray  # (P,)
    kind: NoiseKind
    bit_errors: np.ndarray  # (P, T)
    bits_total: np.ndarray  # (P, T)
    symbol_errors: np.ndarray  # (P, T)
    symbols_total: np.ndarray  # (P, T)
    seed: int
    scheme: Scheme

    @property
    def trials(self) -> int:
        return self.bit_errors.shape[1]

    @property
    def ber(self) -> np.ndarray:
        return self.bit_errors / np.maximum(self.bits_total, 1)

    @property
    def mean_ber(self) -> np.ndarray:
        return self.ber.mean(axis=1) if self.trials else np.zeros(len(self.abscissa_db))

    @property
    def stderr(self) -> np.ndarray:
        if self.trials < 2:
            return np.full(len(self.abscissa_db), np.nan)
        return self.ber.std(axis=1, ddof=1) / math.sqrt(self.trials)


def _default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def ber_sweep(
    config: LinkConfig,
    abscissa_db: Sequence[float],
    trials: int,
    kind=NoiseKind.EBN0_DB,
    workers: Optional[int] = None,
) -> BerCurve:
    """BER per noise level, averaged over independent trials.

    The transmitted payload and wind realisation of trial ``j`` are shared by
    every noise level; the noise of (point ``i``, trial ``j``) has its own
    seed. Trials run on a thread pool and are merged by index.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kind = NoiseKind(kind)
    xs = np.asarray(list(abscissa_db), dtype=float)
    p = xs.size
    shape = (p, trials)
    be, bt, se, st = (np.zeros(shape, dtype=np.int64) for _ in range(4))

    def one(j: int):
        clean = simulate_channel(config, j)
        rows = []
        for i, x in enumerate(xs):
            res = receive(clean, config, NoiseSpec(kind, float(x)), derive_seed(config.seed, STREAM_NOISE, i, j), i)
            rows.append((res.bit_errors, res.bits_total, res.symbol_errors, res.transmitted.size))
        return rows

    if p:
        n_workers = min(workers or _default_workers(), trials)
        if n_workers == 1:
            results = [one(j) for j in range(trials)]
        else:
            with ThreadPoolExecutor(n_workers) as ex:
                results = list(ex.map(one, range(trials)))
        for j, rows in enumerate(results):
            for i, (a, b, c, d) in enumerate(rows):
                be[i, j], bt[i, j], se[i, j], st[i, j] = a, b, c, d
    return BerCurve(xs, kind, be, bt, se, st, config.seed, config.scheme)
