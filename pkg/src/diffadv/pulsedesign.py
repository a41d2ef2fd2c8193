"""Total pulse leakage of segment-pulse sets after the channel.

Each pulse ``p_i`` is sent alone; its channel output ``c_i`` goes through
every matched filter. Energy that reaches the filters ``j != i`` is leakage.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernel import Scenario
from .linksim import ChannelMode, build_pulse_set, channel_pass, matched_filter_bank


class Reduction(str, enum.Enum):
    DECISION = "decision"  # cross-filter energy at the common decision instant
    FULL = "full"  # cross-filter energy summed over the whole observation window


@dataclass(frozen=True)
class LeakageReport:
    n_dim: int
    t_sym: float
    leakage: float
    mode: ChannelMode
    seed: Optional[int]
    reduction: Reduction
    scenario: str


def _describe(scenario: Scenario) -> str:
    g = scenario.geometry
    return (
        f"L={g.distance:.6g} m, D={scenario.medium.D:.6g}, mu={scenario.wind.mean_speed:.6g}, "
        f"wind={scenario.wind.kernel.describe()}"
    )


def cross_filter_outputs(
    n_dim: int,
    t_sym: float,
    scenario: Scenario,
    mode=ChannelMode.MEAN,
    seed: Optional[int] = None,
    t_mem: float = 30.0,
    rate: float = 100.0,
    channel_rate: float = 1000.0,
    amplitude: float = 1.0,
) -> np.ndarray:
    """``y[i, j, n]``: filter ``j`` output when only pulse ``i`` is sent.

    The observation window is ``T_sym + T_mem``. The channel is not normalised.
    """
    mode = ChannelMode(mode)
    if mode is ChannelMode.REALIZATION and seed is None:
        raise ValueError("realization mode needs a seed")
    pulses = build_pulse_set(n_dim, t_sym, rate)
    n_win = int(round((t_sym + t_mem) * rate))
    out = np.empty((n_dim, n_dim, n_win))
    for i in range(n_dim):
        tx = np.zeros(n_win)
        tx[: pulses.samples_per_symbol] = amplitude * pulses.waveforms[i]
        # one seed for every pulse: all of them see the same wind realisation
        ch = channel_pass(tx, scenario, seed, t_mem, rate, channel_rate, rate, normalize=False, mode=mode)
        out[i] = matched_filter_bank(ch.samples, pulses)
    return out


def pulse_leakage(
    n_dim: int,
    t_sym: float,
    scenario: Scenario,
    mode=ChannelMode.MEAN,
    seed: Optional[int] = None,
    t_mem: float = 30.0,
    rate: float = 100.0,
    channel_rate: float = 1000.0,
    amplitude: float = 1.0,
    reduction=Reduction.DECISION,
) -> LeakageReport:
    """Total pulse leakage of an ``N``-segment pulse set with period ``T_sym``.

    ``reduction="decision"`` (default) samples all filters at the instant that
    maximises the summed own-filter energy ``sum_i y_ii[n]^2``, as the
    receiver does, and returns ``sum_{i != j} y_ij[d]^2``. ``"full"`` sums
    ``y_ij[n]^2`` over the whole window instead; note that it is non-zero even
    for an ideal channel because adjacent segments cross-correlate.
    """
    mode = ChannelMode(mode)
    reduction = Reduction(reduction)
    y = cross_filter_outputs(n_dim, t_sym, scenario, mode, seed, t_mem, rate, channel_rate, amplitude)
    off = ~np.eye(n_dim, dtype=bool)
    if n_dim == 1:
        value = 0.0
    elif reduction is Reduction.FULL:
        value = float(np.sum(y[off] ** 2))
    else:
        own = np.sum(y[np.arange(n_dim), np.arange(n_dim)] ** 2, axis=0)
        d = int(np.argmax(own))
        value = float(np.sum(y[off][:, d] ** 2))
    return LeakageReport(
        n_dim, float(t_sym), value, mode, seed if mode is ChannelMode.REALIZATION else None, reduction, _describe(scenario)
    )


def leakage_sweep(
    n_dims: Sequence[int],
    t_syms: Sequence[float],
    scenario: Scenario,
    mode=ChannelMode.MEAN,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    **kwargs,
) -> list[LeakageReport]:
    """Cartesian sweep, ``N`` outer and ``T_sym`` inner; cells run on a thread pool."""
    n_dims, t_syms = list(n_dims), list(t_syms)
    if not n_dims or not t_syms:
        raise ValueError("leakage sweep needs non-empty N and T_sym lists")
    cells = [(n, t) for n in n_dims for t in t_syms]
    n_workers = max(1, min(workers or os.cpu_count() or 1, len(cells)))

    def one(cell):
        return pulse_leakage(cell[0], cell[1], scenario, mode, seed, **kwargs)

    if n_workers == 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(n_workers) as ex:
        return list(ex.map(one, cells))
