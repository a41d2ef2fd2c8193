"""Command line entry point: ``diffadv <subcommand> [--config FILE] [flags]``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import stats
from .config import ConfigError, ScenarioConfig, config_hash, parse_scenario, serialize
from .csvio import render_csv, write_atomic
from .linksim import NoiseKind, NoiseSpec, ber_sweep, cluster_accuracy, run_link
from .pulsedesign import leakage_sweep

SUBCOMMANDS = ("pdp", "autocorr", "stats", "ber", "link", "leakage", "defaults")
SEED_ENV = "DIFFADV_SEED"
NOISE_CONVENTION = (
    "noise: snr_db = 10 log10(Es / (M sigma_n^2)), Es = mean discrete symbol energy at the rx rate, "
    "M = rx samples per symbol; ebn0_db = snr_db - 10 log10(bits per symbol)"
)


def _float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (defaults used when omitted)")
    common.add_argument("--seed", type=int, help=f"master seed (fallback: the config seed, then ${SEED_ENV}, then 0)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--stem", help="output file stem instead of <subcommand>_<hash8>")
    p = argparse.ArgumentParser(prog="diffadv", description="Diffusion-advection channel toolkit")
    p.add_argument("--version", action="version", version=f"diffadv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pdp", parents=[common], help="power delay profile and its spectrum")
    sub.add_parser("autocorr", parents=[common], help="channel autocorrelation on a delay grid")
    s = sub.add_parser("stats", parents=[common], help="Peclet number, dispersion time, classification")
    s.add_argument("--tsym", type=_float_list, help="symbol periods to classify (s)")
    b = sub.add_parser("ber", parents=[common], help="BER sweep")
    b.add_argument("--trials", type=int)
    b.add_argument("--snr-db", type=_float_list)
    b.add_argument("--ebn0-db", type=_float_list)
    b.add_argument("--mode", choices=["mean", "realization"])
    b.add_argument("--workers", type=int)
    lk = sub.add_parser("link", parents=[common], help="single run with constellation dump")
    lk.add_argument("--snr-db", type=_float_list)
    lk.add_argument("--ebn0-db", type=_float_list)
    lk.add_argument("--mode", choices=["mean", "realization"])
    lg = sub.add_parser("leakage", parents=[common], help="total pulse leakage sweep")
    lg.add_argument("--tsym", type=_float_list)
    lg.add_argument("--ndim", type=_int_list)
    lg.add_argument("--mode", choices=["mean", "realization"])
    sub.add_parser("defaults", help="print the default configuration")
    return p


def resolve_seed(flag: Optional[int], cfg: ScenarioConfig) -> int:
    if flag is not None:
        seed = flag
    elif cfg.seed is not None:
        seed = cfg.seed
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: not an integer: {os.environ[SEED_ENV]!r}") from None
    else:
        seed = 0
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be in [0, 2^64), got {seed}")
    return seed


def load_config(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    with open(path, encoding="utf-8") as f:
        return parse_scenario(f.read())


class Emitter:
    """Names, headers and atomically writes the CSVs of one invocation."""

    def __init__(self, command: str, cfg: ScenarioConfig, seed: int, flags: dict, out: str, stem: Optional[str]):
        self.digest = config_hash(cfg, {"command": command, "seed": seed, **flags})
        self.seed = seed
        self.out = out
        self.stem = stem or f"{command}_{self.digest[:8]}"
        self.written: list[str] = []

    def header(self) -> str:
        return f"diffadv {__version__} config={self.digest[:16]} seed={self.seed}"

    def write(self, suffix: str, columns, rows, comments=()) -> str:
        path = os.path.join(self.out, f"{self.stem}{suffix}.csv")
        write_atomic(path, render_csv(columns, rows, [self.header(), *comments]))
        self.written.append(path)
        return path


def _tau_grid(cfg: ScenarioConfig) -> np.ndarray:
    a = cfg.analysis
    n = int(math.floor(a.tau_max / a.tau_step + 1e-9))
    return a.tau_step * np.arange(1, n + 1)


def cmd_pdp(cfg, seed, args, em: Emitter) -> None:
    sc = cfg.scenario()
    tau = _tau_grid(cfg)
    if sc.wind.kernel.is_white:
        curve = stats.pdp(tau, sc)
        check = stats.pdp_crosscheck(tau, sc)
        print(check.summary())
        route = "closed form"
    else:
        vals = stats.pdp_general(tau, sc)
        curve = stats.PdpCurve(tau, vals, float("nan"), None)
        route = "quadratic-form route (non-white wind)"
    spec = stats.pdp_spectrum(curve)
    em.write("", ["tau_s", "pdp_value"], zip(curve.tau, curve.values), [f"pdp: {route}"])
    em.write("_spectrum", ["freq_hz", "magnitude"], zip(spec.freq, spec.magnitude))
    print(f"peak delay {curve.peak_delay:.6g} s, -3 dB bandwidth {stats.bandwidth_3db(spec):.6g} Hz")


def cmd_autocorr(cfg, seed, args, em: Emitter) -> None:
    sc = cfg.scenario()
    a = cfg.analysis
    tau = a.acf_tau_max * np.arange(1, a.acf_points + 1) / a.acf_points
    grid = stats.autocorrelation_grid(tau, tau, a.t1, a.t2, sc)
    rows = [(t1, t2, a.t1, a.t2, grid[i, j]) for i, t1 in enumerate(tau) for j, t2 in enumerate(tau)]
    em.write("", ["tau1_s", "tau2_s", "t1_s", "t2_s", "r_h"], rows)


def cmd_stats(cfg, seed, args, em: Emitter) -> None:
    sc = cfg.scenario()
    g, m, w = sc.geometry, sc.medium, sc.wind
    pe = stats.peclet(g, m, w)
    td = stats.dispersion_time(g, m, w)
    tsyms = args.tsym if args.tsym is not None else [cfg.link.t_sym]
    classes = [stats.classify(t, td) for t in tsyms]
    print(f"Pe={pe:.2f}")
    print(f"Td={td:.4g} s")
    if classes:
        print("; ".join(f"{c.value} for T_sym={t:g} s" for t, c in zip(tsyms, classes)))
    em.write(
        "",
        ["t_sym_s", "peclet", "dispersion_time_s", "classification"],
        [(float(t), pe, td, c.value) for t, c in zip(tsyms, classes)],
    )


def _noise_from_flags(args, what: str):
    snr, ebn0 = getattr(args, "snr_db", None), getattr(args, "ebn0_db", None)
    if snr is not None and ebn0 is not None:
        raise ConfigError(f"{what}: give at most one of --snr-db and --ebn0-db")
    if snr is not None:
        return NoiseKind.SNR_DB, snr
    if ebn0 is not None:
        return NoiseKind.EBN0_DB, ebn0
    return None, None


def cmd_ber(cfg, seed, args, em: Emitter) -> None:
    kind, xs = _noise_from_flags(args, "ber")
    if kind is None:
        kind, xs = NoiseKind.EBN0_DB, list(cfg.ber.ebn0_db)
    trials = args.trials if args.trials is not None else cfg.ber.trials
    over = {"channel_mode": args.mode} if args.mode else {}
    lc = cfg.link_config(seed, **over)
    curve = ber_sweep(lc, xs, trials, kind, workers=args.workers)
    notes = [NOISE_CONVENTION, f"abscissa={kind.value} scheme={lc.scheme.value} channel={lc.channel_mode.value}"]
    rows = []
    for i, x in enumerate(curve.abscissa_db):
        for j in range(curve.trials):
            rows.append((float(x), j, int(curve.bit_errors[i, j]), int(curve.bits_total[i, j]), float(curve.ber[i, j])))
    em.write("", ["abscissa_db", "trial", "bit_errors", "bits_total", "ber"], rows, notes)
    em.write(
        "_summary",
        ["abscissa_db", "mean_ber", "stderr"],
        [(float(x), float(b), float(s)) for x, b, s in zip(curve.abscissa_db, curve.mean_ber, curve.stderr)],
        notes,
    )
    for x, b in zip(curve.abscissa_db, curve.mean_ber):
        print(f"{kind.value}={x:g}: BER={b:.6g}")


def cmd_link(cfg, seed, args, em: Emitter) -> None:
    kind, xs = _noise_from_flags(args, "link")
    over = {}
    if kind is not None:
        if len(xs) != 1:
            raise ConfigError("link: give exactly one noise level")
        over["noise"] = NoiseSpec(kind, xs[0])
    if args.mode:
        over["channel_mode"] = args.mode
    lc = cfg.link_config(seed, **over)
    res = run_link(lc)
    con = lc.constellation
    tx = con.points[res.transmitted]
    rows = [
        (k, tx[k, 0], tx[k, 1], res.equalized[k, 0], res.equalized[k, 1], int(res.decided[k]))
        for k in range(res.transmitted.size)
    ]
    noise = "none" if lc.noise is None else f"{lc.noise.kind.value}={lc.noise.value_db:g}"
    em.write(
        "",
        ["symbol_index", "tx_point_1", "tx_point_2", "rx_point_1", "rx_point_2", "decided_index"],
        rows,
        [NOISE_CONVENTION, f"scheme={lc.scheme.value} noise={noise} channel={lc.channel_mode.value}"],
    )
    acc = cluster_accuracy(res.equalized, res.transmitted) if res.transmitted.size else float("nan")
    print(
        f"symbols={res.transmitted.size} symbol_errors={res.symbol_errors} bit_errors={res.bit_errors} "
        f"sync_index={res.sync_index} cluster_accuracy={acc:.6g}"
    )


def cmd_leakage(cfg, seed, args, em: Emitter) -> None:
    lc = cfg.leakage
    ndims = args.ndim if args.ndim is not None else list(lc.n_dims)
    tsyms = args.tsym if args.tsym is not None else list(lc.t_syms)
    mode = args.mode or lc.mode
    sim = cfg.simulation
    reps = leakage_sweep(
        ndims,
        tsyms,
        cfg.scenario(),
        mode,
        seed if mode == "realization" else None,
        t_mem=sim.t_mem,
        rate=sim.rx_rate,
        channel_rate=sim.channel_rate,
        reduction=lc.reduction,
    )
    em.write(
        "",
        ["n_dim", "t_sym_s", "leakage", "mode", "seed"],
        [(r.n_dim, r.t_sym, r.leakage, r.mode.value, "" if r.seed is None else r.seed) for r in reps],
        [f"reduction={lc.reduction}"],
    )


_COMMANDS = {
    "pdp": cmd_pdp,
    "autocorr": cmd_autocorr,
    "stats": cmd_stats,
    "ber": cmd_ber,
    "link": cmd_link,
    "leakage": cmd_leakage,
}

_FLAG_KEYS = ("tsym", "ndim", "mode", "trials", "snr_db", "ebn0_db")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(serialize(ScenarioConfig()))
        return 0
    try:
        cfg = load_config(args.config)
        seed = resolve_seed(args.seed, cfg)
        flags = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
        em = Emitter(args.command, cfg, seed, flags, args.out, args.stem)
        _COMMANDS[args.command](cfg, seed, args, em)
    except ConfigError as exc:
        print(f"diffadv: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # module errors become a one-line diagnostic
        print(f"diffadv: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in em.written:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
