import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffadv.kernel import default_scenario
from diffadv.linksim import (
    ChannelMode,
    ChannelOutageError,
    EqualizerMode,
    LinkConfig,
    NoiseKind,
    NoiseSpec,
    Scheme,
    SyncError,
    add_awgn,
    ber_sweep,
    bit_errors,
    build_constellation,
    build_pulse_set,
    channel_pass,
    cluster_accuracy,
    derive_seed,
    detect,
    downconvert,
    matched_filter_bank,
    modulate,
    noise_reference,
    noise_variance,
    run_link,
    synchronize,
    train_mmse,
    upconvert,
)

TABLE = {
    Scheme.TWO: {(1, 0), (0, 1)},
    Scheme.FOUR: {(0, 0), (1, 0), (0, 1), (1, 1)},
    Scheme.EIGHT_SYMMETRIC: {(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2)},
    Scheme.EIGHT_WIDE: {(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1), (2, 1), (3, 1)},
    Scheme.EIGHT_TALL: {(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2), (0, 3), (1, 3)},
    Scheme.SIXTEEN: {(x, y) for x in range(4) for y in range(4)},
}


class TestPulses:
    def test_two_segment_pulse(self):
        p = build_pulse_set(2, 2.0, 100)
        assert np.all(p.waveforms[0, :100] == 1.0)
        assert np.all(p.waveforms[0, 100:] == 0.0)
        assert np.all(p.waveforms[1, 100:] == 1.0)

    def test_single_dimension(self):
        p = build_pulse_set(1, 2.0, 100)
        assert p.waveforms.shape == (1, 200)
        assert np.all(p.waveforms > 0)
        assert p.gram() == pytest.approx(np.eye(1), abs=1e-12)

    def test_four_segments(self):
        p = build_pulse_set(4, 2.0, 100)
        assert np.max(p.waveforms) == pytest.approx(math.sqrt(2.0), rel=1e-15)
        g = p.waveforms @ p.waveforms.T
        assert np.all(g[~np.eye(4, dtype=bool)] == 0.0)

    @given(st.integers(1, 6), st.integers(1, 40))
    def test_orthonormal(self, n, k):
        t_sym = n * k * 0.01  # T_sym * rate / N = k
        p = build_pulse_set(n, t_sym, 100)
        assert np.allclose(p.gram(), np.eye(n), rtol=0, atol=1e-12)
        assert np.all(p.waveforms >= 0)

    def test_non_integer_segment_rejected(self):
        with pytest.raises(ValueError, match="integer"):
            build_pulse_set(3, 2.0, 100)


class TestConstellations:
    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_table(self, scheme):
        c = build_constellation(scheme)
        pts = {tuple(int(v) for v in p) for p in c.points}
        assert pts == TABLE[scheme]
        assert c.size == len(TABLE[scheme])
        assert np.all(c.points >= 0)

    def test_cardinalities(self):
        assert [build_constellation(s).size for s in Scheme] == [2, 4, 8, 8, 8, 16]

    def test_two_and_wide_order(self):
        assert build_constellation("two").points.tolist() == [[1, 0], [0, 1]]
        wide = build_constellation("eight_wide").points.tolist()
        assert wide == [[0, 0], [1, 0], [2, 0], [3, 0], [0, 1], [1, 1], [2, 1], [3, 1]]

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_labels_are_a_permutation(self, scheme):
        c = build_constellation(scheme)
        assert sorted(c.labels.tolist()) == list(range(c.size))

    @pytest.mark.parametrize("scheme", [Scheme.FOUR, Scheme.SIXTEEN])
    def test_grid_neighbours_differ_in_one_bit(self, scheme):
        c = build_constellation(scheme)
        for i, p in enumerate(c.points):
            for j, q in enumerate(c.points):
                if np.sum(np.abs(p - q)) == 1:
                    assert bin(int(c.labels[i] ^ c.labels[j])).count("1") == 1

    def test_pilots_start_with_corners(self):
        c = build_constellation("two")
        assert c.pilots(4).tolist() == [0, 1, 0, 1]
        s = build_constellation("sixteen")
        first = {tuple(s.points[i]) for i in s.pilots(4)}
        assert first == {(3.0, 0.0), (0.0, 3.0), (3.0, 3.0), (0.0, 0.0)}


class TestModulation:
    p = build_pulse_set(2, 2.0, 100)

    def test_zero_symbol(self):
        c = build_constellation("four")
        assert np.all(modulate([0], c, self.p) == 0.0)

    def test_unit_symbol(self):
        c = build_constellation("four")
        assert np.array_equal(modulate([1], c, self.p), self.p.waveforms[0])

    @pytest.mark.parametrize("idx", range(16))
    def test_symbol_energy(self, idx):
        c = build_constellation("sixteen")
        w = modulate([idx], c, self.p)
        a1, a2 = c.points[idx]
        assert np.sum(w * w) * self.p.dt == pytest.approx(a1 * a1 + a2 * a2, rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            modulate([4], build_constellation("four"), self.p)


class TestRateConversion:
    def test_constant(self):
        assert np.all(upconvert(np.full(5, 2.5), 100, 1000) == 2.5)

    def test_length(self):
        assert upconvert(np.arange(7.0), 100, 1000).size == 70

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.sampled_from([2, 5, 10]))
    def test_round_trip(self, xs, k):
        x = np.array(xs)
        assert np.array_equal(downconvert(upconvert(x, 100, 100 * k), 100 * k, 100), x)

    def test_non_integer_rejected(self):
        with pytest.raises(ValueError):
            upconvert(np.ones(3), 300, 1000)
        with pytest.raises(ValueError):
            downconvert(np.ones(3), 1000, 300)


class TestChannelPass:
    def test_zero_input(self, advection):
        out = channel_pass(np.zeros(500), advection, seed=1)
        assert np.array_equal(out.samples, np.zeros(500))

    @pytest.mark.parametrize("mode", list(ChannelMode))
    def test_normalised_response(self, advection, mode):
        out = channel_pass(np.zeros(10), advection, seed=1, mode=mode)
        assert np.sum((out.response * out.gain) ** 2) == pytest.approx(1.0, abs=1e-9)

    def test_linearity_under_shared_seed(self, advection):
        rng = np.random.default_rng(0)
        w1 = np.repeat(rng.uniform(0, 1, 10), 100)
        w2 = np.repeat(rng.uniform(0, 1, 10), 100)
        a = channel_pass(w1, advection, 3).samples
        b = channel_pass(w2, advection, 3).samples
        ab = channel_pass(w1 + w2, advection, 3).samples
        assert np.allclose(ab, a + b, rtol=1e-12, atol=1e-15 * np.max(ab))

    def test_transport_delay(self, advection):
        tx = np.zeros(600)
        tx[:100] = 1.0
        out = channel_pass(tx, advection, 2, normalize=False)
        # one second release reaches the receiver about L / mu = 2 s later
        assert 200 <= int(np.argmax(out.samples)) <= 320

    def test_mean_mode_ignores_seed(self, dispersive):
        tx = np.repeat([1.0, 0.0, 2.0], 100)
        a = channel_pass(tx, dispersive, 1, mode="mean").samples
        b = channel_pass(tx, dispersive, 2, mode="mean").samples
        assert np.array_equal(a, b) and a.max() > 0

    def test_outage_reported(self):
        # strong meander with a tiny puff: this realisation never reaches the receiver
        sc = default_scenario(mean_speed=0.07, intensity=0.0025)
        hits = 0
        for seed in range(6):
            try:
                channel_pass(np.zeros(10), sc, seed, t_mem=8.0)
            except ChannelOutageError:
                hits += 1
        assert hits > 0


class TestNoise:
    con = build_constellation("four")
    ref = noise_reference(con, build_pulse_set(2, 2.0, 100))

    def test_infinite_snr(self):
        x = np.linspace(0, 1, 50)
        assert np.array_equal(add_awgn(x, NoiseSpec.snr(math.inf), self.ref, 1), x)
        assert np.array_equal(add_awgn(x, None, self.ref, 1), x)

    @pytest.mark.parametrize("spec", [NoiseSpec.snr(3.0), NoiseSpec.ebn0(-7.0)])
    def test_calibration(self, spec):
        n = 100_000
        var = noise_variance(spec, self.ref)
        y = add_awgn(np.zeros(n), spec, self.ref, 12)
        se = var * math.sqrt(2.0 / (n - 1))
        assert abs(y.var(ddof=1) - var) < 3 * se

    def test_convention(self):
        # four points, average energy 1, unit-energy pulses: E_s = 200 discrete units over M = 200
        assert self.ref.symbol_energy == pytest.approx(100.0)
        assert noise_variance(NoiseSpec.snr(0.0), self.ref) == pytest.approx(0.5)

    def test_ebn0_equals_snr_for_one_bit(self):
        ref = noise_reference(build_constellation("two"), build_pulse_set(2, 2.0, 100))
        assert noise_variance(NoiseSpec.snr(4.0), ref) == noise_variance(NoiseSpec.ebn0(4.0), ref)

    def test_ebn0_offset(self):
        a = noise_variance(NoiseSpec.snr(10.0), self.ref)
        b = noise_variance(NoiseSpec.ebn0(10.0 - 10 * math.log10(2)), self.ref)
        assert a == pytest.approx(b, rel=1e-12)


class TestMatchedFilter:
    p = build_pulse_set(2, 2.0, 100)

    def test_peaks_on_own_pulse(self):
        y = matched_filter_bank(np.concatenate([self.p.waveforms[0], np.zeros(200)]), self.p)
        assert y.shape == (2, 400)
        assert y[0].max() == pytest.approx(1.0, rel=1e-12)
        # decision instant of a symbol starting at 0 is L - 1
        assert y[0, 199] == pytest.approx(1.0, rel=1e-12)
        assert y[1, 199] == 0.0

    def test_decision_instant(self):
        c = build_constellation("four")
        r = modulate([3], c, self.p)
        y = matched_filter_bank(np.concatenate([r, np.zeros(50)]), self.p)
        assert y[:, 199] == pytest.approx([1.0, 1.0], rel=1e-12)

    def test_zero(self):
        assert np.all(matched_filter_bank(np.zeros(300), self.p) == 0)

    @given(st.integers(0, 150))
    def test_shift_covariance(self, s):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 200)
        y0 = matched_filter_bank(np.concatenate([x, np.zeros(200)]), self.p)
        ys = matched_filter_bank(np.concatenate([np.zeros(s), x, np.zeros(200 - s)]), self.p)
        assert np.allclose(ys[:, s:], y0[:, : 400 - s], rtol=0, atol=1e-12)


def _delayed_stream(delay, payload=True):
    c = build_constellation("four")
    p = build_pulse_set(2, 2.0, 100)
    pil = c.pilots(10)
    pay = np.random.default_rng(4).integers(0, 4, 30 if payload else 0)
    tx = modulate(np.concatenate([pil, pay]), c, p)
    rx = np.concatenate([np.zeros(delay), tx, np.zeros(400)])
    tpl = matched_filter_bank(np.concatenate([modulate(pil, c, p), np.zeros(199)]), p)
    return matched_filter_bank(rx, p), tpl


class TestSynchronize:
    @pytest.mark.parametrize("delay", [0, 1, 37, 250, 1999])
    def test_known_delay_exact_for_isolated_pilots(self, delay):
        mf, tpl = _delayed_stream(delay, payload=False)
        d = synchronize(mf, tpl, 200, reference_energy=float(np.sum(tpl * tpl)))
        assert d == delay + 199

    @pytest.mark.parametrize("delay", [0, 37, 1999])
    def test_known_delay_with_payload(self, delay):
        # trailing payload perturbs the correlation by a few samples at most
        mf, tpl = _delayed_stream(delay)
        d = synchronize(mf, tpl, 200, reference_energy=float(np.sum(tpl * tpl)))
        assert abs(d - (delay + 199)) <= 2

    @given(st.floats(1e-6, 1e6))
    def test_scaling_invariance(self, c):
        mf, tpl = _delayed_stream(123)
        a = synchronize(mf, tpl, 200)
        assert synchronize(c * mf, tpl, 200) == a

    def test_tie_breaks_early(self):
        mf = np.array([[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]])
        tpl = np.array([[0.0, 1.0]])
        assert synchronize(mf, tpl, 2) == 2

    def test_no_signal(self):
        with pytest.raises(SyncError):
            synchronize(np.zeros((2, 50)), np.ones((2, 10)), 5)


class TestEqualizer:
    pts = build_constellation("four").points[[1, 2, 3, 0, 1, 2, 3, 0, 1, 2]]

    def test_identity(self):
        eq = train_mmse(self.pts, self.pts)
        assert np.allclose(eq.W, np.eye(2), atol=1e-6)
        assert np.allclose(eq.b, 0, atol=1e-6)

    def test_scaled(self):
        eq = train_mmse(2 * self.pts, self.pts)
        assert np.allclose(eq.W, 0.5 * np.eye(2), atol=1e-6)

    def test_offset(self):
        c = np.array([0.3, -0.7])
        eq = train_mmse(self.pts + c, self.pts)
        assert np.allclose(eq.b, -c, atol=1e-6)
        assert np.allclose(eq.apply(self.pts + c), self.pts, atol=1e-6)

    def test_diagonal_mode(self):
        eq = train_mmse(self.pts * [2.0, 4.0] + 1.0, self.pts, EqualizerMode.DIAGONAL)
        assert np.allclose(eq.W, np.diag([0.5, 0.25]), atol=1e-6)
        assert eq.W[0, 1] == 0.0

    def test_too_few_pilots(self):
        with pytest.raises(ValueError, match="at least 3"):
            train_mmse(self.pts[:2], self.pts[:2])

    def test_collinear_pilots_stay_finite(self):
        y = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        eq = train_mmse(y, y)
        assert np.all(np.isfinite(eq.W))


class TestDetect:
    two = build_constellation("two")

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_on_point(self, scheme):
        c = build_constellation(scheme)
        assert detect(c.points, c).tolist() == list(range(c.size))

    def test_nearest(self):
        assert detect([0.9, 0.1], self.two) == 0

    def test_tie(self):
        assert detect([0.5, 0.5], self.two) == 0

    def test_bit_errors(self):
        c = build_constellation("four")
        # (0,0) vs (1,1) differ in both Gray bits
        assert bit_errors([0], [3], c) == 2
        assert bit_errors([0, 1], [0, 1], c) == 0


class TestLink:
    @pytest.mark.parametrize("scheme", ["two", "four"])
    def test_noiseless_error_free(self, advection, scheme):
        res = run_link(LinkConfig(advection, scheme, n_symbols=300, seed=11))
        assert res.symbol_errors == 0 and res.bit_errors == 0
        assert res.transmitted.size == 300

    def test_clusters_at_10db(self, advection):
        res = run_link(LinkConfig(advection, "four", n_symbols=300, noise=NoiseSpec.snr(10.0), seed=3))
        assert cluster_accuracy(res.observations, res.transmitted) > 0.99

    def test_deterministic(self, advection):
        cfg = LinkConfig(advection, "sixteen", n_symbols=120, noise=NoiseSpec.ebn0(-10.0), seed=8)
        a, b = run_link(cfg), run_link(cfg)
        assert np.array_equal(a.decided, b.decided)
        assert np.array_equal(a.observations, b.observations)
        assert a.sync_index == b.sync_index and a.bit_errors == b.bit_errors

    def test_counts_bounded(self, advection):
        cfg = LinkConfig(advection, "eight_tall", n_symbols=200, noise=NoiseSpec.ebn0(-20.0), seed=1)
        res = run_link(cfg)
        assert 0 < res.symbol_errors <= 200
        assert res.bit_errors <= 3 * res.symbol_errors
        assert res.bits_total == 600
        assert res.decided.size == 200  # pilots and trailing symbols are not counted

    def test_mean_channel(self, dispersive):
        res = run_link(LinkConfig(dispersive, "four", n_symbols=200, channel_mode="mean", seed=2))
        assert 0 <= res.ser < 1

    def test_config_validation(self, advection):
        with pytest.raises(ValueError):
            LinkConfig(advection, n_dim=3)
        with pytest.raises(ValueError):
            LinkConfig(advection, n_pilots=2)
        with pytest.raises(ValueError):
            LinkConfig(advection, channel_rate=1050.0)


class TestBerSweep:
    def test_noiseless_point(self, advection):
        for scheme in ("two", "four"):
            c = ber_sweep(LinkConfig(advection, scheme, n_symbols=300), [math.inf], 1)
            assert c.mean_ber.tolist() == [0.0]
            assert np.isnan(c.stderr).all()

    def test_worker_count_does_not_matter(self, advection):
        cfg = LinkConfig(advection, "eight_wide", n_symbols=100, seed=5)
        a = ber_sweep(cfg, [-20.0, -10.0], 3, workers=1)
        b = ber_sweep(cfg, [-20.0, -10.0], 3, workers=3)
        assert np.array_equal(a.bit_errors, b.bit_errors)

    def test_shape_and_kind(self, advection):
        c = ber_sweep(LinkConfig(advection, "two", n_symbols=50), [-20.0, 0.0], 2, NoiseKind.SNR_DB)
        assert c.bit_errors.shape == (2, 2) and c.kind is NoiseKind.SNR_DB
        assert np.all(c.bits_total == 50)

    def test_empty_sweep(self, advection):
        c = ber_sweep(LinkConfig(advection, n_symbols=10), [], 2)
        assert c.mean_ber.size == 0

    def test_rejects_zero_trials(self, advection):
        with pytest.raises(ValueError):
            ber_sweep(LinkConfig(advection), [0.0], 0)


def test_seed_tree_is_order_free():
    a = np.random.default_rng(derive_seed(7, 2, 1, 3)).random(4)
    b = np.random.default_rng(derive_seed(7, 2, 1, 3)).random(4)
    c = np.random.default_rng(derive_seed(7, 2, 3, 1)).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
