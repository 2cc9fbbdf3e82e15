import numpy as np
import pytest

from chipent.correlate import build_histogram
from chipent.errors import ConfigError, RegimeError
from chipent.franson import (PHASE_PRESETS, FransonSpec, central_port_probability, fringe_expectation,
                             path_delay_mismatch, path_outcome, phase_grid, route_pair, route_pairs,
                             validate_regime)
from chipent.tagsim import make_rng

N = 400_000


def _route(phase, v=1.0, n=N, seed=1, excess=0.0):
    spec = FransonSpec(phase=phase, visibility_cap=v, excess_loss=excess)
    alive = np.ones(n, bool)
    ds, di, s, i = route_pairs(spec, alive, alive, make_rng(seed))
    both = s & i
    side = ds != di
    return ds, di, s, i, both, side


def _amplitude_probabilities(phase):
    """Brute-force enumeration over paths and ports from single-photon amplitudes."""
    amp = {("+", "S"): 0.5, ("+", "L"): 0.5j * np.exp(1j * phase),
           ("-", "S"): 0.5, ("-", "L"): -0.5j * np.exp(1j * phase)}
    out = {}
    for ps in "+-":
        for pi in "+-":
            out[(ps, pi, "central")] = abs(amp[ps, "S"] * amp[pi, "S"] + amp[ps, "L"] * amp[pi, "L"]) ** 2
            out[(ps, pi, "SL")] = abs(amp[ps, "S"] * amp[pi, "L"]) ** 2
            out[(ps, pi, "LS")] = abs(amp[ps, "L"] * amp[pi, "S"]) ** 2
    return out


class TestRegime:
    def test_nominal_ok(self):
        validate_regime(FransonSpec(imbalance=350), 110, 100)

    def test_too_short(self):
        with pytest.raises(RegimeError, match="first-order interference regime"):
            validate_regime(FransonSpec(imbalance=50), 110, 100)

    def test_too_long(self):
        with pytest.raises(RegimeError, match="exceeds pump coherence"):
            validate_regime(FransonSpec(imbalance=1e9), 110, 100)

    @pytest.mark.parametrize("kw", [dict(visibility_cap=1.5), dict(imbalance=0), dict(excess_loss=-1)])
    def test_spec_validation(self, kw):
        with pytest.raises(ConfigError):
            FransonSpec(**kw)


class TestRouting:
    def test_side_probabilities(self):
        ds, di, *_ = _route(0.3)
        assert np.mean((ds == 0) & (di == 350)) == pytest.approx(0.25, abs=4 * np.sqrt(0.1875 / N))
        assert np.mean((ds == 350) & (di == 0)) == pytest.approx(0.25, abs=4 * np.sqrt(0.1875 / N))

    def test_fringe_minimum(self):
        ds, di, s, i, both, side = _route(0.0)
        assert both[~side].sum() == 0
        assert np.mean(both[side]) == pytest.approx(0.25, abs=0.005)

    def test_fringe_maximum(self):
        ds, di, s, i, both, side = _route(np.pi / 2)
        central = np.mean(both & ~side)
        per_side = np.mean(both & (ds < di))
        assert central == pytest.approx(0.25, abs=0.004)
        assert per_side == pytest.approx(1 / 16, abs=0.002)

    def test_incoherent_limit(self):
        rates = []
        for phi in (0.0, 0.7, np.pi / 2):
            ds, di, s, i, both, side = _route(phi, v=0.0)
            assert np.mean(~side) == pytest.approx(0.5, abs=0.004)
            rates.append(np.mean(both & ~side))
        assert np.ptp(rates) < 0.004
        assert np.mean(rates) == pytest.approx(1 / 8, abs=0.003)

    def test_singles_half_per_photon(self):
        for phi in (0.0, 1.1):
            _, _, s, i, _, _ = _route(phi)
            assert np.mean(s) == pytest.approx(0.5, abs=0.004)
            assert np.mean(i) == pytest.approx(0.5, abs=0.004)

    @pytest.mark.parametrize("phase", [0.0, 0.4, np.pi / 3, np.pi / 2, 2.5])
    def test_matches_amplitude_oracle(self, phase):
        amp = _amplitude_probabilities(phase)
        ds, di, s, i, both, side = _route(phase, n=600_000, seed=3)
        tol = 4 * np.sqrt(0.25 / 600_000)
        for ps, s_mask in (("+", s), ("-", ~s)):
            for pi, i_mask in (("+", i), ("-", ~i)):
                joint = s_mask & i_mask
                assert np.mean(joint & ~side) == pytest.approx(amp[ps, pi, "central"], abs=tol)
                assert np.mean(joint & (ds < di)) == pytest.approx(amp[ps, pi, "SL"], abs=tol)
                assert np.mean(joint & (ds > di)) == pytest.approx(amp[ps, pi, "LS"], abs=tol)

    def test_excess_loss_per_photon(self):
        _, _, s, _, _, _ = _route(0.5, excess=3.0)
        assert np.mean(s) == pytest.approx(0.5 * 10 ** -0.3, abs=0.004)

    def test_dead_photons_stay_dead(self):
        spec = FransonSpec()
        dead = np.zeros(1000, bool)
        _, _, s, i = route_pairs(spec, dead, dead, make_rng(0))
        assert not s.any() and not i.any()

    def test_route_pair_weights(self):
        spec = FransonSpec(phase=np.pi / 2, excess_loss=0.0)
        r = make_rng(9)
        out = [route_pair(spec, r) for _ in range(20_000)]
        w = {}
        for ds, di, wt in out:
            key = "side" if ds != di else "central"
            w.setdefault(key, set()).add(round(wt, 12))
        assert w["side"] == {0.25}
        assert w["central"] == {0.5}
        frac_side = np.mean([ds != di for ds, di, _ in out])
        assert frac_side == pytest.approx(0.5, abs=0.015)

    def test_side_peaks_phase_independent(self):
        counts = []
        for k, phi in enumerate(np.linspace(0, np.pi, 9)):
            ds, di, s, i, both, side = _route(phi, n=100_000, seed=k)
            counts.append((both & side).sum())
        counts = np.array(counts)
        assert np.all(np.abs(counts - counts.mean()) < 3 * np.sqrt(counts.mean()) + 1)


def test_three_peaks():
    r = make_rng(8)
    n = 20_000
    t = np.sort(r.uniform(0, 1e12, n))
    alive = np.ones(n, bool)
    ds, di, s, i = route_pairs(FransonSpec(phase=np.pi / 2), alive, alive, r)
    a = np.sort(np.floor(t + ds)[s].astype(np.int64))
    b = np.sort(np.floor(t + di)[i].astype(np.int64))
    h = build_histogram(a, b, 10, (-1000, 1000))
    peaks = h.centers[h.counts > 0.2 * h.counts.max()]
    assert set(np.round(peaks / 350).astype(int)) == {-1, 0, 1}


def test_path_outcome():
    assert path_outcome("SL", 350) == path_outcome("SL", 350.0)
    o = path_outcome("LS", 350)
    assert (o.signal_delay, o.idler_delay) == (350.0, 0.0)


class TestFringeLaw:
    def test_examples(self):
        assert fringe_expectation(100, 1.0, np.pi / 2) == pytest.approx(200)
        assert fringe_expectation(100, 0.98, 0.0) == pytest.approx(2)

    def test_period_mean(self):
        phi = np.linspace(0, np.pi, 1000, endpoint=False)
        assert np.mean(fringe_expectation(100, 0.7, phi)) == pytest.approx(100)

    def test_period_pi(self):
        phi = np.linspace(0, 3, 50)
        np.testing.assert_allclose(fringe_expectation(80, 0.9, phi), fringe_expectation(80, 0.9, phi + np.pi))

    def test_port_probability_consistent(self):
        assert central_port_probability(1.0, 0.0) == 0.0
        assert central_port_probability(1.0, np.pi / 2) == pytest.approx(0.5)


class TestDelayMismatch:
    def test_zero_dispersion(self):
        assert path_delay_mismatch(1537.4, 1530.8, 0.0, 1.0) == 0.0

    def test_fibre_example(self):
        assert path_delay_mismatch(1550.0, 1530.0, 17.0, 3.5e-5) == pytest.approx(0.0119, abs=1e-4)

    def test_linear_in_length(self):
        a = path_delay_mismatch(1550.0, 1530.0, 17.0, 1e-3)
        assert path_delay_mismatch(1550.0, 1530.0, 17.0, 2e-3) == pytest.approx(2 * a)

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            path_delay_mismatch(1550.0, 1530.0, -17.0, 1.0)


def test_phase_presets():
    assert phase_grid(PHASE_PRESETS["2pi/20"]).size == 20
    assert phase_grid(PHASE_PRESETS["pi/8"]).size == 16
    assert phase_grid(PHASE_PRESETS["pi/8"])[1] == pytest.approx(np.pi / 8)
