import pytest
from hypothesis import given, strategies as st

from chipent.errors import ConfigError, OutOfRangeError
from chipent.source import (PumpSpec, SourceSpec, brightness_from_rate, channel_grid,
                            demux_survival_factor, internal_rate, lorentzian_coherence_sigma,
                            pair_rate, write_channel_table)
from chipent.units import linewidth_mhz, nm_to_ghz

PUMP = PumpSpec()


@pytest.mark.parametrize("i, idler, signal", [(2, 1530.8, 1537.4), (11, 1516.0, 1552.6)])
def test_channel_grid_examples(cfg, i, idler, signal):
    p = channel_grid(cfg.pump, cfg.ring.fsr, i)
    assert p.lambda_idler == pytest.approx(idler, abs=0.5)
    assert p.lambda_signal == pytest.approx(signal, abs=0.5)


@pytest.mark.parametrize("fsr", [200.0, 211.5, 50.0])
def test_energy_conservation(fsr):
    for i in range(2, 13):
        p = channel_grid(PUMP, fsr, i)
        lhs = 1 / p.lambda_signal + 1 / p.lambda_idler
        assert lhs == pytest.approx(2 / PUMP.wavelength, rel=1e-6)
        ds = nm_to_ghz(p.lambda_signal) - nm_to_ghz(PUMP.wavelength)
        di = nm_to_ghz(p.lambda_idler) - nm_to_ghz(PUMP.wavelength)
        assert ds + di == pytest.approx(0.0, abs=1e-6)
        assert p.lambda_idler < PUMP.wavelength < p.lambda_signal


def test_grid_is_monotone():
    pairs = [channel_grid(PUMP, 200.0, i) for i in range(2, 13)]
    assert all(b.lambda_signal > a.lambda_signal for a, b in zip(pairs, pairs[1:]))
    assert all(b.lambda_idler < a.lambda_idler for a, b in zip(pairs, pairs[1:]))


@pytest.mark.parametrize("i", [1, 0, -3, 2.5])
def test_index_below_two_rejected(i):
    with pytest.raises(OutOfRangeError):
        channel_grid(PUMP, 200.0, i)


def test_outside_comb_span_rejected():
    with pytest.raises(OutOfRangeError):
        channel_grid(PUMP, 200.0, 30, comb_span=(1505.0, 1565.0))


def test_pair_rate_reference():
    r = pair_rate(SourceSpec(brightness=500, linewidth=5350), PUMP)
    assert r == pytest.approx(2.167e6, rel=1e-3)
    assert 1.9e6 <= r <= 2.3e6


def test_pair_rate_quadratic_in_power():
    s = SourceSpec()
    full = pair_rate(s, PumpSpec(in_ring_power=0.9))
    half = pair_rate(s, PumpSpec(in_ring_power=0.45))
    assert half == pytest.approx(full / 4)


@given(st.floats(0.01, 100.0), st.floats(0.1, 10.0))
def test_pair_rate_homogeneous(p, k):
    s = SourceSpec()
    assert pair_rate(s, PumpSpec(in_ring_power=p * k)) == pytest.approx(k * k * pair_rate(s, PumpSpec(in_ring_power=p)))


def test_pair_rate_unit_case():
    assert pair_rate(SourceSpec(brightness=1, linewidth=1), PumpSpec(in_ring_power=1)) == pytest.approx(1.0)


def test_brightness_reference():
    lw = linewidth_mhz(1534.2, 42.0)
    assert brightness_from_rate(2.1e6, PUMP, lw) == pytest.approx(485, abs=25)
    assert brightness_from_rate(2.1e6, PUMP, 5350) == pytest.approx(484.6, abs=0.1)


def test_brightness_unit_case():
    assert brightness_from_rate(4.0, PumpSpec(in_ring_power=2.0), 1.0) == pytest.approx(1.0)


def test_brightness_roundtrip():
    s = SourceSpec(brightness=512.3, linewidth=4321.0)
    assert brightness_from_rate(pair_rate(s, PUMP), PUMP, s.linewidth) == pytest.approx(512.3, rel=1e-14)


def test_brightness_rejects_nonpositive():
    with pytest.raises(ConfigError):
        brightness_from_rate(0.0, PUMP, 5350)


def test_demux_factor():
    assert demux_survival_factor() == 0.25
    assert 480 * demux_survival_factor() == pytest.approx(120)
    assert demux_survival_factor(deterministic=True) == 1.0


def test_rate_override_wins():
    s = SourceSpec(rate_overrides={3: 2.5e6})
    assert internal_rate(s, PUMP, 3) == 2.5e6
    assert internal_rate(s, PUMP, 2) == pytest.approx(pair_rate(s, PUMP))


def test_lorentzian_coherence_is_shorter_than_measured():
    assert lorentzian_coherence_sigma(5350) == pytest.approx(59.5, abs=0.5)


@pytest.mark.parametrize("kw", [dict(brightness=0), dict(coherence_sigma=0), dict(mean_pairs_per_window=0.5)])
def test_source_validation(kw):
    with pytest.raises(ConfigError):
        SourceSpec(**kw)


def test_pump_validation():
    with pytest.raises(ConfigError):
        PumpSpec(in_ring_power=0)


def test_channel_table_layout(tmp_path):
    path = tmp_path / "t.csv"
    write_channel_table(path, [channel_grid(PUMP, 200.0, i) for i in (2, 3)])
    lines = path.read_text().splitlines()
    assert lines[0] == "fsr,lambda_idler_nm,lambda_signal_nm"
    assert lines[1].startswith("2,")
