"""Fast consistency checks behind ``chipent selftest``."""

from __future__ import annotations

import numpy as np

from . import analysis
from .correlate import brute_force_histogram, build_histogram
from .experiment import run_coincidence
from .source import brightness_from_rate, channel_grid, pair_rate
from .units import nm_to_ghz


def _histogram_oracle(rng) -> tuple:
    worst = 0
    for _ in range(20):
        a = np.sort(rng.integers(0, 20_000, rng.integers(0, 300)))
        b = np.sort(rng.integers(0, 20_000, rng.integers(0, 300)))
        fast = build_histogram(a, b, 7, (-700, 700), 1.0).counts
        worst = max(worst, int(np.abs(fast - brute_force_histogram(a, b, 7, (-700, 700))).max(initial=0)))
    return worst == 0, f"max bin difference {worst} over 20 random instances"


def _energy_conservation(cfg) -> tuple:
    worst = 0.0
    nu_p = nm_to_ghz(cfg.pump.wavelength)
    for i in cfg.channels or (2,):
        p = channel_grid(cfg.pump, cfg.ring.fsr, i)
        worst = max(worst, abs(nm_to_ghz(p.lambda_signal) + nm_to_ghz(p.lambda_idler) - 2 * nu_p) / nu_p)
    return worst < 1e-9, f"max relative frequency mismatch {worst:.1e}"


def _brightness_roundtrip(cfg) -> tuple:
    b = brightness_from_rate(pair_rate(cfg.source, cfg.pump), cfg.pump, cfg.source.linewidth)
    err = abs(b - cfg.source.brightness) / cfg.source.brightness
    return err < 1e-12, f"relative error {err:.1e}"


def _fit_recovery() -> tuple:
    phi = np.arange(20) * 2 * np.pi / 20
    y = 100 * (1 - 0.98 * np.cos(2 * phi + 0.3))
    fit = analysis.fit_fringe(analysis.FringeScan(phi, y, np.full(20, 50.0), 5.0))
    err = max(abs(fit.n0 - 100), abs(fit.visibility - 0.98), abs(fit.phase_offset - 0.3))
    return err < 1e-6, f"max parameter error {err:.1e}"


def _determinism(cfg) -> tuple:
    r1 = run_coincidence(cfg, cfg.channels[0] if cfg.channels else 2, duration=0.2)
    r2 = run_coincidence(cfg, cfg.channels[0] if cfg.channels else 2, duration=0.2)
    same = all(np.array_equal(x.times, y.times) for x, y in zip(r1.streams, r2.streams))
    return same, "two 0.2 s runs with one seed give identical tags"


def run_checks(cfg) -> list:
    rng = np.random.default_rng(cfg.seed)
    checks = [
        ("histogram oracle", lambda: _histogram_oracle(rng)),
        ("energy conservation", lambda: _energy_conservation(cfg)),
        ("brightness round trip", lambda: _brightness_roundtrip(cfg)),
        ("fringe fit recovery", _fit_recovery),
        ("seeded determinism", lambda: _determinism(cfg)),
    ]
    out = []
    for name, fn in checks:
        ok, detail = fn()
        out.append((name, bool(ok), detail))
    return out
