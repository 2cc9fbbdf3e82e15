"""Pair-source physics: channel grid, generation rate and brightness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import ConfigError, OutOfRangeError
from .units import ghz_to_nm, nm_to_ghz


@dataclass(frozen=True)
class PumpSpec:
    wavelength: float = 1534.2  # nm
    input_power: float = 2.8  # mW, after the polarisation controller
    in_ring_power: float = 0.9  # mW
    coherence_time: float = 100.0  # ns

    def __post_init__(self):
        if self.input_power <= 0 or self.in_ring_power <= 0:
            raise ConfigError("pump powers must be > 0")
        if self.coherence_time <= 0:
            raise ConfigError("pump coherence_time must be > 0")


@dataclass(frozen=True)
class ChannelPair:
    fsr_index: int
    lambda_signal: float
    lambda_idler: float


@dataclass(frozen=True)
class SourceSpec:
    """
    Pair-source figures of merit.

    ``rate_overrides`` maps an FSR index to a measured internal pair rate in
    pairs/s and takes precedence over the brightness model for that channel.
    """

    brightness: float = 500.0  # pairs/s/mW^2/MHz
    linewidth: float = 5350.0  # MHz
    coherence_sigma: float = 110.0  # ps
    mean_pairs_per_window: float = 3e-4
    rate_overrides: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.brightness <= 0 or self.linewidth <= 0 or self.coherence_sigma <= 0:
            raise ConfigError("brightness, linewidth and coherence_sigma must be > 0")
        if not 0 <= self.mean_pairs_per_window < 0.1:
            raise ConfigError("mean_pairs_per_window must be << 1")
        object.__setattr__(self, "rate_overrides",
                           {int(k): float(v) for k, v in dict(self.rate_overrides).items()})


def channel_grid(pump: PumpSpec, fsr: float, i: int,
                 comb_span: Optional[tuple] = None) -> ChannelPair:
    """Signal/idler resonances ``i`` FSRs either side of the pump (energy conservation)."""
    if int(i) != i or i < 2:
        raise OutOfRangeError(f"FSR index must be an integer >= 2 (got {i}); "
                              "closer channels sit under the pump notch")
    nu_p = nm_to_ghz(pump.wavelength)
    lam_s = float(ghz_to_nm(nu_p - i * fsr))
    lam_i = float(ghz_to_nm(nu_p + i * fsr))
    if comb_span is not None:
        lo, hi = comb_span
        if lam_i < lo or lam_s > hi:
            raise OutOfRangeError(f"FSR {i} channel pair ({lam_i:.2f}, {lam_s:.2f}) nm "
                                  f"outside comb span [{lo}, {hi}] nm")
    return ChannelPair(int(i), lam_s, lam_i)


def pair_rate(source: SourceSpec, pump: PumpSpec) -> float:
    """Internal pair rate [pairs/s] = brightness * P_ring^2 * linewidth."""
    return source.brightness * pump.in_ring_power ** 2 * source.linewidth


def brightness_from_rate(rate: float, pump: PumpSpec, linewidth: float) -> float:
    if rate <= 0 or linewidth <= 0:
        raise ConfigError("rate and linewidth must be > 0")
    return rate / (pump.in_ring_power ** 2 * linewidth)


def demux_survival_factor(deterministic: bool = False) -> float:
    """
    Probability that a pair is split into the right arms.

    A 50/50 splitter sends each photon to either filter arm independently,
    so only one of four orderings keeps both photons.
    """
    return 1.0 if deterministic else 0.25


def internal_rate(source: SourceSpec, pump: PumpSpec, fsr_index: int) -> float:
    return source.rate_overrides.get(int(fsr_index), pair_rate(source, pump))


def lorentzian_coherence_sigma(linewidth_mhz: float) -> float:
    """Coherence time 1/(pi * dnu) [ps] implied by a Lorentzian line."""
    return 1.0 / (np.pi * linewidth_mhz * 1e6) * 1e12


def write_channel_table(path, pairs: Iterable[ChannelPair], header_lines: Iterable[str] = ()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fsr", "lambda_idler_nm", "lambda_signal_nm"])
        for p in pairs:
            w.writerow([p.fsr_index, f"{p.lambda_idler:.4f}", f"{p.lambda_signal:.4f}"])
