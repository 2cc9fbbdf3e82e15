"""
Parametric spectral models of the chip and bench optics.

Every element reports attenuation in dB (>= 0) so a chain is just a sum.
The ring is the exception at the API level: ``ring_transmission`` returns a
linear transmittance because the comb is naturally described that way;
``element_attenuation`` converts it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigError, OutOfRangeError
from .units import linear_to_db, linewidth_mhz, nm_to_ghz


@dataclass(frozen=True)
class RingSpec:
    """
    All-pass ring resonator comb.

    Parameters
    ----------
    center_wavelength : float
        Wavelength of the pumped resonance [nm].
    fsr : float
        Free spectral range [GHz]. Resonances are uniform in frequency.
    resonance_fwhm : float
        Full width at half depth of the pumped resonance [pm].
    extinction_depth : float
        On-resonance dip depth [dB].
    comb_span : (float, float)
        Wavelength interval [nm] where the model is valid.
    """

    center_wavelength: float = 1534.2
    fsr: float = 200.0
    resonance_fwhm: float = 42.0
    extinction_depth: float = 20.0
    comb_span: tuple = (1505.0, 1565.0)

    def __post_init__(self):
        if self.fsr <= 0 or self.resonance_fwhm <= 0 or self.extinction_depth <= 0:
            raise ConfigError("ring fsr, resonance_fwhm and extinction_depth must be > 0")
        lo, hi = self.comb_span
        if not lo < hi:
            raise ConfigError("ring comb_span must satisfy low < high")
        object.__setattr__(self, "comb_span", (float(lo), float(hi)))

    @property
    def linewidth_mhz(self) -> float:
        return linewidth_mhz(self.center_wavelength, self.resonance_fwhm)

    @property
    def q_factor(self) -> float:
        # derived only; the measured FWHM is the primary input
        return self.center_wavelength / (self.resonance_fwhm * 1e-3)

    def resonance_wavelength(self, m: int) -> float:
        """Wavelength of resonance ``m`` (0 = pumped, positive = higher frequency)."""
        return float(nm_to_ghz(1.0) / (nm_to_ghz(self.center_wavelength) + m * self.fsr))


@dataclass(frozen=True)
class NotchSpec:
    """
    Cascaded Bragg pump-rejection notch.

    The stop band is piecewise linear in dB: ``floor_rejection`` across the
    usable band, a steep edge of ``edge_slope`` down to ``shoulder_rejection``,
    a gentle shoulder that reaches ``insertion_loss + 3`` dB at half the 3-dB
    bandwidth, then the same steep slope down to the insertion loss.
    """

    center_wavelength: float = 1534.2
    fwhm_bandwidth: float = 5.5
    usable_bandwidth: float = 3.0
    floor_rejection: float = 80.0
    edge_slope: float = 22.3  # dB per 100 pm
    insertion_loss: float = 2.0
    shoulder_rejection: float = 20.0

    def __post_init__(self):
        if self.usable_bandwidth > self.fwhm_bandwidth:
            raise ConfigError("notch usable_bandwidth must not exceed fwhm_bandwidth")
        if self.floor_rejection <= 0 or self.edge_slope <= 0:
            raise ConfigError("notch floor_rejection and edge_slope must be > 0")
        if not (self.insertion_loss + 3.0 <= self.shoulder_rejection <= self.floor_rejection):
            raise ConfigError("notch shoulder must lie between insertion_loss + 3 dB and the floor")
        if self._knots()[0][2] > self.fwhm_bandwidth / 2:
            raise ConfigError("notch edge too shallow to fit inside the 3-dB bandwidth")

    def _knots(self):
        per_nm = self.edge_slope / 0.1
        half_u = self.usable_bandwidth / 2
        half_f = self.fwhm_bandwidth / 2
        x = [0.0, half_u, half_u + (self.floor_rejection - self.shoulder_rejection) / per_nm,
             half_f, half_f + 3.0 / per_nm]
        y = [self.floor_rejection, self.floor_rejection, self.shoulder_rejection,
             self.insertion_loss + 3.0, self.insertion_loss]
        return np.array(x), np.array(y)


@dataclass(frozen=True)
class PassbandSpec:
    """Tunable bandpass demultiplexing filter (flat top)."""

    center_wavelength: float
    bandwidth: float = 600.0  # pm
    extinction: float = 20.0
    insertion_loss: float = 0.0

    def __post_init__(self):
        if self.bandwidth <= 0 or self.extinction < 0 or self.insertion_loss < 0:
            raise ConfigError("passband bandwidth > 0, extinction >= 0 and insertion_loss >= 0 required")


@dataclass(frozen=True)
class FlatLoss:
    db: float
    name: str = "flat"

    def __post_init__(self):
        if not np.isfinite(self.db) or self.db < 0:
            raise ConfigError(f"flat loss {self.name!r} must be finite and >= 0 dB")


Element = Union[RingSpec, NotchSpec, PassbandSpec, FlatLoss]


@dataclass(frozen=True)
class SpectralChain:
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def __add__(self, other: "SpectralChain") -> "SpectralChain":
        return SpectralChain(self.elements + other.elements)

    def __len__(self):
        return len(self.elements)


def ring_transmission(lam, spec: RingSpec):
    """
    Linear through-port transmittance of the ring comb.

    Uses the periodic (Airy) all-pass form, which is Lorentzian around each
    resonance and has exactly ``resonance_fwhm`` width (converted to
    frequency at the pumped resonance) at half depth.
    """
    lam = np.asarray(lam, dtype=float)
    lo, hi = spec.comb_span
    if np.any((lam < lo) | (lam > hi)):
        raise OutOfRangeError(f"wavelength outside ring comb span [{lo}, {hi}] nm")
    detuning = nm_to_ghz(lam) - nm_to_ghz(spec.center_wavelength)
    dnu = spec.linewidth_mhz / 1e3
    finesse_coef = 1.0 / np.sin(np.pi * dnu / (2.0 * spec.fsr)) ** 2
    depth = 1.0 - 10.0 ** (-spec.extinction_depth / 10.0)
    t = 1.0 - depth / (1.0 + finesse_coef * np.sin(np.pi * detuning / spec.fsr) ** 2)
    return t if t.ndim else float(t)


def notch_transmission(lam, spec: NotchSpec):
    """Attenuation [dB] of the pump-rejection notch."""
    lam = np.asarray(lam, dtype=float)
    x, y = spec._knots()
    att = np.interp(np.abs(lam - spec.center_wavelength), x, y, right=spec.insertion_loss)
    return att if att.ndim else float(att)


def passband_transmission(lam, spec: PassbandSpec):
    """Attenuation [dB]: insertion loss in band, plus extinction outside."""
    lam = np.asarray(lam, dtype=float)
    inside = np.abs(lam - spec.center_wavelength) <= spec.bandwidth * 1e-3 / 2
    att = np.where(inside, spec.insertion_loss, spec.insertion_loss + spec.extinction)
    return att if att.ndim else float(att)


def element_attenuation(lam, element: Element):
    if isinstance(element, RingSpec):
        return linear_to_db(ring_transmission(lam, element))
    if isinstance(element, NotchSpec):
        return notch_transmission(lam, element)
    if isinstance(element, PassbandSpec):
        return passband_transmission(lam, element)
    if isinstance(element, FlatLoss):
        lam = np.asarray(lam, dtype=float)
        att = np.full(lam.shape, float(element.db))
        return att if att.ndim else float(att)
    raise TypeError(f"unsupported spectral element {type(element).__name__}")


def chain_transmission(lam, chain: SpectralChain):
    """Total attenuation [dB] of the chain (sum of element attenuations)."""
    if not len(chain):
        raise ConfigError("spectral chain must contain at least one element")
    total = 0.0
    for element in chain.elements:
        total = total + element_attenuation(lam, element)
    return total


def wavelength_grid(start_nm: float, stop_nm: float, step_pm: float) -> np.ndarray:
    n = int(round((stop_nm - start_nm) / (step_pm * 1e-3))) + 1
    if n < 1:
        raise ConfigError("empty wavelength grid")
    return np.linspace(start_nm, start_nm + (n - 1) * step_pm * 1e-3, n)


def write_spectrum_csv(path, wavelengths: Sequence[float], columns: dict, header_lines: Iterable[str] = ()):
    """Write ``wavelength_nm`` plus one attenuation column per entry of ``columns``."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wavelength_nm", *names])
        data = [np.asarray(columns[k], dtype=float) for k in names]
        for i, lam in enumerate(wavelengths):
            w.writerow([f"{lam:.4f}", *(f"{col[i]:.4f}" for col in data)])
