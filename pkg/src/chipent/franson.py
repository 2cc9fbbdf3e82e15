"""
Folded unbalanced Michelson (Franson) interferometer at the pair level.

Both photons of a pair cross the same interferometer, each taking the
short (S) or long (L) arm. SL and LS land in the side peaks at +/- the
imbalance; SS and LL are indistinguishable and interfere in the central
peak. Only one output port is monitored, so each photon reaches the
detector with probability 1/2 on average; in the central peak the joint
port statistics carry the two-photon fringe::

    P(both monitored | SS or LL) = (1 - V cos 2phi) / 4
    P(both monitored | SL or LS) = 1 / 4

which gives the central peak 2x the side-peak rate on average, 0 at the
fringe minimum and 4x at the maximum when V = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RegimeError
from .tagsim import survival_probability

SL, LS, SS, LL = "SL", "LS", "SS", "LL"
REGIME_GUARD = 2.0


@dataclass(frozen=True)
class FransonSpec:
    imbalance: float = 350.0  # ps
    phase: float = 0.0  # rad, single-photon phase; the fringe goes as cos(2 * phase)
    excess_loss: float = 1.0  # dB per photon, on top of the port split
    visibility_cap: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility_cap <= 1.0:
            raise ConfigError("visibility_cap must be in [0, 1]")
        if self.imbalance <= 0 or self.excess_loss < 0:
            raise ConfigError("imbalance must be > 0 and excess_loss >= 0")


@dataclass(frozen=True)
class PathOutcome:
    label: str
    signal_delay: float
    idler_delay: float


def validate_regime(spec: FransonSpec, coherence_sigma: float, pump_coherence_ns: float) -> None:
    """
    Require single-photon coherence << imbalance << pump coherence
    (each inequality with a factor ``REGIME_GUARD`` of margin).
    """
    if not coherence_sigma * REGIME_GUARD < spec.imbalance:
        raise RegimeError(
            f"first-order interference regime: imbalance {spec.imbalance} ps must exceed "
            f"{REGIME_GUARD:g} x single-photon coherence ({coherence_sigma} ps)")
    if not spec.imbalance < pump_coherence_ns * 1e3 / REGIME_GUARD:
        raise RegimeError(
            f"imbalance {spec.imbalance} ps exceeds pump coherence "
            f"({pump_coherence_ns} ns / {REGIME_GUARD:g})")


def path_outcome(label: str, imbalance: float) -> PathOutcome:
    delays = {"S": 0.0, "L": float(imbalance)}
    return PathOutcome(label, delays[label[0]], delays[label[1]])


def central_port_probability(visibility: float, phase: float) -> float:
    return (1.0 - visibility * np.cos(2.0 * phase)) / 4.0


def route_pair(spec: FransonSpec, rng: np.random.Generator):
    """
    Route one pair: returns (signal delay, idler delay, acceptance weight).

    The weight is the probability that both photons leave through the
    monitored port and survive the excess loss.
    """
    u = rng.random()
    t2 = survival_probability(spec.excess_loss) ** 2
    if u < 0.25:
        return 0.0, spec.imbalance, t2 / 4.0
    if u < 0.5:
        return spec.imbalance, 0.0, t2 / 4.0
    common = 0.0 if rng.random() < 0.5 else spec.imbalance
    return common, common, t2 * central_port_probability(spec.visibility_cap, spec.phase)


def route_pairs(spec: FransonSpec, signal_alive, idler_alive, rng: np.random.Generator,
                apply_excess: bool = True):
    """
    Vectorised routing of many pairs.

    Returns ``(signal_delay, idler_delay, signal_kept, idler_kept)``. A photon
    is kept if it was alive on entry, exits the monitored port and, when
    ``apply_excess``, survives the excess loss. Ports are drawn jointly so
    the singles (1/2 per photon) and the coincidence fringe are both right.
    """
    s_alive = np.asarray(signal_alive, bool)
    i_alive = np.asarray(idler_alive, bool)
    n = s_alive.size
    u = rng.random(n)
    side_sl = u < 0.25
    side_ls = (u >= 0.25) & (u < 0.5)
    central = u >= 0.5
    long_common = central & (rng.random(n) < 0.5)

    d = float(spec.imbalance)
    sig_delay = np.where(side_ls | long_common, d, 0.0)
    idl_delay = np.where(side_sl | long_common, d, 0.0)

    # joint port draw; '+' is the monitored port
    p_same = central_port_probability(spec.visibility_cap, spec.phase)  # each of ++ and --
    v = rng.random(n)
    w = rng.random(n)
    s_plus_side = v < 0.5
    i_plus_side = w < 0.5
    # central: ++ [0, p), -- [p, 2p), +- [2p, 2p + q), -+ rest, with q = 1/2 - p
    q = 0.5 - p_same
    s_plus_c = (v < p_same) | ((v >= 2 * p_same) & (v < 2 * p_same + q))
    i_plus_c = (v < p_same) | (v >= 2 * p_same + q)
    s_plus = np.where(central, s_plus_c, s_plus_side)
    i_plus = np.where(central, i_plus_c, i_plus_side)

    s_kept = s_alive & s_plus
    i_kept = i_alive & i_plus
    if apply_excess and spec.excess_loss > 0:
        t = survival_probability(spec.excess_loss)
        s_kept &= rng.random(n) < t
        i_kept &= rng.random(n) < t
    return sig_delay, idl_delay, s_kept, i_kept


def fringe_expectation(n0, visibility, phase):
    """Expected central-peak counts, N0 * (1 - V cos 2phi)."""
    return n0 * (1.0 - visibility * np.cos(2.0 * np.asarray(phase, dtype=float)))


def path_delay_mismatch(lambda_s: float, lambda_i: float, dispersion: float, fiber_length: float) -> float:
    """
    Arrival skew [ps] between SS and LL contributions from fibre dispersion:
    ``dispersion [ps/nm/km] * |lambda_s - lambda_i| [nm] * length [km]``.
    """
    if min(lambda_s, lambda_i, dispersion, fiber_length) < 0:
        raise ConfigError("inputs must be >= 0")
    return dispersion * abs(lambda_s - lambda_i) * fiber_length


def phase_grid(step: float, span: float = 2 * np.pi) -> np.ndarray:
    """Phase settings from 0 up to (not including) ``span`` in increments of ``step``."""
    n = int(round(span / step))
    return np.arange(n) * step


PHASE_PRESETS = {
    "2pi/20": 2 * np.pi / 20,
    "pi/8": np.pi / 8,
}
