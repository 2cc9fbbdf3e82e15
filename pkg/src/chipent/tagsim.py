"""
Seeded Monte Carlo generation of detector time-tag streams.

Times are integer picoseconds from the start of the run once a stream has
been through ``detect``; intermediate photon times are float64 ps (exact to
well below 1 ps over hours of simulated time).

Random streams come from numpy bit generators seeded through
``SeedSequence(seed, spawn_key=key)``, so every (experiment, channel, phase
point, time chunk) gets an independent, order-free stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigError, UnsortedStreamError

PS_PER_S = 1_000_000_000_000
SIGNAL, IDLER = 0, 1
CHANNEL_NAMES = {SIGNAL: "signal", IDLER: "idler"}
MAX_EVENTS = 50_000_000

_BIT_GENERATORS = {
    "pcg64": np.random.PCG64,
    "philox": np.random.Philox,
    "sfc64": np.random.SFC64,
    "mt19937": np.random.MT19937,
}


def make_rng(seed: int, key: Sequence[int] = (), algorithm: str = "pcg64") -> np.random.Generator:
    """Generator for ``seed`` and a spawn ``key``; same inputs give the same stream."""
    try:
        bitgen = _BIT_GENERATORS[algorithm.lower()]
    except KeyError:
        raise ConfigError(f"unknown rng algorithm {algorithm!r}; "
                          f"choose one of {sorted(_BIT_GENERATORS)}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(bitgen(ss))


@dataclass(frozen=True)
class TagStream:
    """Sorted detection times [ps] of one detector channel."""

    channel: int
    times: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.int64)
        if t.size and (t[0] < 0 or np.any(np.diff(t) < 0)):
            raise UnsortedStreamError("tag stream must be sorted and non-negative")
        object.__setattr__(self, "times", t)
        if self.channel not in CHANNEL_NAMES:
            raise ConfigError(f"unknown channel {self.channel}")

    def __len__(self):
        return self.times.size

    def rate(self, duration_s: float) -> float:
        return self.times.size / duration_s


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 0.6
    jitter_sigma: float = 20.0  # ps, per detector
    dark_rate: float = 200.0  # counts/s
    dead_time: float = 0.0  # ps

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ConfigError("detector efficiency must be in [0, 1]")
        if self.jitter_sigma < 0 or self.dark_rate < 0 or self.dead_time < 0:
            raise ConfigError("detector jitter, dark rate and dead time must be >= 0")


@dataclass(frozen=True)
class RunSpec:
    """
    One acquisition.

    ``pair_rate`` is the rate of pairs entering the loss chain; ``arm_losses``
    are passive per-photon losses (dB) up to the detectors; ``background_rates``
    are uncorrelated detected counts/s per detector on top of dark counts.
    """

    duration: float = 10.0
    seed: int = 20190321
    pair_rate: float = 2.1e6
    arm_losses: tuple = (15.0, 15.5)
    background_rates: tuple = (4.5e4, 4.5e4)

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("run duration must be > 0")
        if self.pair_rate < 0:
            raise ConfigError("pair_rate must be >= 0")
        if min(self.arm_losses) < 0 or min(self.background_rates) < 0:
            raise ConfigError("arm losses and background rates must be >= 0")
        object.__setattr__(self, "arm_losses", tuple(float(x) for x in self.arm_losses))
        object.__setattr__(self, "background_rates", tuple(float(x) for x in self.background_rates))


def poisson_times(rate: float, t0_ps: float, t1_ps: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson arrivals on [t0, t1) as sorted float64 ps."""
    span = t1_ps - t0_ps
    if rate <= 0 or span <= 0:
        return np.empty(0, dtype=np.float64)
    mean = rate * span / PS_PER_S
    if mean > MAX_EVENTS:
        raise ConfigError(f"expected {mean:.3g} events exceeds the {MAX_EVENTS:.0e} memory guard; "
                          "generate in shorter chunks")
    n = rng.poisson(mean)
    t = rng.random(n)
    t.sort()
    return t0_ps + t * span


def generate_pair_events(run: RunSpec, rng: np.random.Generator | None = None,
                         rate: float | None = None) -> np.ndarray:
    """Pair emission times [ps, int64] of a CW-pumped source over the run."""
    rate = run.pair_rate if rate is None else rate
    rng = make_rng(run.seed) if rng is None else rng
    t = poisson_times(rate, 0.0, run.duration * PS_PER_S, rng)
    return np.floor(t).astype(np.int64)


def emit_photon_times(emission, coherence_sigma: float, rng: np.random.Generator):
    """
    Signal and idler times for each emission.

    The idler lags by a Laplace-distributed delay whose standard deviation is
    ``coherence_sigma`` (the two-sided exponential of a Lorentzian line).
    """
    emission = np.asarray(emission, dtype=np.float64)
    if coherence_sigma < 0:
        raise ConfigError("coherence_sigma must be >= 0")
    if coherence_sigma == 0:
        return emission.copy(), emission.copy()
    delta = rng.laplace(0.0, coherence_sigma / np.sqrt(2.0), size=emission.shape)
    return emission.copy(), emission + delta


def survival_probability(loss_db: float) -> float:
    if loss_db < 0:
        raise ConfigError("loss must be >= 0 dB")
    return 0.0 if np.isinf(loss_db) else 10.0 ** (-loss_db / 10.0)


def thin_by_loss(stream, loss_db: float, rng: np.random.Generator):
    """Independent Bernoulli survival with p = 10^(-loss/10); order preserved."""
    stream = np.asarray(stream)
    p = survival_probability(loss_db)
    if p == 1.0:
        return stream.copy()
    if p == 0.0:
        return stream[:0].copy()
    return stream[rng.random(stream.size) < p]


def survival_marks(n: int, p_signal: float, p_idler: float, rng: np.random.Generator):
    """
    Per-photon survival marks for ``n`` pairs known to keep at least one photon.

    Used with pair generation at rate ``R * (1 - (1 - ps)(1 - pi))``: by the
    marking theorem this is distributed exactly like thinning every pair of a
    rate-``R`` stream, at a fraction of the cost.
    """
    q = 1.0 - (1.0 - p_signal) * (1.0 - p_idler)
    if n == 0 or q == 0:
        return np.zeros(n, bool), np.zeros(n, bool)
    p_both = p_signal * p_idler / q
    p_s_only = p_signal * (1.0 - p_idler) / q
    u = rng.random(n)
    both = u < p_both
    s_only = (u >= p_both) & (u < p_both + p_s_only)
    return both | s_only, ~s_only


@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.zeros(t.size, np.bool_)
    last = -np.inf
    for k in range(t.size):
        if t[k] - last >= dead:
            keep[k] = True
            last = t[k]
    return keep


def detect(stream, det: DetectorSpec, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    """
    Detector response: efficiency thinning, Gaussian jitter, dark counts,
    dead time and 1 ps quantisation. Returns sorted int64 ps.
    """
    t = np.asarray(stream, dtype=np.float64)
    if t.size and np.any(np.diff(t) < 0):
        raise UnsortedStreamError("detect() needs a sorted photon stream")
    if det.efficiency < 1.0:
        t = t[rng.random(t.size) < det.efficiency]
    if det.jitter_sigma > 0:
        t = t + rng.normal(0.0, det.jitter_sigma, size=t.size)
    if det.dark_rate > 0:
        t = np.concatenate([t, poisson_times(det.dark_rate, 0.0, duration_s * PS_PER_S, rng)])
    t.sort()
    if det.dead_time > 0 and t.size:
        t = t[_dead_time_mask(t, float(det.dead_time))]
    q = np.rint(t).astype(np.int64)
    np.maximum(q, 0, out=q)
    q.sort()
    return q
