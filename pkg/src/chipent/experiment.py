"""
Simulated acquisitions built from an ``ExperimentConfig``.

Photon-level Bernoulli losses (passive arm loss, detector efficiency,
splitter routing, interferometer excess loss) are independent per photon,
so they are merged into one survival probability per arm. Pairs are then
generated only at the rate of pairs that keep at least one photon, with
conditional survival marks (see ``tagsim.survival_marks``).

Seeds: every random stream is ``make_rng(seed, key)`` with
``key = (experiment, fsr, point, chunk, stage)``, so results do not depend
on execution order or on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis
from .config import ExperimentConfig
from .correlate import (CoincidenceHistogram, PeakMetrics, build_histogram, car,
                        metrics_record, peak_metrics)
from .errors import ChipentError, EmptyHistogramError
from .franson import PHASE_PRESETS, FransonSpec, phase_grid, route_pairs, validate_regime
from .source import channel_grid, internal_rate
from .tagsim import (IDLER, PS_PER_S, SIGNAL, DetectorSpec, TagStream, detect, emit_photon_times,
                     make_rng, poisson_times, survival_marks, survival_probability)

EXP_COINCIDENCE, EXP_FRANSON = 1, 2
STAGE_PAIRS, STAGE_ROUTE, STAGE_DET_S, STAGE_DET_I = 0, 1, 2, 3
CHUNK_S = 1.0


@dataclass(frozen=True)
class ArmModel:
    """Merged per-photon survival and detector settings of one acquisition."""

    pair_rate: float
    p_signal: float
    p_idler: float
    detectors: tuple
    background: tuple


def _arm_model(cfg: ExperimentConfig, fsr_index: int, demux: str, port_factor: float = 1.0,
               background_scale: float = 1.0, pair_rate: Optional[float] = None) -> ArmModel:
    loss_s, loss_i = cfg.arm_losses()
    route = 0.5 if demux == "splitter" else 1.0
    det_s, det_i = cfg.detectors
    p_s = survival_probability(loss_s) * det_s.efficiency * route * port_factor
    p_i = survival_probability(loss_i) * det_i.efficiency * route * port_factor
    rate = internal_rate(cfg.source, cfg.pump, fsr_index) if pair_rate is None else pair_rate
    bg = tuple(b * background_scale for b in cfg.run.background_rates)
    return ArmModel(rate, p_s, p_i, (det_s, det_i), bg)


def _noise_detector(det: DetectorSpec, background: float) -> DetectorSpec:
    # efficiency already folded into the survival marks
    return DetectorSpec(1.0, det.jitter_sigma, det.dark_rate + background, det.dead_time)


def _chunks(duration: float):
    n = max(1, math.ceil(duration / CHUNK_S - 1e-12))
    for c in range(n):
        yield c, c * CHUNK_S, min((c + 1) * CHUNK_S, duration)


def _photon_streams(cfg: ExperimentConfig, model: ArmModel, duration: float, key: tuple,
                    franson: Optional[FransonSpec] = None):
    """Surviving signal and idler photon times [float ps], before detection."""
    q = 1.0 - (1.0 - model.p_signal) * (1.0 - model.p_idler)
    sig, idl = [], []
    for c, t0, t1 in _chunks(duration):
        rng = make_rng(cfg.seed, key + (c, STAGE_PAIRS), cfg.rng)
        emit = poisson_times(model.pair_rate * q, t0 * PS_PER_S, t1 * PS_PER_S, rng)
        s_alive, i_alive = survival_marks(emit.size, model.p_signal, model.p_idler, rng)
        ts, ti = emit_photon_times(emit, cfg.source.coherence_sigma, rng)
        if franson is not None:
            rrng = make_rng(cfg.seed, key + (c, STAGE_ROUTE), cfg.rng)
            ds, di, s_alive, i_alive = route_pairs(franson, s_alive, i_alive, rrng, apply_excess=False)
            ts, ti = ts + ds, ti + di
        sig.append(ts[s_alive])
        idl.append(ti[i_alive])
    ts, ti = np.concatenate(sig), np.concatenate(idl)
    ts.sort()
    ti.sort()
    return ts, ti


def simulate_tags(cfg: ExperimentConfig, model: ArmModel, duration: float, key: tuple,
                  franson: Optional[FransonSpec] = None):
    """Detected (signal, idler) ``TagStream`` pair for one acquisition."""
    ts, ti = _photon_streams(cfg, model, duration, key, franson)
    out = []
    for ch, t, stage in ((SIGNAL, ts, STAGE_DET_S), (IDLER, ti, STAGE_DET_I)):
        det = _noise_detector(model.detectors[ch], model.background[ch])
        rng = make_rng(cfg.seed, key + (stage,), cfg.rng)
        out.append(TagStream(ch, detect(t, det, duration, rng)))
    return tuple(out)


# --- coincidence ---------------------------------------------------------------

@dataclass(frozen=True)
class CoincidenceResult:
    fsr_index: int
    histogram: CoincidenceHistogram
    metrics: Optional[PeakMetrics]
    car: Optional[float]
    low_statistics: bool
    streams: tuple


def run_coincidence(cfg: ExperimentConfig, fsr_index: int, duration: Optional[float] = None,
                    pair_rate: Optional[float] = None) -> CoincidenceResult:
    duration = cfg.run.duration if duration is None else duration
    channel_grid(cfg.pump, cfg.ring.fsr, fsr_index, cfg.ring.comb_span)
    model = _arm_model(cfg, fsr_index, cfg.coincidence.demux, pair_rate=pair_rate)
    a, b = simulate_tags(cfg, model, duration, (EXP_COINCIDENCE, fsr_index))
    an = cfg.analysis
    h = build_histogram(a, b, an.bin_width, an.delay_range, duration)
    try:
        m = peak_metrics(h, an.window, smooth_ps=an.fwhm_smoothing)
        c = car(h, an.window, smooth_ps=an.fwhm_smoothing)
    except EmptyHistogramError:
        m, c = None, None
    low = m is None or m.coincidences_in_window < an.low_statistics_counts
    return CoincidenceResult(fsr_index, h, m, c, low, (a, b))


def coincidence_record(res: CoincidenceResult) -> dict:
    h = res.histogram
    if res.metrics is None:
        rec = {"peak_delay_ps": None, "fwhm_ps": None, "snr": None, "car": None,
               "rates": {"coincidences_per_s": 0.0,
                         "singles_a_per_s": h.total_a / h.duration,
                         "singles_b_per_s": h.total_b / h.duration}}
    else:
        rec = metrics_record(res.metrics, h, res.car)
    rec.update(fsr_index=res.fsr_index, low_statistics=res.low_statistics,
               bin_width_ps=h.bin_width, delay_range_ps=list(h.delay_range),
               duration_s=h.duration)
    return rec


# --- Franson scan --------------------------------------------------------------------

@dataclass(frozen=True)
class FransonResult:
    fsr_index: int
    scan: analysis.FringeScan
    fit: analysis.FringeFit
    visibility_net: float
    histogram: CoincidenceHistogram
    side_counts: np.ndarray


def phase_points(preset: str) -> np.ndarray:
    return phase_grid(PHASE_PRESETS[preset])


def _window_counts(h: CoincidenceHistogram, center: float, width: float) -> int:
    return int(h.counts[np.abs(h.centers - center) <= width / 2.0].sum())


def _offpeak_rate(h: CoincidenceHistogram, imbalance: float, width: float) -> float:
    """Flat-floor counts per ps away from all three peaks."""
    x = h.centers
    far = np.ones(x.size, bool)
    for c in (-imbalance, 0.0, imbalance):
        far &= np.abs(x - c) > 1.5 * width
    if not far.any():
        return 0.0
    return float(h.counts[far].sum()) / (far.sum() * h.bin_width)


def run_franson(cfg: ExperimentConfig, fsr_index: int, phases=None,
                integration: Optional[float] = None, pair_rate: Optional[float] = None,
                spec: Optional[FransonSpec] = None) -> FransonResult:
    """
    Phase scan of the folded Franson interferometer on one channel pair.

    For each phase the central and side peak windows of the arrival-time
    histogram are counted; the noise rate for the net visibility is the
    flat floor measured away from the peaks, scaled to the central window.
    """
    spec = cfg.franson if spec is None else spec
    validate_regime(spec, cfg.source.coherence_sigma, cfg.pump.coherence_time)
    channel_grid(cfg.pump, cfg.ring.fsr, fsr_index, cfg.ring.comb_span)
    phases = phase_points(cfg.interferometer.phase_step) if phases is None else np.asarray(phases, float)
    analysis.check_scan_span(phases)
    integration = cfg.interferometer.integration_per_point if integration is None else integration
    setup, an = cfg.interferometer, cfg.analysis
    t_ex = survival_probability(spec.excess_loss)
    model = _arm_model(cfg, fsr_index, setup.demux, port_factor=t_ex,
                       background_scale=setup.background_transmission * t_ex, pair_rate=pair_rate)
    w = an.franson_window
    central, side, floor = [], [], []
    total = None
    for k, phi in enumerate(phases):
        pspec = FransonSpec(spec.imbalance, float(phi), spec.excess_loss, spec.visibility_cap)
        a, b = simulate_tags(cfg, model, integration, (EXP_FRANSON, fsr_index, k), franson=pspec)
        h = build_histogram(a, b, an.bin_width, an.delay_range, integration)
        total = h if total is None else total + h
        central.append(_window_counts(h, 0.0, w))
        side.append(0.5 * (_window_counts(h, -spec.imbalance, w) + _window_counts(h, spec.imbalance, w)))
        floor.append(_offpeak_rate(h, spec.imbalance, w))
    window_ps = np.sum(np.abs(total.centers) <= w / 2.0) * an.bin_width
    noise_rate = float(np.mean(floor)) * window_ps / integration
    scan = analysis.FringeScan(phases, central, side, integration, noise_rate)
    fit = analysis.fit_fringe(scan)
    v_net = analysis.net_visibility(fit, noise_rate, integration)
    return FransonResult(fsr_index, scan, fit, v_net, total, np.asarray(side))


def franson_record(res: FransonResult) -> dict:
    rec = analysis.fit_record(res.fit, res.visibility_net, res.scan.noise_rate)
    side = res.side_counts
    rec.update(
        fsr_index=res.fsr_index,
        integration_per_point_s=res.scan.integration_per_point,
        n_points=int(res.scan.phases.size),
        side_peak_mean=float(side.mean()),
        side_peak_max_dev_sigma=side_flatness(side),
    )
    return rec


def side_flatness(side) -> float:
    """Largest deviation of the side-peak series from its mean, in Poisson sigmas."""
    side = np.asarray(side, float)
    mu = side.mean()
    return float(np.max(np.abs(side - mu)) / math.sqrt(max(mu, 1.0)))


# --- multiplex -------------------------------------------------------------------

def run_multiplex(cfg: ExperimentConfig, workers: int = 1, integration: Optional[float] = None):
    """
    Franson scan on every configured channel. Failures become row-level
    error markers; rows come back ordered by FSR index.
    """

    def one(i):
        pair = channel_grid(cfg.pump, cfg.ring.fsr, i, cfg.ring.comb_span)
        row = {"fsr": i, "lambda_idler_nm": pair.lambda_idler, "lambda_signal_nm": pair.lambda_signal,
               "internal_rate_mhz": internal_rate(cfg.source, cfg.pump, i) / 1e6,
               "visibility_raw": None, "visibility_net": None, "error": None}
        try:
            res = run_franson(cfg, i, integration=integration)
            row.update(visibility_raw=res.fit.visibility, visibility_net=res.visibility_net,
                       visibility_stderr=res.fit.visibility_stderr, r_squared=res.fit.r_squared)
        except ChipentError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    chans = sorted(cfg.channels)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, chans))
    else:
        rows = [one(i) for i in chans]
    return rows
