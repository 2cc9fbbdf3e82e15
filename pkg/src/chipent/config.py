"""
Experiment configuration: YAML in, validated frozen dataclasses out.

Every section maps one-to-one onto a component spec. Unknown keys and
invalid values raise ``ConfigError`` naming the offending field; YAML
syntax errors carry the line number.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .analysis import COLUMNS, LossRow, LossTable
from .errors import ChipentError, ConfigError
from .franson import PHASE_PRESETS, FransonSpec
from .source import PumpSpec, SourceSpec, channel_grid
from .spectral import NotchSpec, PassbandSpec, RingSpec
from .tagsim import _BIT_GENERATORS, DetectorSpec

DEMUX_MODES = ("splitter", "dwdm")


@dataclass(frozen=True)
class PassbandConfig:
    """Bench bandpass filters; the center follows the channel being measured."""

    bandwidth: float = 600.0
    extinction: float = 20.0
    insertion_loss: float = 0.0
    extinction_overrides: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        PassbandSpec(1.0, self.bandwidth, self.extinction, self.insertion_loss)
        object.__setattr__(self, "extinction_overrides",
                           {int(k): float(v) for k, v in dict(self.extinction_overrides).items()})

    def spec_for(self, center: float, fsr_index: Optional[int] = None) -> PassbandSpec:
        ext = self.extinction_overrides.get(fsr_index, self.extinction)
        return PassbandSpec(center, self.bandwidth, ext, self.insertion_loss)


@dataclass(frozen=True)
class LossConfig:
    rows: tuple = ()
    uncertainty_combination: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.uncertainty_combination not in ("linear", "quadrature"):
            raise ConfigError("uncertainty_combination must be 'linear' or 'quadrature'")

    @property
    def table(self) -> LossTable:
        return LossTable(self.rows)


@dataclass(frozen=True)
class RunConfig:
    duration: float = 10.0
    background_rates: tuple = (4.5e4, 4.5e4)

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")
        bg = tuple(float(x) for x in self.background_rates)
        if len(bg) != 2 or min(bg) < 0:
            raise ConfigError("background_rates must be two values >= 0")
        object.__setattr__(self, "background_rates", bg)


@dataclass(frozen=True)
class CoincidenceSetup:
    demux: str = "splitter"

    def __post_init__(self):
        if self.demux not in DEMUX_MODES:
            raise ConfigError(f"demux must be one of {DEMUX_MODES}")


@dataclass(frozen=True)
class InterferometerSetup:
    demux: str = "dwdm"
    integration_per_point: float = 5.0
    phase_step: str = "2pi/20"
    background_transmission: float = 0.5

    def __post_init__(self):
        if self.demux not in DEMUX_MODES:
            raise ConfigError(f"demux must be one of {DEMUX_MODES}")
        if self.integration_per_point <= 0:
            raise ConfigError("integration_per_point must be > 0")
        if self.phase_step not in PHASE_PRESETS:
            raise ConfigError(f"phase_step must be one of {sorted(PHASE_PRESETS)}")
        if not 0 <= self.background_transmission <= 1:
            raise ConfigError("background_transmission must be in [0, 1]")


@dataclass(frozen=True)
class AnalysisConfig:
    bin_width: int = 10
    delay_range: tuple = (-2000, 2000)
    window: float = 400.0
    franson_window: float = 160.0
    fwhm_smoothing: float = 110.0
    low_statistics_counts: int = 100

    def __post_init__(self):
        lo, hi = (int(v) for v in self.delay_range)
        object.__setattr__(self, "delay_range", (lo, hi))
        if self.bin_width < 1 or hi <= lo or (hi - lo) % self.bin_width:
            raise ConfigError("delay_range span must be a positive multiple of bin_width >= 1")
        if self.window <= 0 or self.franson_window <= 0:
            raise ConfigError("windows must be > 0")
        if self.fwhm_smoothing < 0:
            raise ConfigError("fwhm_smoothing must be >= 0")


@dataclass(frozen=True)
class SpectrumConfig:
    start: float = 1505.0
    stop: float = 1565.0
    step_pm: float = 10.0

    def __post_init__(self):
        if not self.start < self.stop or self.step_pm <= 0:
            raise ConfigError("spectrum needs start < stop and step_pm > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 20190321
    rng: str = "pcg64"
    channels: tuple = (2, 3)
    pump: PumpSpec = field(default_factory=PumpSpec)
    ring: RingSpec = field(default_factory=RingSpec)
    notch: NotchSpec = field(default_factory=NotchSpec)
    notch_design: Mapping[str, float] = field(default_factory=dict)
    passband: PassbandConfig = field(default_factory=PassbandConfig)
    source: SourceSpec = field(default_factory=SourceSpec)
    detectors: tuple = (DetectorSpec(0.6), DetectorSpec(0.5))
    losses: LossConfig = field(default_factory=LossConfig)
    franson: FransonSpec = field(default_factory=FransonSpec)
    run: RunConfig = field(default_factory=RunConfig)
    coincidence: CoincidenceSetup = field(default_factory=CoincidenceSetup)
    interferometer: InterferometerSetup = field(default_factory=InterferometerSetup)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)

    def __post_init__(self):
        if self.seed is None or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.rng.lower() not in _BIT_GENERATORS:
            raise ConfigError(f"rng must be one of {sorted(_BIT_GENERATORS)}")
        chans = tuple(int(c) for c in self.channels)
        if len(set(chans)) != len(chans):
            raise ConfigError("channels must be unique")
        object.__setattr__(self, "channels", chans)
        for i in chans:
            channel_grid(self.pump, self.ring.fsr, i, self.ring.comb_span)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def arm_losses(self) -> tuple:
        """Passive per-photon losses (dB) up to the detectors."""
        from .analysis import arm_totals

        tot = arm_totals(self.losses.table.without_detectors())
        return (tot.signal[0], tot.idler[0])


# --- dict <-> dataclass ------------------------------------------------------

_SIMPLE_SECTIONS = {
    "pump": PumpSpec,
    "ring": RingSpec,
    "notch": NotchSpec,
    "passband": PassbandConfig,
    "source": SourceSpec,
    "franson": FransonSpec,
    "run": RunConfig,
    "coincidence": CoincidenceSetup,
    "interferometer": InterferometerSetup,
    "analysis": AnalysisConfig,
    "spectrum": SpectrumConfig,
}
_TOP_KEYS = {"seed", "rng", "channels", "notch_design", "detectors", "losses", *_SIMPLE_SECTIONS}
_DETECTOR_NAMES = ("signal", "idler")


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"config field '{where}': expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"config field '{where}.{unknown[0]}': unknown key")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ChipentError as exc:
        raise ConfigError(f"config field '{where}': {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field '{where}': invalid value ({exc})") from exc


def _build_row(data, where: str) -> LossRow:
    if not isinstance(data, Mapping) or "name" not in data:
        raise ConfigError(f"config field '{where}': loss rows need a 'name'")
    return _build(LossRow, data, where)


def from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"config field '{unknown[0]}': unknown key")
    kw = {k: _build(cls, data.get(k), k) for k, cls in _SIMPLE_SECTIONS.items() if k in data}

    if "detectors" in data:
        det = data["detectors"] or {}
        if not isinstance(det, Mapping) or set(det) != set(_DETECTOR_NAMES):
            raise ConfigError("config field 'detectors': needs exactly 'signal' and 'idler'")
        kw["detectors"] = tuple(_build(DetectorSpec, det[n], f"detectors.{n}") for n in _DETECTOR_NAMES)
    if "losses" in data:
        lo = data["losses"] or {}
        if not isinstance(lo, Mapping) or set(lo) - {"rows", "uncertainty_combination"}:
            raise ConfigError("config field 'losses': expected keys 'rows', 'uncertainty_combination'")
        rows = tuple(_build_row(r, f"losses.rows[{k}]") for k, r in enumerate(lo.get("rows") or []))
        kw["losses"] = _build(LossConfig, {"rows": rows, **{k: v for k, v in lo.items() if k != "rows"}},
                              "losses")
    for key in ("seed", "rng", "channels", "notch_design"):
        if key in data:
            val = data[key]
            kw[key] = tuple(val) if isinstance(val, list) else val
    if "notch_design" in kw and not isinstance(kw["notch_design"], Mapping):
        raise ConfigError("config field 'notch_design': expected a mapping")
    try:
        return ExperimentConfig(**kw)
    except ChipentError as exc:
        raise ConfigError(f"config: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: invalid value ({exc})") from exc


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def _row_dict(row: LossRow) -> dict:
    out = {"name": row.name}
    populated = [c for c in COLUMNS if row.value(c) is not None]
    for c in populated:
        out[c] = row.value(c)
    uncs = {c: row.uncertainty[c] for c in populated}
    if len(set(uncs.values())) <= 1:
        out["uncertainty"] = next(iter(uncs.values()), 0.0)
    else:
        out["uncertainty"] = uncs
    if row.detector:
        out["detector"] = True
    return out


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {"seed": int(cfg.seed), "rng": cfg.rng, "channels": list(cfg.channels)}
    for key in _SIMPLE_SECTIONS:
        out[key] = _plain(asdict(getattr(cfg, key)))
    out["notch_design"] = dict(cfg.notch_design)
    out["detectors"] = {n: asdict(d) for n, d in zip(_DETECTOR_NAMES, cfg.detectors)}
    out["losses"] = {"uncertainty_combination": cfg.losses.uncertainty_combination,
                     "rows": [_row_dict(r) for r in cfg.losses.rows]}
    return out


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config syntax error{where}: {getattr(exc, 'problem', exc)}") from exc
    return from_dict(data or {})


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def default_text() -> str:
    return resources.files("chipent").joinpath("data/reference.yaml").read_text()


def default_config() -> ExperimentConfig:
    return loads(default_text())


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
