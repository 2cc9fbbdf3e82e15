"""Provenance headers shared by every emitted file."""

from __future__ import annotations

from .config import ExperimentConfig, config_hash
from .correlate import dumps_json


def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "seed": int(cfg.seed), "rng": cfg.rng}


def header_lines(cfg: ExperimentConfig, *extra: str) -> list:
    p = provenance(cfg)
    return [f"config_hash={p['config_hash']} seed={p['seed']} rng={p['rng']}", *extra]


def write_json(path, cfg: ExperimentConfig, record: dict) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json({**provenance(cfg), **record}))
