"""
Time-tag file formats.

Binary: a 16-byte header followed by packed little-endian records of
(u8 channel, u64 time_ps), merged across channels in time order.

    offset  size  field
    0       8     magic  b"CHIPTAGS"
    8       2     u16 format version (1)
    10      2     u16 record size (9)
    12      4     u32 reserved (0)

CSV debug format: header ``channel,time_ps`` with channel written as
``signal``/``idler`` (integers are accepted on read).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Dict, Iterable

import numpy as np

from .errors import ChipentError
from .tagsim import CHANNEL_NAMES, TagStream

MAGIC = b"CHIPTAGS"
VERSION = 1
_HEADER = struct.Struct("<8sHHI")
RECORD = np.dtype([("channel", "u1"), ("time", "<u8")])

_NAME_TO_CHANNEL = {v: k for k, v in CHANNEL_NAMES.items()}


class TagFormatError(ChipentError, ValueError):
    pass


def _merge(streams: Iterable[TagStream]) -> np.ndarray:
    parts = []
    for s in streams:
        rec = np.empty(len(s), dtype=RECORD)
        rec["channel"] = s.channel
        rec["time"] = s.times
        parts.append(rec)
    if not parts:
        return np.empty(0, dtype=RECORD)
    rec = np.concatenate(parts)
    order = np.lexsort((rec["channel"], rec["time"]))
    return rec[order]


def _split(rec: np.ndarray) -> Dict[int, TagStream]:
    out = {}
    for ch in CHANNEL_NAMES:
        sel = rec["time"][rec["channel"] == ch]
        out[ch] = TagStream(ch, sel.astype(np.int64))
    unknown = set(np.unique(rec["channel"]).tolist()) - set(CHANNEL_NAMES)
    if unknown:
        raise TagFormatError(f"unknown channel codes {sorted(unknown)}")
    return out


def write_tags(path, streams: Iterable[TagStream]) -> None:
    rec = _merge(streams)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, RECORD.itemsize, 0))
        fh.write(rec.tobytes())


def read_tags(path) -> Dict[int, TagStream]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TagFormatError("file too short for a tag header")
    magic, version, rsize, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}")
    if version != VERSION or rsize != RECORD.itemsize:
        raise TagFormatError(f"unsupported tag format version {version} / record size {rsize}")
    body = raw[_HEADER.size:]
    if len(body) % RECORD.itemsize:
        raise TagFormatError("truncated record")
    return _split(np.frombuffer(body, dtype=RECORD))


def write_tags_csv(path, streams: Iterable[TagStream]) -> None:
    rec = _merge(streams)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "time_ps"])
        for ch, t in zip(rec["channel"].tolist(), rec["time"].tolist()):
            w.writerow([CHANNEL_NAMES[ch], t])


def read_tags_csv(path) -> Dict[int, TagStream]:
    chans, times = [], []
    with open(path, newline="") as fh:
        rows = (line for line in fh if not line.startswith("#"))
        for row in csv.DictReader(rows):
            c = row["channel"].strip()
            chans.append(_NAME_TO_CHANNEL[c] if c in _NAME_TO_CHANNEL else int(c))
            times.append(int(row["time_ps"]))
    rec = np.empty(len(times), dtype=RECORD)
    rec["channel"] = chans
    rec["time"] = times
    return _split(rec)


def load_tags(path) -> Dict[int, TagStream]:
    """Read either format, chosen by extension (``.csv`` or binary)."""
    return read_tags_csv(path) if str(path).lower().endswith(".csv") else read_tags(path)
