"""Event-time mid-price series and its on-disk format.

A MidSeries is the substrate for all lag math: one float64 array of
mid prices indexed by global event index, plus an ordered list of
sessions giving the inclusive [start, end] index range of each
trading day. Every event index belongs to exactly one session and
no pair construction ever crosses a session boundary.

On disk the series is a compact binary file ("PRMS"): magic, u16
version, then one block per session of (date as days-since-epoch
u32, count u64, mids as f64 array), all little-endian, with a JSON
sidecar manifest next to it.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError

PRMS_MAGIC = b"PRMS"
PRMS_VERSION = 1

_HEADER = struct.Struct("<4sH")
_SESSION_HEADER = struct.Struct("<IQ")


@dataclass(frozen=True)
class Session:
    """One regular-hours trading day: date and inclusive event-index bounds."""

    date: int  # days since Unix epoch
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"session start {self.start} > end {self.end}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    @property
    def calendar_date(self) -> datetime.date:
        return datetime.date(1970, 1, 1) + datetime.timedelta(days=self.date)


@dataclass
class MidSeries:
    """Per-session mid prices in event time, with global indices."""

    sessions: list[Session]
    mids: np.ndarray

    def __post_init__(self):
        self.mids = np.ascontiguousarray(self.mids, dtype=np.float64)
        expect = 0
        for s in self.sessions:
            if s.start != expect:
                raise ValueError(
                    f"session starting at {s.start} leaves a gap (expected {expect})"
                )
            expect = s.end + 1
        if expect != len(self.mids):
            raise ValueError(
                f"sessions cover {expect} events but array holds {len(self.mids)}"
            )

    def __len__(self) -> int:
        return len(self.mids)

    def session_slice(self, session: Session) -> np.ndarray:
        return self.mids[session.start : session.end + 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MidSeries):
            return NotImplemented
        return self.sessions == other.sessions and np.array_equal(
            self.mids, other.mids
        )


def from_session_arrays(dates: list[int], arrays: list[np.ndarray]) -> MidSeries:
    """Assemble a MidSeries from per-session arrays, assigning global indices."""
    sessions = []
    start = 0
    for date, arr in zip(dates, arrays):
        n = len(arr)
        if n == 0:
            continue
        sessions.append(Session(date=date, start=start, end=start + n - 1))
        start += n
    if sessions:
        mids = np.concatenate([a for a in arrays if len(a)])
    else:
        mids = np.empty(0, dtype=np.float64)
    return MidSeries(sessions=sessions, mids=mids)


def write_prms(series: MidSeries, path: str | Path) -> None:
    path = Path(path)
    try:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(PRMS_MAGIC, PRMS_VERSION))
            for s in series.sessions:
                block = series.session_slice(s)
                f.write(_SESSION_HEADER.pack(s.date, len(block)))
                f.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def read_prms(path: str | Path) -> MidSeries:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ArtifactIOError(f"{path}: truncated header")
    magic, version = _HEADER.unpack_from(raw, 0)
    if magic != PRMS_MAGIC:
        raise ArtifactIOError(f"{path}: bad magic {magic!r}")
    if version != PRMS_VERSION:
        raise ArtifactIOError(f"{path}: unsupported version {version}")
    pos = _HEADER.size
    dates: list[int] = []
    arrays: list[np.ndarray] = []
    while pos < len(raw):
        if pos + _SESSION_HEADER.size > len(raw):
            raise ArtifactIOError(f"{path}: truncated session header at {pos}")
        date, count = _SESSION_HEADER.unpack_from(raw, pos)
        pos += _SESSION_HEADER.size
        nbytes = count * 8
        if pos + nbytes > len(raw):
            raise ArtifactIOError(f"{path}: truncated session block at {pos}")
        arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=pos).copy())
        dates.append(date)
        pos += nbytes
    return from_session_arrays(dates, arrays)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def manifest_path(artifact: str | Path) -> Path:
    return Path(str(artifact) + ".manifest.json")


def write_manifest(artifact: str | Path, payload: dict) -> dict:
    """Write the sidecar manifest for an artifact, embedding its data hash."""
    payload = dict(payload)
    payload["data_sha256"] = sha256_file(artifact)
    out = manifest_path(artifact)
    try:
        out.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {out}: {exc}") from exc
    return payload


def read_manifest(artifact: str | Path) -> dict:
    p = manifest_path(artifact)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(f"{p}: invalid JSON: {exc}") from exc


def series_summary(series: MidSeries) -> dict:
    return {
        "format": "prms",
        "version": PRMS_VERSION,
        "n_sessions": len(series.sessions),
        "n_events": int(len(series.mids)),
        "sessions": [
            {"date": s.date, "count": len(s)} for s in series.sessions
        ],
    }
