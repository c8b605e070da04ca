"""Binned conditional response surface.

Standardized pushes are mapped onto a fixed half-open grid of 320
equal-width bins spanning [-4, 4) in units of push standard deviation.
For every (lag, bin) cell the surface stores the pair count and the
conditional means of the standardized push, the standardized response
and the raw response. Cells below the minimum support count are kept
but flagged invalid and carry no means downstream: holes are never
filled. Pushes outside the grid are tallied per lag, never binned.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accum import CompensatedSums
from .errors import (
    ArtifactIOError,
    IndexOutOfRange,
    InvalidGrid,
    MissingMoments,
)
from .lags import LagMoments, MomentRow, session_pushes_responses
from .series import MidSeries

OUT_OF_GRID = None  # sentinel returned by BinGrid.bin_index


@dataclass(frozen=True)
class BinGrid:
    z_min: float = -4.0
    z_max: float = 4.0
    step: float = 0.025
    n_min_support: int = 200

    def __post_init__(self):
        if not (self.z_min < self.z_max):
            raise InvalidGrid(f"need z_min < z_max, got {self.z_min}, {self.z_max}")
        if self.step <= 0:
            raise InvalidGrid(f"bin step must be > 0, got {self.step}")
        ratio = (self.z_max - self.z_min) / self.step
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidGrid(
                f"bin step {self.step} does not divide the range "
                f"[{self.z_min}, {self.z_max}] into an integer bin count"
            )
        if self.n_min_support < 1:
            raise InvalidGrid(f"n_min_support must be >= 1, got {self.n_min_support}")

    @property
    def n_bins(self) -> int:
        return round((self.z_max - self.z_min) / self.step)

    def bin_index(self, z_p: float):
        """1-based bin index, or None when the push falls off the grid.

        The top edge is exclusive; a value rounding onto n_bins+1 is
        treated as off-grid rather than special-cased.
        """
        if not (self.z_min <= z_p < self.z_max):
            return OUT_OF_GRID
        j = 1 + math.floor((z_p - self.z_min) / self.step)
        if j < 1 or j > self.n_bins:
            return OUT_OF_GRID
        return j

    def bin_center(self, j: int) -> float:
        if not (1 <= j <= self.n_bins):
            raise IndexOutOfRange(f"bin index {j} outside 1..{self.n_bins}")
        return self.z_min + (j - 0.5) * self.step

    def centers(self) -> np.ndarray:
        return self.z_min + (np.arange(1, self.n_bins + 1) - 0.5) * self.step

    def bin_indices(self, z_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized bin_index: (0-based indices, in-grid mask)."""
        j = 1 + np.floor((z_p - self.z_min) / self.step).astype(np.int64)
        ok = (z_p >= self.z_min) & (z_p < self.z_max) & (j >= 1) & (j <= self.n_bins)
        return j - 1, ok

    def to_dict(self) -> dict:
        return {
            "z_min": self.z_min,
            "z_max": self.z_max,
            "step": self.step,
            "n_bins": self.n_bins,
            "n_min_support": self.n_min_support,
        }


@dataclass(frozen=True)
class SurfaceCell:
    lag: int
    bin: int  # 1-based
    center: float
    count: int
    mean_zp: float  # nan when count == 0
    mean_zr: float
    mean_r_raw: float
    valid: bool


@dataclass
class Surface:
    grid: BinGrid
    moments: list[LagMoments]
    counts: np.ndarray      # int64 [n_lags, n_bins]
    mean_zp: np.ndarray     # float64, nan where count == 0
    mean_zr: np.ndarray
    mean_r_raw: np.ndarray
    out_of_grid: np.ndarray  # int64 [n_lags]
    excluded_lags: list[dict] = field(default_factory=list)

    @property
    def lags(self) -> list[int]:
        return [m.lag for m in self.moments]

    @property
    def valid(self) -> np.ndarray:
        return self.counts >= self.grid.n_min_support

    def lag_row(self, lag: int) -> int:
        try:
            return self.lags.index(lag)
        except ValueError:
            raise MissingMoments(lag) from None

    def cell(self, lag: int, j: int) -> SurfaceCell:
        row = self.lag_row(lag)
        col = j - 1
        if not (1 <= j <= self.grid.n_bins):
            raise IndexOutOfRange(f"bin index {j} outside 1..{self.grid.n_bins}")
        count = int(self.counts[row, col])
        return SurfaceCell(
            lag=lag,
            bin=j,
            center=self.grid.bin_center(j),
            count=count,
            mean_zp=float(self.mean_zp[row, col]),
            mean_zr=float(self.mean_zr[row, col]),
            mean_r_raw=float(self.mean_r_raw[row, col]),
            valid=count >= self.grid.n_min_support,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Surface):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.moments == other.moments
            and np.array_equal(self.counts, other.counts)
            and _nan_equal(self.mean_zp, other.mean_zp)
            and _nan_equal(self.mean_zr, other.mean_zr)
            and _nan_equal(self.mean_r_raw, other.mean_r_raw)
            and np.array_equal(self.out_of_grid, other.out_of_grid)
        )


def _nan_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))


class _LagAccumulator:
    """Per-lag bin tables: exact counts plus compensated sums."""

    def __init__(self, grid: BinGrid, moments: LagMoments):
        self.grid = grid
        self.moments = moments
        n = grid.n_bins
        self.counts = np.zeros(n, dtype=np.int64)
        self.sum_zp = CompensatedSums((n,))
        self.sum_zr = CompensatedSums((n,))
        self.sum_r = CompensatedSums((n,))
        self.out_of_grid = 0
        self.n_seen = 0

    def add_session(self, mids: np.ndarray, session) -> None:
        pushes, responses = session_pushes_responses(mids, session, self.moments.lag)
        if pushes.size == 0:
            return
        m = self.moments
        z_p = (pushes - m.mu_p) / m.sigma_p
        z_r = (responses - m.mu_r) / m.sigma_r
        j0, ok = self.grid.bin_indices(z_p)
        self.n_seen += int(pushes.size)
        self.out_of_grid += int(pushes.size - ok.sum())
        jj = j0[ok]
        n = self.grid.n_bins
        self.counts += np.bincount(jj, minlength=n)
        self.sum_zp.add(np.bincount(jj, weights=z_p[ok], minlength=n))
        self.sum_zr.add(np.bincount(jj, weights=z_r[ok], minlength=n))
        self.sum_r.add(np.bincount(jj, weights=responses[ok], minlength=n))


def accumulate_surface(
    series: MidSeries,
    moment_rows: list[MomentRow],
    grid: BinGrid,
    threads: int = 1,
) -> Surface:
    """One sweep per lag over all sessions; lags are independent jobs."""
    usable = [row.moments for row in moment_rows if row.moments is not None]
    excluded = [
        {"lag": row.lag, "n_pairs": row.n_pairs, "reason": row.excluded}
        for row in moment_rows
        if row.moments is None
    ]

    def run(m: LagMoments) -> _LagAccumulator:
        acc = _LagAccumulator(grid, m)
        for s in series.sessions:
            acc.add_session(series.mids, s)
        if acc.n_seen != m.n_pairs:
            raise MissingMoments(m.lag)
        return acc

    if threads > 1 and len(usable) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            accs = list(pool.map(run, usable))
    else:
        accs = [run(m) for m in usable]

    n_lags, n_bins = len(usable), grid.n_bins
    counts = np.zeros((n_lags, n_bins), dtype=np.int64)
    mean_zp = np.full((n_lags, n_bins), np.nan)
    mean_zr = np.full((n_lags, n_bins), np.nan)
    mean_r = np.full((n_lags, n_bins), np.nan)
    oog = np.zeros(n_lags, dtype=np.int64)
    for i, acc in enumerate(accs):
        counts[i] = acc.counts
        oog[i] = acc.out_of_grid
        nz = acc.counts > 0
        mean_zp[i, nz] = acc.sum_zp.total[nz] / acc.counts[nz]
        mean_zr[i, nz] = acc.sum_zr.total[nz] / acc.counts[nz]
        mean_r[i, nz] = acc.sum_r.total[nz] / acc.counts[nz]
    return Surface(
        grid=grid,
        moments=usable,
        counts=counts,
        mean_zp=mean_zp,
        mean_zr=mean_zr,
        mean_r_raw=mean_r,
        out_of_grid=oog,
        excluded_lags=excluded,
    )


SURFACE_HEADER = ["lag", "bin", "center", "count", "mean_zp", "mean_zr", "mean_r_raw", "valid"]


def write_surface_csv(surface: Surface, path: str | Path) -> None:
    """One row per cell with count > 0; zero-count cells carry nothing."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SURFACE_HEADER)
            valid = surface.valid
            for i, m in enumerate(surface.moments):
                nz = np.nonzero(surface.counts[i])[0]
                for col in nz:
                    j = int(col) + 1
                    w.writerow(
                        [
                            m.lag,
                            j,
                            repr(surface.grid.bin_center(j)),
                            int(surface.counts[i, col]),
                            repr(float(surface.mean_zp[i, col])),
                            repr(float(surface.mean_zr[i, col])),
                            repr(float(surface.mean_r_raw[i, col])),
                            "true" if valid[i, col] else "false",
                        ]
                    )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def surface_manifest(surface: Surface) -> dict:
    return {
        "format": "surface-csv",
        "grid": surface.grid.to_dict(),
        "lags": surface.lags,
        "n_pairs": {str(m.lag): m.n_pairs for m in surface.moments},
        "out_of_grid": {
            str(m.lag): int(surface.out_of_grid[i])
            for i, m in enumerate(surface.moments)
        },
        "excluded_lags": surface.excluded_lags,
        "moments": [
            {
                "lag": m.lag,
                "n_pairs": m.n_pairs,
                "mu_p": m.mu_p,
                "sigma_p": m.sigma_p,
                "mu_r": m.mu_r,
                "sigma_r": m.sigma_r,
            }
            for m in surface.moments
        ],
    }


def read_surface_csv(path: str | Path, manifest: dict) -> Surface:
    """Rebuild a Surface from its CSV plus sidecar manifest."""
    g = manifest["grid"]
    grid = BinGrid(
        z_min=g["z_min"],
        z_max=g["z_max"],
        step=g["step"],
        n_min_support=g["n_min_support"],
    )
    moments = [
        LagMoments(
            lag=m["lag"],
            n_pairs=m["n_pairs"],
            mu_p=m["mu_p"],
            sigma_p=m["sigma_p"],
            mu_r=m["mu_r"],
            sigma_r=m["sigma_r"],
        )
        for m in manifest["moments"]
    ]
    row_of = {m.lag: i for i, m in enumerate(moments)}
    n_lags, n_bins = len(moments), grid.n_bins
    counts = np.zeros((n_lags, n_bins), dtype=np.int64)
    mean_zp = np.full((n_lags, n_bins), np.nan)
    mean_zr = np.full((n_lags, n_bins), np.nan)
    mean_r = np.full((n_lags, n_bins), np.nan)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for rec in csv.DictReader(f):
                i = row_of[int(rec["lag"])]
                col = int(rec["bin"]) - 1
                counts[i, col] = int(rec["count"])
                mean_zp[i, col] = float(rec["mean_zp"])
                mean_zr[i, col] = float(rec["mean_zr"])
                mean_r[i, col] = float(rec["mean_r_raw"])
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    oog = np.array(
        [int(manifest["out_of_grid"][str(m.lag)]) for m in moments], dtype=np.int64
    )
    return Surface(
        grid=grid,
        moments=moments,
        counts=counts,
        mean_zp=mean_zp,
        mean_zr=mean_zr,
        mean_r_raw=mean_r,
        out_of_grid=oog,
        excluded_lags=list(manifest.get("excluded_lags", [])),
    )
