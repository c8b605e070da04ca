"""Symmetric/antisymmetric split of the surface and dominance statistics.

For every lag and absolute bin offset whose two mirror cells are both
valid, the conditional response means split into an even part S (push
magnitude only) and an odd part A (push sign). Local dominance is the
signed share A / (|A| + |S| + eps); an alternative magnitude-share
index (|A| - |S|) / (|A| + |S| + eps) is kept behind a flag because it
maps symmetry dominance to -1. Per lag, pairs are weighted by combined
support and aggregated into a dominance statistic, a magnitude curve
(standardized and raw), and bootstrap confidence bands obtained by
redrawing pairs with the support weights as selection probabilities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cleaning import empirical_quantile
from .errors import ArtifactIOError, IndexOutOfRange, InvalidGrid, NoSupportedPairs
from .surface import Surface

EPSILON = 1e-12

LOCAL_INDEX_CHOICES = ("eq319", "absratio")


@dataclass(frozen=True)
class BootstrapConfig:
    n_replicates: int = 1000
    seed: int = 0
    quantiles: tuple[float, float] = (0.025, 0.975)
    recompute_weights: str = "equal"  # or "selection"

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError(f"need at least 1 replicate, got {self.n_replicates}")
        lo, hi = self.quantiles
        if not (0.0 < lo < hi < 1.0):
            raise ValueError(f"bad quantile pair {self.quantiles}")
        if self.recompute_weights not in ("equal", "selection"):
            raise ValueError(f"unknown recompute mode '{self.recompute_weights}'")


@dataclass(frozen=True)
class MirrorPair:
    lag: int
    abs_index: int      # 1..n_bins/2
    abs_center: float   # center of the positive bin
    n_pos: int
    n_neg: int
    mean_zr_pos: float
    mean_zr_neg: float
    mean_r_raw_pos: float
    mean_r_raw_neg: float
    S: float
    A: float
    rho_local: float
    rho_local_alt: float
    weight: float


@dataclass(frozen=True)
class LagSummary:
    lag: int
    rho: float
    ci_low: float
    ci_high: float
    M: float
    M_raw: float
    n_supported_pairs: int
    degenerate: bool


def mirror_index(j: int, n_bins: int = 320) -> int:
    """Bin paired with j across zero: centers negate each other."""
    if not (1 <= j <= n_bins):
        raise IndexOutOfRange(f"bin index {j} outside 1..{n_bins}")
    return n_bins + 1 - j


def local_dominance(S: float, A: float, eps: float = EPSILON) -> float:
    """Signed share of the odd part; +1 pure antisymmetry, 0 pure symmetry."""
    return A / (abs(A) + abs(S) + eps)


def local_dominance_abs(S: float, A: float, eps: float = EPSILON) -> float:
    """Magnitude share; +1 pure antisymmetry, -1 pure symmetry."""
    return (abs(A) - abs(S)) / (abs(A) + abs(S) + eps)


def decompose(surface: Surface, local_index: str = "eq319") -> list[MirrorPair]:
    """Mirror pairs with both cells valid, in (lag, abs_index) order.

    Weights are normalized per lag over the supported pairs.
    """
    if local_index not in LOCAL_INDEX_CHOICES:
        raise InvalidGrid(f"unknown local index '{local_index}'")
    n_bins = surface.grid.n_bins
    if n_bins % 2 != 0:
        raise InvalidGrid(f"mirror decomposition needs an even bin count, got {n_bins}")
    half = n_bins // 2
    valid = surface.valid
    pairs: list[MirrorPair] = []
    for i, m in enumerate(surface.moments):
        lag_pairs: list[MirrorPair] = []
        for k in range(1, half + 1):
            pos, neg = half + k - 1, half - k  # 0-based columns
            if not (valid[i, pos] and valid[i, neg]):
                continue
            zr_pos = float(surface.mean_zr[i, pos])
            zr_neg = float(surface.mean_zr[i, neg])
            S = 0.5 * (zr_pos + zr_neg)
            A = 0.5 * (zr_pos - zr_neg)
            signed = local_dominance(S, A)
            share = local_dominance_abs(S, A)
            lag_pairs.append(
                MirrorPair(
                    lag=m.lag,
                    abs_index=k,
                    abs_center=surface.grid.bin_center(half + k),
                    n_pos=int(surface.counts[i, pos]),
                    n_neg=int(surface.counts[i, neg]),
                    mean_zr_pos=zr_pos,
                    mean_zr_neg=zr_neg,
                    mean_r_raw_pos=float(surface.mean_r_raw[i, pos]),
                    mean_r_raw_neg=float(surface.mean_r_raw[i, neg]),
                    S=S,
                    A=A,
                    rho_local=signed if local_index == "eq319" else share,
                    rho_local_alt=share if local_index == "eq319" else signed,
                    weight=0.0,
                )
            )
        if lag_pairs:
            w = lag_weights(lag_pairs)
            for p, wi in zip(lag_pairs, w):
                pairs.append(_with_weight(p, float(wi)))
    return pairs


def _with_weight(p: MirrorPair, w: float) -> MirrorPair:
    return MirrorPair(
        lag=p.lag, abs_index=p.abs_index, abs_center=p.abs_center,
        n_pos=p.n_pos, n_neg=p.n_neg,
        mean_zr_pos=p.mean_zr_pos, mean_zr_neg=p.mean_zr_neg,
        mean_r_raw_pos=p.mean_r_raw_pos, mean_r_raw_neg=p.mean_r_raw_neg,
        S=p.S, A=p.A, rho_local=p.rho_local, rho_local_alt=p.rho_local_alt,
        weight=w,
    )


def lag_weights(pairs: list[MirrorPair]) -> np.ndarray:
    """Support weights, proportional to n(+j) + n(-j), summing to 1."""
    if not pairs:
        raise NoSupportedPairs(-1)
    counts = np.array([p.n_pos + p.n_neg for p in pairs], dtype=np.float64)
    return counts / counts.sum()


def rho_lag(
    abs_A: np.ndarray, abs_S: np.ndarray, weights: np.ndarray
) -> tuple[float, bool]:
    """Weighted dominance balance in [-1, 1]; degenerate when all parts vanish."""
    num_a = float(np.dot(weights, abs_A))
    num_s = float(np.dot(weights, abs_S))
    denom = num_a + num_s
    if denom == 0.0:
        return 0.0, True
    return (num_a - num_s) / denom, False


def magnitude(pairs: list[MirrorPair], weights: np.ndarray, scale: str = "standardized") -> float:
    if scale == "standardized":
        halves = np.array(
            [0.5 * (abs(p.mean_zr_pos) + abs(p.mean_zr_neg)) for p in pairs]
        )
    elif scale == "raw":
        halves = np.array(
            [0.5 * (abs(p.mean_r_raw_pos) + abs(p.mean_r_raw_neg)) for p in pairs]
        )
    else:
        raise ValueError(f"unknown magnitude scale '{scale}'")
    return float(np.dot(weights, halves))


def _lag_rng(seed: int, lag: int) -> np.random.Generator:
    # Per-lag stream keyed on (seed, lag): independent of processing order.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(lag,)))


def bootstrap_rho(
    pairs: list[MirrorPair],
    weights: np.ndarray,
    cfg: BootstrapConfig,
) -> tuple[float, float]:
    """Percentile band for the lag dominance statistic.

    Each replicate redraws K pairs (K = supported-pair count) with
    replacement using the support weights as selection probabilities and
    recomputes the statistic on the drawn multiset. Under the default
    convention the multiset is equal-weighted, since selection already
    encodes the weights; 'selection' retains the weights on draws too.
    Only existing supported pairs are ever drawn.
    """
    if not pairs:
        raise NoSupportedPairs(-1)
    lag = pairs[0].lag
    k = len(pairs)
    abs_a = np.array([abs(p.A) for p in pairs])
    abs_s = np.array([abs(p.S) for p in pairs])
    rng = _lag_rng(cfg.seed, lag)
    draws = rng.choice(k, size=(cfg.n_replicates, k), replace=True, p=weights)
    if cfg.recompute_weights == "equal":
        num_a = abs_a[draws].sum(axis=1)
        num_s = abs_s[draws].sum(axis=1)
    else:
        w = np.asarray(weights)
        num_a = (abs_a[draws] * w[draws]).sum(axis=1)
        num_s = (abs_s[draws] * w[draws]).sum(axis=1)
    denom = num_a + num_s
    rho_b = np.zeros(cfg.n_replicates)
    nz = denom > 0
    rho_b[nz] = (num_a[nz] - num_s[nz]) / denom[nz]
    lo = empirical_quantile(rho_b, cfg.quantiles[0])
    hi = empirical_quantile(rho_b, cfg.quantiles[1])
    return lo, hi


def summarize(
    pairs: list[MirrorPair], boot: BootstrapConfig
) -> list[LagSummary]:
    """Per-lag dominance, magnitudes, and bootstrap bands."""
    by_lag: dict[int, list[MirrorPair]] = {}
    for p in pairs:
        by_lag.setdefault(p.lag, []).append(p)
    summaries = []
    for lag in sorted(by_lag):
        lp = by_lag[lag]
        w = np.array([p.weight for p in lp])
        abs_a = np.array([abs(p.A) for p in lp])
        abs_s = np.array([abs(p.S) for p in lp])
        rho, degenerate = rho_lag(abs_a, abs_s, w)
        lo, hi = bootstrap_rho(lp, w, boot)
        summaries.append(
            LagSummary(
                lag=lag,
                rho=rho,
                ci_low=lo,
                ci_high=hi,
                M=magnitude(lp, w, "standardized"),
                M_raw=magnitude(lp, w, "raw"),
                n_supported_pairs=len(lp),
                degenerate=degenerate,
            )
        )
    return summaries


HEATMAP_HEADER = [
    "lag", "abs_index", "abs_center", "S", "A", "rho_local", "rho_local_alt",
    "weight", "n_pos", "n_neg",
    "mean_zr_pos", "mean_zr_neg", "mean_r_raw_pos", "mean_r_raw_neg",
]

SUMMARY_HEADER = [
    "lag", "rho", "ci_low", "ci_high", "M", "M_raw", "n_supported_pairs", "degenerate",
]


def write_heatmap_csv(pairs: list[MirrorPair], path: str | Path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(HEATMAP_HEADER)
            for p in pairs:
                w.writerow(
                    [
                        p.lag, p.abs_index, repr(p.abs_center),
                        repr(p.S), repr(p.A),
                        repr(p.rho_local), repr(p.rho_local_alt),
                        repr(p.weight), p.n_pos, p.n_neg,
                        repr(p.mean_zr_pos), repr(p.mean_zr_neg),
                        repr(p.mean_r_raw_pos), repr(p.mean_r_raw_neg),
                    ]
                )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def read_heatmap_csv(path: str | Path) -> list[MirrorPair]:
    pairs = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for rec in csv.DictReader(f):
                pairs.append(
                    MirrorPair(
                        lag=int(rec["lag"]),
                        abs_index=int(rec["abs_index"]),
                        abs_center=float(rec["abs_center"]),
                        n_pos=int(rec["n_pos"]),
                        n_neg=int(rec["n_neg"]),
                        mean_zr_pos=float(rec["mean_zr_pos"]),
                        mean_zr_neg=float(rec["mean_zr_neg"]),
                        mean_r_raw_pos=float(rec["mean_r_raw_pos"]),
                        mean_r_raw_neg=float(rec["mean_r_raw_neg"]),
                        S=float(rec["S"]),
                        A=float(rec["A"]),
                        rho_local=float(rec["rho_local"]),
                        rho_local_alt=float(rec["rho_local_alt"]),
                        weight=float(rec["weight"]),
                    )
                )
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    return pairs


def write_summary_csv(summaries: list[LagSummary], path: str | Path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for s in summaries:
                w.writerow(
                    [
                        s.lag, repr(s.rho), repr(s.ci_low), repr(s.ci_high),
                        repr(s.M), repr(s.M_raw), s.n_supported_pairs,
                        "true" if s.degenerate else "false",
                    ]
                )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def read_summary_csv(path: str | Path) -> list[LagSummary]:
    out = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for rec in csv.DictReader(f):
                out.append(
                    LagSummary(
                        lag=int(rec["lag"]),
                        rho=float(rec["rho"]),
                        ci_low=float(rec["ci_low"]),
                        ci_high=float(rec["ci_high"]),
                        M=float(rec["M"]),
                        M_raw=float(rec["M_raw"]),
                        n_supported_pairs=int(rec["n_supported_pairs"]),
                        degenerate=rec["degenerate"] == "true",
                    )
                )
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    return out
