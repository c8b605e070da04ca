"""Outlier controls on the mid-price series.

Two passes, applied in this order:

1. winsorize_returns: one-event increments within each session are
   clamped to the [lower_q, upper_q] empirical quantiles, with the
   quantiles taken over all sessions pooled. Prices are rebuilt by
   adding the cumulative clamp adjustment to the original mids, so a
   session with no clamped increment stays bit-identical.
2. remove_jumps: any consecutive pair whose absolute increment exceeds
   the jump threshold has both events removed. Marking happens in a
   single pass against the original neighbor structure; compaction may
   create new adjacencies which are deliberately not re-filtered.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput
from .series import MidSeries, Session, from_session_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CleaningConfig:
    lower_q: float = 0.00001
    upper_q: float = 0.99999
    jump_threshold: float = 1.50

    def __post_init__(self):
        if not (0.0 < self.lower_q < self.upper_q < 1.0):
            raise ValueError(
                f"need 0 < lower_q < upper_q < 1, got {self.lower_q}, {self.upper_q}"
            )
        if self.jump_threshold <= 0:
            raise ValueError(f"jump threshold must be > 0, got {self.jump_threshold}")


@dataclass
class CleaningReport:
    n_input: int = 0
    n_output: int = 0
    n_winsorized_low: int = 0
    n_winsorized_high: int = 0
    n_jump_events_removed: int = 0
    n_sessions_dropped: int = 0
    degenerate: bool = False
    q_low: float | None = None
    q_high: float | None = None

    @property
    def retention_ratio(self) -> float:
        if self.n_input == 0:
            return 1.0
        return self.n_output / self.n_input

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_output": self.n_output,
            "n_winsorized_low": self.n_winsorized_low,
            "n_winsorized_high": self.n_winsorized_high,
            "n_jump_events_removed": self.n_jump_events_removed,
            "n_sessions_dropped": self.n_sessions_dropped,
            "degenerate": self.degenerate,
            "q_low": self.q_low,
            "q_high": self.q_high,
            "retention_ratio": self.retention_ratio,
        }


def empirical_quantile(values: np.ndarray, p: float) -> float:
    """Nearest-rank quantile: k-th smallest with k = ceil(p*n), clamped to [1, n]."""
    values = np.asarray(values)
    n = values.size
    if n == 0:
        raise EmptyInput("empirical_quantile of empty array")
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile probability must be in (0, 1), got {p}")
    k = min(max(math.ceil(p * n), 1), n)
    return float(np.partition(values, k - 1)[k - 1])


def session_increments(series: MidSeries, session: Session) -> np.ndarray:
    block = series.session_slice(session)
    return np.diff(block)


def pooled_increments(series: MidSeries) -> np.ndarray:
    parts = [session_increments(series, s) for s in series.sessions]
    parts = [p for p in parts if p.size]
    if not parts:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(parts)


def winsorize_returns(
    series: MidSeries,
    cfg: CleaningConfig,
    bounds: tuple[float, float] | None = None,
) -> tuple[MidSeries, CleaningReport]:
    """Clamp extreme increments and rebuild prices per session.

    `bounds` overrides the quantile values (used to re-apply a previous
    pass exactly); otherwise they are estimated from the pooled
    increments of this series.
    """
    report = CleaningReport(n_input=len(series), n_output=len(series))
    incr = pooled_increments(series)
    if incr.size == 0:
        logger.warning("winsorize: no increments (all sessions shorter than 2 events)")
        return series, report
    if bounds is None:
        if float(incr.min()) == float(incr.max()):
            logger.warning("winsorize: all increments identical; passing through")
            report.degenerate = True
            report.q_low = report.q_high = float(incr[0])
            return series, report
        q_low = empirical_quantile(incr, cfg.lower_q)
        q_high = empirical_quantile(incr, cfg.upper_q)
    else:
        q_low, q_high = bounds
    report.q_low = q_low
    report.q_high = q_high

    new_mids = series.mids.copy()
    for s in series.sessions:
        r = session_increments(series, s)
        if r.size == 0:
            continue
        low_mask = r < q_low
        high_mask = r > q_high
        n_low = int(low_mask.sum())
        n_high = int(high_mask.sum())
        report.n_winsorized_low += n_low
        report.n_winsorized_high += n_high
        if n_low == 0 and n_high == 0:
            continue  # session untouched, stays bit-identical
        adjust = np.zeros_like(r)
        adjust[low_mask] = q_low - r[low_mask]
        adjust[high_mask] = q_high - r[high_mask]
        drift = np.cumsum(adjust)
        new_mids[s.start + 1 : s.end + 1] += drift
    return MidSeries(sessions=list(series.sessions), mids=new_mids), report


def jump_removal_mask(series: MidSeries, threshold: float) -> np.ndarray:
    """Events to drop: both endpoints of every within-session pair with
    |increment| > threshold, judged on original indices in one pass."""
    drop = np.zeros(len(series), dtype=bool)
    for s in series.sessions:
        r = session_increments(series, s)
        if r.size == 0:
            continue
        bad = np.abs(r) > threshold
        idx = np.nonzero(bad)[0]
        if idx.size:
            drop[s.start + idx] = True
            drop[s.start + idx + 1] = True
    return drop


def remove_jumps(
    series: MidSeries, cfg: CleaningConfig
) -> tuple[MidSeries, CleaningReport]:
    report = CleaningReport(n_input=len(series))
    drop = jump_removal_mask(series, cfg.jump_threshold)
    report.n_jump_events_removed = int(drop.sum())
    if report.n_jump_events_removed == 0:
        report.n_output = len(series)
        return series, report

    dates: list[int] = []
    arrays: list[np.ndarray] = []
    for s in series.sessions:
        keep = ~drop[s.start : s.end + 1]
        block = series.session_slice(s)[keep]
        if block.size == 0:
            report.n_sessions_dropped += 1
            logger.warning("session %s emptied by jump filter", s.calendar_date)
            continue
        dates.append(s.date)
        arrays.append(block)
    out = from_session_arrays(dates, arrays)
    report.n_output = len(out)
    return out, report


def clean(
    series: MidSeries, cfg: CleaningConfig
) -> tuple[MidSeries, CleaningReport]:
    """Winsorize first, then remove jumps; merge the two reports."""
    wins, wrep = winsorize_returns(series, cfg)
    out, jrep = remove_jumps(wins, cfg)
    merged = CleaningReport(
        n_input=wrep.n_input,
        n_output=jrep.n_output,
        n_winsorized_low=wrep.n_winsorized_low,
        n_winsorized_high=wrep.n_winsorized_high,
        n_jump_events_removed=jrep.n_jump_events_removed,
        n_sessions_dropped=jrep.n_sessions_dropped,
        degenerate=wrep.degenerate,
        q_low=wrep.q_low,
        q_high=wrep.q_high,
    )
    return out, merged
