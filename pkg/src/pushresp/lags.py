"""Lag families, admissible anchors, and per-lag push/response moments.

For a lag L and anchor index t, the push is mids[t] - mids[t-L] and the
response is mids[t+L] - mids[t]. An anchor is admissible when t-L, t and
t+L all fall inside one session. Moments (mean and population standard
deviation of pushes and responses over all admissible anchors) are the
standardization constants for everything downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .accum import MomentAccumulator
from .errors import ArtifactIOError, InsufficientSupport, InvalidGrid, ZeroVariance
from .series import MidSeries, Session

DEFAULT_SHORT_LAGS = (1,) + tuple(range(50, 5001, 50))
DEFAULT_LONG_LAGS = tuple(range(1000, 500001, 1000))


def validate_lags(lags) -> tuple[int, ...]:
    lags = tuple(int(x) for x in lags)
    if not lags:
        raise InvalidGrid("lag family is empty")
    if any(x < 1 for x in lags):
        raise InvalidGrid(f"lags must be >= 1, got {min(lags)}")
    if any(b <= a for a, b in zip(lags, lags[1:])):
        raise InvalidGrid("lags must be strictly increasing")
    return lags


@dataclass(frozen=True)
class LagGrid:
    short_family: tuple[int, ...] = DEFAULT_SHORT_LAGS
    long_family: tuple[int, ...] = DEFAULT_LONG_LAGS

    def __post_init__(self):
        object.__setattr__(self, "short_family", validate_lags(self.short_family))
        object.__setattr__(self, "long_family", validate_lags(self.long_family))

    def family(self, name: str) -> tuple[int, ...]:
        if name == "short":
            return self.short_family
        if name == "long":
            return self.long_family
        raise InvalidGrid(f"unknown lag family '{name}'")


def build_lag_grid(short=None, long=None) -> LagGrid:
    return LagGrid(
        short_family=DEFAULT_SHORT_LAGS if short is None else tuple(short),
        long_family=DEFAULT_LONG_LAGS if long is None else tuple(long),
    )


def admissible_anchors(session: Session, lag: int) -> range:
    """Anchor indices t with t-L and t+L inside the session (may be empty)."""
    if lag < 1:
        raise InvalidGrid(f"lag must be >= 1, got {lag}")
    return range(session.start + lag, session.end - lag + 1)


def anchor_count(sessions: list[Session], lag: int) -> int:
    return sum(max(0, len(s) - 2 * lag) for s in sessions)


@dataclass(frozen=True)
class PushResponsePair:
    anchor: int
    push: float
    response: float


@dataclass(frozen=True)
class StandardizedPair:
    z_p: float
    z_r: float


@dataclass(frozen=True)
class LagMoments:
    lag: int
    n_pairs: int
    mu_p: float
    sigma_p: float
    mu_r: float
    sigma_r: float


def session_pushes_responses(
    mids: np.ndarray, session: Session, lag: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pushes/responses over the session's admissible anchors."""
    a0 = session.start + lag
    a1 = session.end - lag  # inclusive
    if a1 < a0:
        empty = np.empty(0, dtype=np.float64)
        return empty, empty
    pushes = mids[a0 : a1 + 1] - mids[a0 - lag : a1 - lag + 1]
    responses = mids[a0 + lag : a1 + lag + 1] - mids[a0 : a1 + 1]
    return pushes, responses


def compute_moments(series: MidSeries, lag: int) -> LagMoments:
    """Mean and population std of pushes and responses at one lag.

    Session partials merge in session order, so the result does not
    depend on chunking.
    """
    acc_p = MomentAccumulator()
    acc_r = MomentAccumulator()
    for s in series.sessions:
        pushes, responses = session_pushes_responses(series.mids, s, lag)
        acc_p.add_batch(pushes)
        acc_r.add_batch(responses)
    if acc_p.count < 2:
        raise InsufficientSupport(lag, acc_p.count)
    sigma_p = acc_p.std
    sigma_r = acc_r.std
    if sigma_p == 0.0:
        raise ZeroVariance(lag, "push")
    if sigma_r == 0.0:
        raise ZeroVariance(lag, "response")
    return LagMoments(
        lag=lag,
        n_pairs=acc_p.count,
        mu_p=acc_p.mean,
        sigma_p=sigma_p,
        mu_r=acc_r.mean,
        sigma_r=sigma_r,
    )


def standardize(pair: PushResponsePair, m: LagMoments) -> StandardizedPair:
    return StandardizedPair(
        z_p=(pair.push - m.mu_p) / m.sigma_p,
        z_r=(pair.response - m.mu_r) / m.sigma_r,
    )


@dataclass(frozen=True)
class MomentRow:
    """One lag's moments, or the reason the lag was excluded."""

    lag: int
    n_pairs: int
    moments: LagMoments | None
    excluded: str | None  # None, "insufficient_support" or "zero_variance"


def compute_moments_table(series: MidSeries, lags) -> list[MomentRow]:
    rows = []
    for lag in validate_lags(lags):
        try:
            m = compute_moments(series, lag)
            rows.append(MomentRow(lag=lag, n_pairs=m.n_pairs, moments=m, excluded=None))
        except InsufficientSupport as exc:
            rows.append(
                MomentRow(lag=lag, n_pairs=exc.n_pairs, moments=None,
                          excluded="insufficient_support")
            )
        except ZeroVariance:
            rows.append(
                MomentRow(lag=lag, n_pairs=anchor_count(series.sessions, lag),
                          moments=None, excluded="zero_variance")
            )
    return rows


MOMENTS_HEADER = ["lag", "n_pairs", "mu_p", "sigma_p", "mu_r", "sigma_r"]


def write_moments_csv(rows: list[MomentRow], path: str | Path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(MOMENTS_HEADER)
            for row in rows:
                if row.moments is None:
                    w.writerow([row.lag, row.n_pairs, "", "", "", ""])
                else:
                    m = row.moments
                    w.writerow(
                        [m.lag, m.n_pairs, repr(m.mu_p), repr(m.sigma_p),
                         repr(m.mu_r), repr(m.sigma_r)]
                    )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def read_moments_csv(path: str | Path) -> list[MomentRow]:
    rows: list[MomentRow] = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            for rec in reader:
                lag = int(rec["lag"])
                n_pairs = int(rec["n_pairs"])
                if rec["mu_p"] == "":
                    reason = "insufficient_support" if n_pairs < 2 else "zero_variance"
                    rows.append(MomentRow(lag, n_pairs, None, reason))
                else:
                    m = LagMoments(
                        lag=lag,
                        n_pairs=n_pairs,
                        mu_p=float(rec["mu_p"]),
                        sigma_p=float(rec["sigma_p"]),
                        mu_r=float(rec["mu_r"]),
                        sigma_r=float(rec["sigma_r"]),
                    )
                    rows.append(MomentRow(lag, n_pairs, m, None))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    return rows


def parse_lag_selector(selector: str) -> tuple[int, ...]:
    """Parse the CLI lag selector: 'short', 'long', 'file:<path>' or 'a,b,c'."""
    if selector == "short":
        return DEFAULT_SHORT_LAGS
    if selector == "long":
        return DEFAULT_LONG_LAGS
    if selector.startswith("file:"):
        path = Path(selector[5:])
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ArtifactIOError(f"cannot read lag file {path}: {exc}") from exc
        values = [int(tok) for tok in text.split()]
        return validate_lags(values)
    try:
        values = [int(tok) for tok in selector.split(",") if tok.strip()]
    except ValueError as exc:
        raise InvalidGrid(f"cannot parse lag selector '{selector}'") from exc
    return validate_lags(values)
