"""Bandwidth-aware edge core allocation across a drone fleet.

Each drone's bandwidth is mapped to an expected offloading ratio by a
logarithmic regression; cores are shared in proportion to those ratios and
then pushed into the per-drone band ``[l, h]``.  Drones that cannot be lifted
to ``l`` are dropped (0 cores) starting from the smallest share.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FitError, TraceFormatError, ValidationError

SAMPLES_HEADER = ("bandwidth_kbps", "offloading_ratio")
ALLOCATION_HEADER = ("epoch", "drone", "cores")
GRANULARITY = 0.1
_TOL = 1e-9


@dataclass(frozen=True)
class OffloadRegression:
    """``f(b) = clamp(a * ln(b) + c0, f_min, f_max)``."""

    a: float
    c0: float
    f_min: float = 0.01
    f_max: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.c0)):
            raise ValidationError("regression coefficients must be finite")
        if not 0.0 <= self.f_min < self.f_max <= 1.0:
            raise ValidationError("need 0 <= f_min < f_max <= 1")


def fit_regression(samples: Iterable[tuple[float, float]], f_min: float = 0.01, f_max: float = 1.0) -> OffloadRegression:
    """Ordinary least squares of the ratio on ln(bandwidth)."""
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise FitError("need at least two (bandwidth, ratio) samples")
    b, f = data[:, 0], data[:, 1]
    if np.any(b <= 0) or not np.all(np.isfinite(data)):
        raise ValidationError("bandwidths must be positive and samples finite")
    if np.any(f < 0) or np.any(f > 1):
        raise ValidationError("offloading ratios must lie in [0, 1]")
    x = np.log(b)
    if np.ptp(x) == 0:
        raise FitError("all samples share one bandwidth")
    if np.ptp(f) == 0:
        # a flat response (e.g. a policy that never offloads) says nothing about bandwidth
        raise FitError("all offloading ratios are identical")
    xm, fm = x.mean(), f.mean()
    a = float(np.dot(x - xm, f - fm) / np.dot(x - xm, x - xm))
    return OffloadRegression(a, float(fm - a * xm), f_min, f_max)


def predict_ratio(model: OffloadRegression, b: float) -> float:
    if not b > 0:
        raise ValidationError(f"bandwidth must be positive, got {b}")
    return min(max(model.a * math.log(b) + model.c0, model.f_min), model.f_max)


def predict_ratios(model: OffloadRegression, bandwidths) -> np.ndarray:
    b = np.asarray(bandwidths, dtype=float)
    if np.any(~(b > 0)):
        raise ValidationError("bandwidths must be positive")
    return np.clip(model.a * np.log(b) + model.c0, model.f_min, model.f_max)


# ----------------------------------------------------------------------------
# allocation


@dataclass(frozen=True)
class AllocationProblem:
    bandwidths: tuple[float, ...]
    lam: float
    h: float = 4.0
    l: float = 0.8  # noqa: E741

    def __post_init__(self) -> None:
        object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
        if not self.bandwidths or any(not (b > 0 and math.isfinite(b)) for b in self.bandwidths):
            raise ValidationError("bandwidths must be a non-empty list of positive values")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError("lambda must be positive")
        if not 0 < self.l < self.h:
            raise ValidationError("need 0 < l < h")

    @property
    def n(self) -> int:
        return len(self.bandwidths)


@dataclass(frozen=True)
class Allocation:
    """Granted cores per drone; ``raw`` holds the values before grid rounding."""

    cores: tuple[float, ...]
    dropped: frozenset[int]
    raw: tuple[float, ...]

    @property
    def total(self) -> float:
        return float(sum(self.cores))


@dataclass(frozen=True)
class PhaseTrace:
    """Intermediate quantities of one allocation run (for inspection and tests)."""

    ratios: np.ndarray
    initial: np.ndarray
    surplus: float
    shortage: float
    capped: tuple[int, ...]
    raised: tuple[int, ...]


def proportional_shares(ratios, lam: float) -> np.ndarray:
    """Split ``lam`` in proportion to ``ratios``."""
    f = np.asarray(ratios, dtype=float)
    if f.size == 0 or np.any(~(f > 0)):
        raise ValidationError("ratios must be positive")
    return lam * f / f.sum()


def surplus_and_shortage(shares, h: float, l: float) -> tuple[float, float]:  # noqa: E741
    """Cores released by capping at ``h`` and cores needed to lift everyone to ``l``."""
    s = np.asarray(shares, dtype=float)
    return float(np.sum(s[s > h] - h)), float(np.sum(l - s[s < l]))


def _water_fill(s: np.ndarray, members: np.ndarray, weights: np.ndarray, amount: float, cap: float) -> float:
    """Add ``amount`` to ``s[members]`` in proportion to ``weights``, capped at ``cap``; return the residue."""
    active = members[s[members] < cap]
    while amount > _TOL and active.size:
        w = weights[active]
        add = amount * w / w.sum()
        room = cap - s[active]
        over = add >= room
        if not over.any():
            s[active] += add
            return 0.0
        amount -= float(room[over].sum())
        s[active[over]] = cap
        active = active[~over]
    return max(amount, 0.0)


def allocate_raw(ratios, lam: float, h: float, l: float) -> tuple[np.ndarray, frozenset[int], PhaseTrace]:  # noqa: E741
    """Two-phase allocation before grid rounding."""
    f = np.asarray(ratios, dtype=float)
    s = proportional_shares(f, lam)
    initial = s.copy()
    n = s.size
    idx = np.arange(n)
    psi = s > h
    phi = s < l
    s_plus = float(np.sum(s[psi] - h))
    s_minus = float(np.sum(l - s[phi]))
    s[psi] = h
    s[phi] = l
    theta = idx[~psi & ~phi]
    # least original share first, lowest index among equals
    phi_order = idx[phi][np.lexsort((idx[phi], initial[phi]))]
    dropped: list[int] = []
    trace = PhaseTrace(f, initial, s_plus, s_minus, tuple(idx[psi].tolist()), tuple(idx[phi].tolist()))
    k = 0
    while s_plus - s_minus < 0 and k < phi_order.size:
        i = int(phi_order[k])
        s[i] = 0.0
        dropped.append(i)
        s_minus -= l
        k += 1
    delta = s_plus - s_minus
    if delta > 0:
        residue = _water_fill(s, theta, f, delta, h)
        if residue > _TOL:
            survivors = phi_order[k:]
            _water_fill(s, survivors, f, residue, h)
    return s, frozenset(dropped), trace


def round_to_grid(raw, lam: float, lo: float, hi: float, dropped: Iterable[int] = (), granularity: float = GRANULARITY):
    """Round each non-dropped value to the nearest grid point inside ``[lo, hi]``.

    The total is then trimmed back to at most ``lam`` by removing grid steps
    from the most rounded-up entries first; if entries already sit at ``lo``
    and the total is still too large, the smallest entry is dropped.
    """
    raw = np.asarray(raw, dtype=float)
    g = granularity
    lo_u = math.ceil(lo / g - _TOL)
    hi_u = math.floor(hi / g + _TOL)
    if lo_u > hi_u:
        raise ValidationError(f"no {g}-core grid point lies in [{lo}, {hi}]")
    budget = math.floor(lam / g + _TOL)
    live = np.ones(raw.size, dtype=bool)
    live[list(dropped)] = False
    units = np.zeros(raw.size, dtype=np.int64)
    units[live] = np.clip(np.floor(raw[live] / g + 0.5 + _TOL), lo_u, hi_u).astype(np.int64)
    idx = np.arange(raw.size)
    extra = set()
    while units.sum() > budget:
        excess = int(units.sum() - budget)
        cand = idx[live & (units > lo_u)]
        if cand.size:
            over = units[cand] * g - raw[cand]
            order = cand[np.lexsort((cand, -over))][:excess]
            units[order] -= 1
            continue
        cand = idx[live]
        worst = int(cand[np.lexsort((cand, raw[cand]))][0])
        units[worst] = 0
        live[worst] = False
        extra.add(worst)
    cores = tuple(round(float(u) * g, 10) for u in units)
    return cores, frozenset(set(dropped) | extra)


def allocate(problem: AllocationProblem, model: OffloadRegression, granularity: float | None = GRANULARITY) -> Allocation:
    f = predict_ratios(model, problem.bandwidths)
    raw, dropped, _ = allocate_raw(f, problem.lam, problem.h, problem.l)
    if granularity is None:
        return Allocation(tuple(float(v) for v in raw), dropped, tuple(float(v) for v in raw))
    cores, dropped = round_to_grid(raw, problem.lam, problem.l, problem.h, dropped, granularity)
    return Allocation(cores, dropped, tuple(float(v) for v in raw))


def allocate_unbounded(problem: AllocationProblem, model: OffloadRegression, granularity: float | None = GRANULARITY) -> Allocation:
    """Proportional split only, with no [l, h] band (ablation)."""
    raw = proportional_shares(predict_ratios(model, problem.bandwidths), problem.lam)
    if granularity is None:
        cores = tuple(float(v) for v in raw)
        return Allocation(cores, frozenset(i for i, c in enumerate(cores) if c == 0), cores)
    cores, _ = round_to_grid(raw, problem.lam, 0.0, problem.lam, (), granularity)
    return Allocation(cores, frozenset(i for i, c in enumerate(cores) if c == 0), tuple(float(v) for v in raw))


def even_allocation(problem: AllocationProblem) -> Allocation:
    share = problem.lam / problem.n
    cores = (share,) * problem.n
    return Allocation(cores, frozenset(), cores)


def agnostic_view(problem: AllocationProblem) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """(perceived, actual): every drone believes it holds all ``lam`` cores, the server splits evenly."""
    return (float(problem.lam),) * problem.n, even_allocation(problem).cores


# ----------------------------------------------------------------------------
# files


def save_regression_samples(samples: Sequence[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLES_HEADER)
        for b, f in samples:
            w.writerow((repr(float(b)), repr(float(f))))


def load_regression_samples(path: str | Path) -> list[tuple[float, float]]:
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != SAMPLES_HEADER:
            raise TraceFormatError(f"expected header {','.join(SAMPLES_HEADER)}", 1)
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            try:
                b, f = (float(v) for v in row)
            except ValueError:
                raise TraceFormatError("expected two numeric fields", lineno) from None
            out.append((b, f))
    return out


def write_allocation_log(rows: Iterable[tuple[int, int, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALLOCATION_HEADER)
        for epoch, drone, cores in rows:
            w.writerow((int(epoch), int(drone), repr(float(cores))))
