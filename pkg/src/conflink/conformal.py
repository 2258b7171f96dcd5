"""Calibration sampling, conformal p-values and the BH step-up procedure.

P-values are kept as integer numerators over ``ell + 1``. Thresholds are
converted to :class:`fractions.Fraction` so that every comparison
``p <= t`` is exact; a float threshold is read as the closest fraction with
denominator at most ``10**12`` (which recovers ``k / (ell + 1)`` from its
float rounding).
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import ContractViolation, InsufficientDataError, ParameterError
from .graph import EdgePartition, as_pair_set, pair_mask
from .scoring import ScoreTable

CALIBRATION_KINDS = ("fraction", "fixed")


def as_fraction(t) -> Fraction:
    if isinstance(t, Rational):
        return Fraction(t)
    return Fraction(float(t)).limit_denominator(10**12)


@dataclass(frozen=True)
class CalibrationRule:
    """Calibration size as a function of ``k0`` alone."""

    kind: str = "fraction"
    fraction: float = 0.5
    fixed_size: int = 1

    def __post_init__(self):
        if self.kind not in CALIBRATION_KINDS:
            raise ParameterError(f"calibration kind must be one of {CALIBRATION_KINDS}")
        if self.kind == "fraction" and not (0 < self.fraction < 1):
            raise ParameterError(f"fraction must lie in (0, 1), got {self.fraction}")
        if self.kind == "fixed" and (int(self.fixed_size) != self.fixed_size or self.fixed_size < 1):
            raise ParameterError(f"fixed_size must be a positive integer, got {self.fixed_size}")


def calibration_size(k0: int, rule: CalibrationRule) -> int:
    """``ceil(fraction * k0)`` or ``fixed_size``, clamped to ``[1, k0 - 1]``."""
    if k0 < 2:
        raise InsufficientDataError(f"need at least 2 observed false edges, got k0={k0}")
    if rule.kind == "fraction":
        ell = math.ceil(rule.fraction * k0)
    else:
        ell = int(rule.fixed_size)
    return min(max(ell, 1), k0 - 1)


def sample_calibration(d0, ell, rng) -> np.ndarray:
    """Uniform ``ell``-subset of ``d0`` without replacement, in the order of ``d0``."""
    d0 = np.asarray(d0, dtype=np.int64).reshape(-1, 2)
    if not (0 <= ell <= len(d0)):
        raise ParameterError(f"cannot draw {ell} calibration pairs from {len(d0)}")
    idx = np.sort(rng.choice(len(d0), size=ell, replace=False))
    return d0[idx]


@dataclass(frozen=True, eq=False)
class PValueFamily:
    """``p[r] = numerators[r] / (ell + 1)`` for test pair ``pairs[r]``."""

    pairs: np.ndarray
    numerators: np.ndarray
    ell: int

    @property
    def m(self) -> int:
        return len(self.pairs)

    @property
    def values(self) -> np.ndarray:
        return self.numerators / (self.ell + 1)

    def as_fractions(self) -> list:
        return [Fraction(int(k), self.ell + 1) for k in self.numerators]

    def counts_at_or_below(self, t) -> int:
        return int(np.count_nonzero(self.numerators <= _grid_floor(t, self.ell)))


@dataclass(frozen=True, eq=False)
class RejectionSet:
    pairs: np.ndarray
    threshold: Fraction

    def __len__(self):
        return len(self.pairs)

    def as_set(self) -> set:
        return as_pair_set(self.pairs)


def conformal_pvalues(scores: ScoreTable, d_cal, d_test) -> PValueFamily:
    """``p = (1 + #{calibration pairs ranked at or above the test pair}) / (ell + 1)``.

    Ranking uses the composite key ``(score, tiebreak)``; one sort over the
    union of calibration and test pairs gives every count at once.
    """
    d_cal = np.asarray(d_cal, dtype=np.int64).reshape(-1, 2)
    d_test = np.asarray(d_test, dtype=np.int64).reshape(-1, 2)
    ell, m = len(d_cal), len(d_test)
    cs, ct = scores.lookup(d_cal)
    ts, tt = scores.lookup(d_test)

    all_s = np.concatenate([cs, ts])
    all_t = np.concatenate([ct, tt])
    is_cal = np.concatenate([np.ones(ell, dtype=np.int64), np.zeros(m, dtype=np.int64)])
    order = np.lexsort((all_t, all_s))
    s_sorted, t_sorted = all_s[order], all_t[order]
    if len(order) > 1:
        dup = (s_sorted[1:] == s_sorted[:-1]) & (t_sorted[1:] == t_sorted[:-1])
        if dup.any():
            raise ContractViolation("composite (score, tiebreak) order has a tie")

    # calibration entries strictly after each position in ascending order
    cal_after = ell - np.cumsum(is_cal[order])
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    numerators = 1 + cal_after[rank[ell:]]
    return PValueFamily(pairs=d_test, numerators=numerators.astype(np.int64), ell=ell)


def _grid_floor(t, ell) -> int:
    """Largest numerator ``k`` with ``k / (ell + 1) <= t``."""
    return math.floor(as_fraction(t) * (ell + 1))


def rejection_path(p: PValueFamily, t) -> RejectionSet:
    """``R(t) = {pairs with p <= t}``."""
    t = as_fraction(t)
    if not (0 <= t <= 1):
        raise ParameterError(f"threshold must lie in [0, 1], got {t}")
    keep = p.numerators <= _grid_floor(t, p.ell)
    return RejectionSet(pairs=p.pairs[keep], threshold=t)


def bh_threshold(numerators, ell, alpha) -> Fraction:
    """BH threshold ``alpha * k_hat / m`` for p-values ``numerators / (ell + 1)``."""
    alpha = as_fraction(alpha)
    if not (0 < alpha < 1):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    m = len(numerators)
    if m < 1:
        raise ParameterError("BH needs at least one p-value")
    srt = np.sort(np.asarray(numerators, dtype=np.int64))
    a_num, a_den = alpha.numerator, alpha.denominator
    # p_(k) <= alpha k / m  <=>  num_(k) * m * a_den <= k * (ell + 1) * a_num
    lhs = srt.astype(object) * (m * a_den)
    rhs = np.arange(1, m + 1, dtype=object) * ((ell + 1) * a_num)
    hits = np.nonzero(lhs <= rhs)[0]
    k_hat = int(hits[-1]) + 1 if len(hits) else 0
    return alpha * k_hat / m


def bh_procedure(p: PValueFamily, alpha) -> RejectionSet:
    return rejection_path(p, bh_threshold(p.numerators, p.ell, alpha))


def fdp_tdp(r: RejectionSet, partition: EdgePartition):
    """False and true discovery proportions of ``r`` against the hidden truth."""
    if not partition.has_ground_truth:
        raise ContractViolation("FDP/TDP need a partition with ground truth")
    n = int(max(partition.d_obs.max(initial=-1), partition.d_test.max(initial=-1))) + 1
    rejected = np.asarray(r.pairs, dtype=np.int64).reshape(-1, 2)
    if len(rejected) == 0:
        return 0.0, 0.0
    n = max(n, int(rejected.max()) + 1)
    h0 = pair_mask(n, partition.h0, directed=True)
    h1 = pair_mask(n, partition.h1, directed=True)
    false_hits = int(h0[rejected[:, 0], rejected[:, 1]].sum())
    true_hits = int(h1[rejected[:, 0], rejected[:, 1]].sum())
    return false_hits / max(1, len(rejected)), true_hits / max(1, len(partition.h1))
