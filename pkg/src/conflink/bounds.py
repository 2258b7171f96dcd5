"""Uniform FDP bounds over the rejection path.

The inflation term ``lambda(m, ell, delta)`` is the ``1 - delta`` quantile of
the one-sided supremum deviation ``max_k (F(k) - k / (m + 1))`` of the
cumulative colour histogram of a Polya urn (``m + 1`` colours, ``ell`` draws)
above the identity. It can be taken from the closed-form upper estimate
:func:`lambda_closed_form` or estimated by Monte Carlo.

Three curve forms are available for ``t -> bound on FDP(R(t))``:

``paper``       ``m (1 + lambda) / (1 v |R(t)|)``
``t_scaled``    ``m t (1 + lambda) / (1 v |R(t)|)``
``t_additive``  ``m (t + lambda) / (1 v |R(t)|)``
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .conformal import PValueFamily
from .errors import ContractViolation, ParameterError

BOUND_FORMS = ("paper", "t_scaled", "t_additive")
LAMBDA_METHODS = ("closed_form", "polya_mc")
MIN_MC_SAMPLES = 1000
DEFAULT_MC_SAMPLES = 100_000
# rows of urn histograms simulated at once; bounds memory at roughly
# _CHUNK * (m + ell) bytes
_CHUNK_CELLS = 20_000_000


@dataclass(frozen=True)
class LambdaEstimate:
    m: int
    ell: int
    delta: float
    method: str
    value: float
    mc_samples: Optional[int] = None
    mc_seed: Optional[int] = None
    mc_standard_error: Optional[float] = None


def _check_common(m, ell, delta):
    if m < 1 or ell < 1:
        raise ParameterError(f"m and ell must be at least 1, got m={m}, ell={ell}")
    if not (0 < delta < 1):
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")


def lambda_closed_form(m, ell, delta) -> LambdaEstimate:
    _check_common(m, ell, delta)
    k = min(m, ell)
    value = math.sqrt((math.log(1 / delta) + math.log(1 + 2 * math.sqrt(math.pi) * k)) / k)
    return LambdaEstimate(m=m, ell=ell, delta=delta, method="closed_form", value=value)


# ------------------------------------------------------------------ Polya urn

def polya_urn_draw(m, ell, rng) -> np.ndarray:
    """Sequential urn: ``m + 1`` colours, one ball each, ``ell`` reinforced draws."""
    if m < 0 or ell < 0:
        raise ParameterError("m and ell must be non-negative")
    balls = np.ones(m + 1, dtype=np.int64)
    for _ in range(ell):
        u = rng.random() * balls.sum()
        colour = int(np.searchsorted(np.cumsum(balls), u, side="right"))
        balls[colour] += 1
    return balls - 1


def polya_histograms(m, ell, size, rng) -> np.ndarray:
    """``size`` independent urn histograms, shape ``(size, m + 1)``.

    After ``ell`` draws the urn histogram is uniform over the compositions of
    ``ell`` into ``m + 1`` non-negative parts. A composition is a uniformly
    random placement of ``m`` bars among ``ell + m`` slots; the stars between
    consecutive bars are the colour counts.
    """
    if m < 0 or ell < 0:
        raise ParameterError("m and ell must be non-negative")
    slots = np.zeros((size, ell + m), dtype=bool)
    slots[:, :m] = True
    slots = rng.permuted(slots, axis=1)
    stars_before = np.cumsum(~slots, axis=1)[slots].reshape(size, m)
    edges = np.concatenate([np.zeros((size, 1), dtype=np.int64), stars_before,
                            np.full((size, 1), ell, dtype=np.int64)], axis=1)
    return np.diff(edges, axis=1)


def sup_deviations(histograms, m, ell) -> np.ndarray:
    """Row-wise ``max(0, max_k F(k) - k / (m + 1))`` for an array of histograms."""
    hist = np.atleast_2d(np.asarray(histograms))
    if hist.shape[1] != m + 1:
        raise ContractViolation(f"histogram must have {m + 1} colours, got {hist.shape[1]}")
    if (hist < 0).any() or not (hist.sum(axis=1) == ell).all():
        raise ContractViolation(f"histogram counts must be non-negative and sum to {ell}")
    if ell == 0:
        return np.zeros(len(hist))
    cdf = np.cumsum(hist, axis=1) / ell
    identity = np.arange(1, m + 2) / (m + 1)
    return np.maximum((cdf - identity).max(axis=1), 0.0)


def polya_sup_deviation(histogram, m, ell) -> float:
    return float(sup_deviations(np.asarray(histogram)[None, :], m, ell)[0])


def polya_mc_statistics(m, ell, samples, seed) -> np.ndarray:
    """Sup-deviation statistics of ``samples`` urns, in simulation order."""
    rng = np.random.default_rng(seed)
    chunk = max(1, _CHUNK_CELLS // max(1, m + ell))
    out = np.empty(samples)
    for start in range(0, samples, chunk):
        size = min(chunk, samples - start)
        out[start:start + size] = sup_deviations(polya_histograms(m, ell, size, rng), m, ell)
    return out


def upper_quantile(values, q) -> float:
    """The ``ceil(q * n)``-th order statistic (at least the first)."""
    srt = np.sort(values)
    k = max(1, math.ceil(q * len(srt) - 1e-12))
    return float(srt[min(k, len(srt)) - 1])


def quantile_standard_error(values, q) -> float:
    """Half-width of the order-statistic interval ``q -/+ sqrt(q (1 - q) / n)``."""
    srt = np.sort(values)
    n = len(srt)
    s = math.sqrt(q * (1 - q) / n)
    lo = srt[max(0, min(n - 1, math.floor((q - s) * n)))]
    hi = srt[max(0, min(n - 1, math.ceil((q + s) * n) - 1))]
    return float(hi - lo) / 2.0


def lambda_polya_mc(m, ell, delta, samples=DEFAULT_MC_SAMPLES, seed=0) -> LambdaEstimate:
    _check_common(m, ell, delta)
    if samples < MIN_MC_SAMPLES:
        raise ParameterError(f"need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {samples}")
    stats = polya_mc_statistics(m, ell, samples, seed)
    return LambdaEstimate(
        m=m, ell=ell, delta=delta, method="polya_mc",
        value=upper_quantile(stats, 1 - delta),
        mc_samples=samples, mc_seed=seed,
        mc_standard_error=quantile_standard_error(stats, 1 - delta),
    )


def estimate_lambda(m, ell, delta, method="closed_form", samples=DEFAULT_MC_SAMPLES, seed=0):
    if method == "closed_form":
        return lambda_closed_form(m, ell, delta)
    if method == "polya_mc":
        return lambda_polya_mc(m, ell, delta, samples=samples, seed=seed)
    raise ParameterError(f"lambda method must be one of {LAMBDA_METHODS}, got {method!r}")


# ------------------------------------------------------------------ curves

@dataclass(frozen=True, eq=False)
class BoundCurve:
    """One row per attainable threshold ``t = k / (ell + 1)``, ``k = 1..ell+1``."""

    ell: int
    numerators: np.ndarray
    rejections: np.ndarray
    raw: np.ndarray
    lam: LambdaEstimate
    form: str

    @property
    def thresholds(self) -> np.ndarray:
        return self.numerators / (self.ell + 1)

    @property
    def clipped(self) -> np.ndarray:
        return np.minimum(self.raw, 1.0)

    def threshold(self, row) -> Fraction:
        return Fraction(int(self.numerators[row]), self.ell + 1)


def path_counts(numerators, ell) -> np.ndarray:
    """``|R(k / (ell + 1))|`` for ``k = 1..ell+1``."""
    hist = np.bincount(np.asarray(numerators, dtype=np.int64), minlength=ell + 2)
    return np.cumsum(hist)[1:ell + 2]


def bound_values(rejections, thresholds, m, lam, form) -> np.ndarray:
    denom = np.maximum(rejections, 1)
    if form == "paper":
        return m * (1 + lam) / denom
    if form == "t_scaled":
        return m * thresholds * (1 + lam) / denom
    if form == "t_additive":
        return m * (thresholds + lam) / denom
    raise ParameterError(f"bound form must be one of {BOUND_FORMS}, got {form!r}")


def bound_curve(p: PValueFamily, lam: LambdaEstimate, form="paper") -> BoundCurve:
    if (lam.m, lam.ell) != (p.m, p.ell):
        raise ContractViolation(
            f"lambda computed for (m, ell)=({lam.m}, {lam.ell}) but p-values have "
            f"({p.m}, {p.ell})")
    numerators = np.arange(1, p.ell + 2)
    rejections = path_counts(p.numerators, p.ell)
    raw = bound_values(rejections, numerators / (p.ell + 1), p.m, lam.value, form)
    return BoundCurve(ell=p.ell, numerators=numerators, rejections=rejections, raw=raw,
                      lam=lam, form=form)
