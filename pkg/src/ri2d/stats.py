"""The compound-Poisson excursion count N and generic test statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .lattice import Disk, ball_sites
from .potential import PotentialTable, capacity
from .walks import as_generator

MODES = ("exact-capacity", "asymptotic")


def target_disk(s: float) -> Disk:
    """B(x_s, s / ln^2 s) with x_s = (round(s), 0)."""
    return Disk((int(round(s)), 0), s / math.log(s) ** 2)


def target_capacity(s: float, table: PotentialTable | None = None) -> float:
    """cap({0} U B(x_s, s / ln^2 s))."""
    pts = np.vstack([[[0, 0]], ball_sites(target_disk(s))])
    return capacity(pts, table)


@dataclass(frozen=True)
class NSampleSpec:
    """Law of N: Poisson(rate) many i.i.d. exponentials of mean ``mean``.

    The scale enters through ``log_s`` so that ln s = 400 is representable.
    """

    log_s: float
    mode: str
    rate: float
    mean: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.rate > 0 or not self.mean > 0:
            raise ValueError("rate and mean must be positive")

    @classmethod
    def asymptotic(cls, log_s: float) -> "NSampleSpec":
        return cls(float(log_s), "asymptotic", 2.0 * log_s, float(log_s))

    @classmethod
    def exact(cls, s: float, table: PotentialTable | None = None) -> "NSampleSpec":
        ls = math.log(s)
        return cls(ls, "exact-capacity", math.pi * target_capacity(s, table), ls)

    @property
    def center(self) -> float:
        return 2.0 * self.log_s ** 2

    @property
    def scale(self) -> float:
        return 2.0 * self.log_s ** 1.5


def sample_N(spec: NSampleSpec, rng, size: int | None = None):
    """Draw N; a Poisson number of exponential summands is a Gamma variable."""
    rng = as_generator(rng)
    m = rng.poisson(spec.rate, size=size)
    out = np.where(m > 0, rng.gamma(np.maximum(m, 1), spec.mean), 0.0)
    return float(out) if size is None else out


def normalized_N(spec: NSampleSpec, samples: int, rng) -> np.ndarray:
    return (sample_N(spec, rng, samples) - spec.center) / spec.scale


def ks_distance(samples, cdf) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    return float(sps.kstest(x, cdf).statistic)


def ks_normal_check(log_s: float, samples: int, rng, mode: str = "asymptotic",
                    spec: NSampleSpec | None = None) -> float:
    """KS distance between (N - 2 ln^2 s) / (2 ln^{3/2} s) and N(0, 1)."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    spec = spec or _spec(log_s, mode)
    return ks_distance(normalized_N(spec, samples, rng), sps.norm.cdf)


def _spec(log_s, mode):
    if mode == "asymptotic":
        return NSampleSpec.asymptotic(log_s)
    return NSampleSpec.exact(math.exp(log_s))


def wilson_ci(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    ci = sps.binomtest(int(successes), int(trials)).proportion_ci(level, method="wilson")
    lo = 0.0 if successes == 0 else float(ci.low)
    hi = 1.0 if successes == trials else float(ci.high)
    return lo, hi


def downward_prob(log_s: float, samples: int, rng, mode: str = "asymptotic",
                  threshold: float | None = None, level: float = 0.99,
                  spec: NSampleSpec | None = None):
    """P[N <= 2 ln^2 s - ln^{3/2} s] by Monte Carlo, with a Wilson interval."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    spec = spec or _spec(log_s, mode)
    if threshold is None:
        threshold = 2 * log_s ** 2 - log_s ** 1.5
    hits = int(np.count_nonzero(sample_N(spec, rng, samples) <= threshold))
    return hits / samples, wilson_ci(hits, samples, level)


def chi_square(observed, expected, min_expected: float = 5.0) -> float:
    """Pearson chi-square p-value.

    ``expected`` may be probabilities or counts; it is rescaled to the
    observed total.  Cells with expected count below ``min_expected`` are
    pooled (in order) so the asymptotic law applies.
    """
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.ndim != 1:
        raise ValueError("observed and expected must be 1-d and equal length")
    if np.any(e <= 0):
        raise ValueError("expected masses must be positive")
    e = e * o.sum() / e.sum()
    ob, eb = [], []
    acc_o = acc_e = 0.0
    for oi, ei in zip(o, e):
        acc_o += oi
        acc_e += ei
        if acc_e >= min_expected:
            ob.append(acc_o)
            eb.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if eb:
            ob[-1] += acc_o
            eb[-1] += acc_e
        else:
            ob.append(acc_o)
            eb.append(acc_e)
    if len(eb) < 2:
        return 1.0
    ob, eb = np.array(ob), np.array(eb)
    if np.allclose(ob, eb, rtol=0, atol=1e-9):
        return 1.0
    return float(sps.chisquare(ob, eb).pvalue)


def poisson_chi_square(counts, lam: float) -> float:
    """Chi-square p-value of integer samples against Poisson(lam)."""
    c = np.asarray(counts, dtype=np.int64)
    top = int(max(c.max(), sps.poisson.ppf(1 - 1e-9, lam))) + 1
    obs = np.bincount(c, minlength=top + 1)[:top + 1].astype(float)
    p = sps.poisson.pmf(np.arange(top + 1), lam)
    p[-1] += sps.poisson.sf(top, lam)
    return chi_square(obs, p)


def psi_star(s: float) -> float:
    """2 ln^2 m0 - 3 ln m0 ln ln m0 with m0 = s / ln^2 s."""
    m0 = s / math.log(s) ** 2
    lm = math.log(m0)
    return 2 * lm * lm - 3 * lm * math.log(lm)


def ri_count_budget(s: float) -> float:
    return 2 * math.log(s) ** 2 - math.log(s) ** 1.5
