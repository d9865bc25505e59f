"""Equiprobable per-region SNR quantizers, bit allocation and feedback load.

Regions are indexed from 0 (the top region, ``[r_1, inf)``) to ``N_c - 1``
(``[r_Nc, r_{Nc-1})``). Within a region, cell edges sit at conditional
quantiles of a reference distribution so every cell is equally likely; each
cell carries two numbers:

* ``levels``: the cell centroid, used by the scheduler to rank reports;
* ``edges[:-1]``: the cell's lower edge, the SNR the base station can rely
  on when it picks a rate, used by the allocation objective.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._validation import check_nonnegative, check_positive_int, check_rates
from .order_stats import MaxOfExponentials

DEFAULT_B_MAX = 6
MAX_CANDIDATES = 5_000_000


class _ConditionalCDF:
    """CDF of `dist` conditioned on ``[lower, upper)``, computed in log space.

    Works from the lower tail when the region lies below the median and from
    the upper tail otherwise, so tiny regions deep in either tail keep full
    relative precision.
    """

    def __init__(self, dist, lower, upper):
        if not (0 <= lower < upper):
            raise ValueError(f"empty region [{lower}, {upper})")
        self.dist, self.lower, self.upper = dist, float(lower), float(upper)
        self.from_below = math.isfinite(upper) and float(dist.logcdf(upper)) <= math.log(0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.from_below:
                self._ref = float(dist.logcdf(upper))
                rel_lo = float(dist.logcdf(lower)) - self._ref
                self.log_mass = self._ref + float(np.log(-np.expm1(rel_lo)))
            else:
                self._ref = float(dist.logsf(lower))
                rel_hi = (float(dist.logsf(upper)) - self._ref
                          if math.isfinite(upper) else -np.inf)
                self.log_mass = self._ref + float(np.log(-np.expm1(rel_hi)))
            self._rel_edge = rel_lo if self.from_below else rel_hi
        if not np.isfinite(self.log_mass):
            raise ValueError(f"region [{lower}, {upper}) has zero probability")

    @property
    def mass(self):
        return math.exp(self.log_mass)

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.from_below:
                num = np.exp(self.dist.logcdf(x) - self._ref) - math.exp(self._rel_edge)
                return np.clip(num / -math.expm1(self._rel_edge), 0.0, 1.0)
            surv = np.exp(self.dist.logsf(x) - self._ref) - math.exp(self._rel_edge)
            return np.clip(1.0 - surv / -math.expm1(self._rel_edge), 0.0, 1.0)

    def survival(self, x):
        """``1 - G(x)`` without cancellation in the upper tail."""
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        if self.from_below:
            return 1.0 - self(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            surv = np.exp(self.dist.logsf(x) - self._ref) - math.exp(self._rel_edge)
        return np.clip(surv / -math.expm1(self._rel_edge), 0.0, 1.0)


def _quantiles(G, targets, lower, upper, n_iter=200):
    """Vectorized bisection for ``G(x) = t`` on ``[lower, upper)``."""
    targets = np.asarray(targets, dtype=float)
    if not math.isfinite(upper):
        upper = max(2.0 * lower, 1.0)
        while G.survival(upper) > (1.0 - targets.max()) * 1e-3:
            upper *= 2.0
    lo = np.full_like(targets, lower)
    hi = np.full_like(targets, upper)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = G(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RegionQuantizer:
    lower: float
    upper: float
    bits: int
    edges: np.ndarray   # 2**bits + 1 ascending cell boundaries, last may be inf
    levels: np.ndarray  # 2**bits cell centroids

    @property
    def n_levels(self):
        return self.levels.size

    def coarsen(self, bits):
        """The nested quantizer with fewer bits: merge groups of equiprobable cells."""
        if not 0 <= bits <= self.bits:
            raise ValueError(f"bits must lie in 0..{self.bits}")
        group = 2 ** (self.bits - bits)
        return RegionQuantizer(self.lower, self.upper, bits, self.edges[::group].copy(),
                               self.levels.reshape(-1, group).mean(axis=1))

    def rate_value(self):
        """Average of ``log2(1 + lower edge)`` over the equiprobable cells."""
        return float(np.mean(np.log2(1.0 + self.edges[:-1])))


def equiprobable_levels(lower, upper, dist, bits):
    """Split ``[lower, upper)`` into ``2**bits`` cells of equal probability under `dist`.

    `dist` needs ``logcdf`` and ``logsf`` (scipy frozen distributions and
    :class:`MaxOfExponentials` both qualify). Each level is the conditional
    mean of its cell.

    Raises
    ------
    ValueError
        If the region is empty or has zero probability under `dist`.
    """
    bits = int(bits)
    if bits < 0:
        raise ValueError("bits must be >= 0")
    G = _ConditionalCDF(dist, lower, upper)
    n = 2 ** bits
    inner = _quantiles(G, np.arange(1, n) / n, G.lower, G.upper) if n > 1 else np.empty(0)
    edges = np.concatenate([[G.lower], inner, [G.upper]])
    cell_mass = 1.0 / n
    levels = np.empty(n)
    for j in range(n):
        a, b = edges[j], edges[j + 1]
        if math.isfinite(b):
            g_b = float(G(b))
            area, _ = integrate.quad(lambda x: g_b - G(x), a, b, epsabs=1e-13, epsrel=1e-11,
                                     limit=200)
        else:
            area, _ = integrate.quad(lambda x: G.survival(x), a, np.inf, epsabs=1e-13,
                                     epsrel=1e-11, limit=200)
        levels[j] = a + area / cell_mass
    return RegionQuantizer(float(G.lower), float(G.upper), bits, edges, levels)


def region_edges(thresholds):
    """``[inf, r_1, ..., r_Nc]``: region ``i`` is ``[edges[i+1], edges[i])``."""
    return np.concatenate([[np.inf], np.asarray(thresholds, dtype=float)])


def region_probability(rate, i, thresholds):
    """P(Exp(rate) falls in region `i`) = ``exp(-rate r_i) - exp(-rate r_{i-1})``."""
    edges = region_edges(thresholds)
    if not 0 <= i < edges.size - 1:
        raise IndexError(f"region {i} out of range for {edges.size - 1} regions")
    return float(np.exp(-rate * edges[i + 1]) - np.exp(-rate * edges[i]))


def region_probability_matrix(rates, thresholds):
    """``out[k, i]``: probability that user `k`'s SNR falls in region `i`."""
    rates = check_rates(rates)
    edges = region_edges(thresholds)
    surv = np.exp(-np.multiply.outer(rates, edges))
    return surv[:, 1:] - surv[:, :-1]


@dataclass(frozen=True)
class FeedbackBudget:
    """Per-user average quantization-bit limits and the region-index bit count."""

    limits: np.ndarray
    region_bits: int = 0

    def __post_init__(self):
        limits = np.atleast_1d(np.asarray(self.limits, dtype=float))
        if np.any(limits < 0) or np.any(np.isnan(limits)):
            raise ValueError("feedback limits must be nonnegative")
        object.__setattr__(self, "limits", limits)
        check_positive_int(self.region_bits, "region_bits", minimum=0)

    @classmethod
    def uniform(cls, limit, n_users, region_bits=0):
        check_nonnegative(limit, "limit")
        return cls(np.full(n_users, float(limit)), region_bits)

    def for_users(self, n_users):
        if self.limits.size == 1:
            return np.full(n_users, self.limits[0])
        if self.limits.size != n_users:
            raise ValueError(f"budget has {self.limits.size} limits for {n_users} users")
        return self.limits


@dataclass(frozen=True)
class QuantizerSpec:
    """Thresholds plus one equiprobable quantizer per nonempty region."""

    thresholds: np.ndarray
    bits: tuple
    regions: tuple  # RegionQuantizer or None for empty regions

    @property
    def region_edges(self):
        return region_edges(self.thresholds)

    def cell_table(self):
        """Flattened cells sorted by lower edge: (lower, level, region, cell, bits)."""
        rows = []
        for i, q in enumerate(self.regions):
            if q is None:
                continue
            for j in range(q.n_levels):
                rows.append((q.edges[j], q.levels[j], i, j, q.bits))
        rows.sort(key=lambda row: row[0])
        table = np.array(rows, dtype=float).reshape(-1, 5)
        return {"lower": table[:, 0], "level": table[:, 1],
                "region": table[:, 2].astype(int), "cell": table[:, 3].astype(int),
                "bits": table[:, 4].astype(int)}

    def to_records(self):
        """Rows ``(region, bits, lower, upper, level list)`` for text export."""
        out = []
        for i, q in enumerate(self.regions):
            if q is None:
                lo = float(self.region_edges[i + 1])
                out.append((i, 0, lo, lo, []))
            else:
                out.append((i, q.bits, q.lower, q.upper, q.levels.tolist()))
        return out


def _region_quantizers(thresholds, dist, b_max):
    edges = region_edges(thresholds)
    out = []
    for i in range(edges.size - 1):
        lo, hi = edges[i + 1], edges[i]
        if not hi > lo:
            out.append(None)
            continue
        out.append(equiprobable_levels(lo, hi, dist, b_max))
    return out


def build_quantizer(thresholds, bits, dist):
    """QuantizerSpec for the given per-region bit vector."""
    thresholds = np.asarray(thresholds, dtype=float)
    bits = tuple(int(b) for b in bits)
    if len(bits) != thresholds.size:
        raise ValueError("need one bit count per region")
    full = _region_quantizers(thresholds, dist, max(bits, default=0))
    regions = tuple(None if q is None else q.coarsen(b) for q, b in zip(full, bits))
    return QuantizerSpec(thresholds, bits, regions)


@dataclass(frozen=True)
class Allocation:
    bits: tuple
    objective: float
    slack: np.ndarray          # limit_k - expected bits_k, >= 0 up to 1e-12
    region_mass: np.ndarray    # P(max SNR in region i)
    rate_table: np.ndarray     # [i, b] mean log2(1 + lower edge) with b bits
    quantizer: QuantizerSpec
    n_candidates: int
    n_feasible: int


def allocation_objective(bits, region_mass, rate_table, n_beams=1):
    """``n_beams * sum_i P(region i) * mean_t log2(1 + q_t^i)`` for one bit vector."""
    idx = np.arange(len(bits))
    return float(n_beams * np.sum(region_mass * rate_table[idx, np.asarray(bits)]))


def allocate_bits(thresholds, rates, budget, b_max=DEFAULT_B_MAX, n_beams=1, dist=None):
    """Exhaustive search for the per-region bit vector maximizing the expected rate.

    Every vector in ``{0..b_max}^N_c`` is scored; a vector is feasible when
    each user's expected quantization bits ``sum_i P_k(region i) b_i`` stay
    within that user's limit. Ties go to the lexicographically smallest vector.
    The reference distribution defaults to the maximum of all users' SNRs.
    """
    rates = check_rates(rates)
    thresholds = np.asarray(thresholds, dtype=float)
    b_max = check_positive_int(b_max, "b_max", minimum=0)
    n_regions = thresholds.size
    dist = MaxOfExponentials(rates) if dist is None else dist
    limits = budget.for_users(rates.size)

    full = _region_quantizers(thresholds, dist, b_max)
    # Empty regions (equal adjacent thresholds) can never be hit; pin them to 0 bits.
    active = np.array([q is not None for q in full])
    n_candidates = (b_max + 1) ** int(active.sum())
    if n_candidates > MAX_CANDIDATES:
        raise ValueError(f"{n_candidates} candidate bit vectors; lower b_max or n_clusters")
    rate_table = np.zeros((n_regions, b_max + 1))
    for i, q in enumerate(full):
        if q is not None:
            rate_table[i] = [q.coarsen(b).rate_value() for b in range(b_max + 1)]
    edges = region_edges(thresholds)
    cdf = np.array([1.0 if np.isinf(e) else float(dist.cdf(e)) for e in edges])
    region_mass = np.clip(cdf[:-1] - cdf[1:], 0.0, 1.0)

    candidates = np.zeros((n_candidates, n_regions), dtype=int)
    candidates[:, active] = np.array(
        list(itertools.product(range(b_max + 1), repeat=int(active.sum())))
    ).reshape(n_candidates, -1)
    user_bits = candidates @ region_probability_matrix(rates, thresholds).T
    feasible = np.all(user_bits <= limits[None, :] + 1e-12, axis=1)
    per_region = rate_table[np.arange(n_regions)[None, :], candidates]
    scores = n_beams * np.sum(region_mass[None, :] * per_region, axis=1)
    scores = np.where(feasible, scores, -np.inf)
    best = int(np.argmax(scores))  # first maximum = lexicographically smallest
    bits = tuple(int(b) for b in candidates[best])
    regions = tuple(None if q is None else q.coarsen(b) for q, b in zip(full, bits))
    return Allocation(bits=bits, objective=float(scores[best]),
                      slack=limits - user_bits[best], region_mass=region_mass,
                      rate_table=rate_table,
                      quantizer=QuantizerSpec(thresholds, bits, regions),
                      n_candidates=n_candidates, n_feasible=int(feasible.sum()))


def expected_feedback_load(rates, smallest_threshold, budget, n_beams):
    """Average uplink bits per scheduling instant:
    ``n_beams * sum_k exp(-rate_k r_min) * (region_bits + limit_k)``.
    """
    rates = check_rates(rates)
    r_min = check_nonnegative(smallest_threshold, "smallest_threshold")
    limits = budget.for_users(rates.size)
    return float(n_beams * np.sum(np.exp(-rates * r_min) * (budget.region_bits + limits)))
