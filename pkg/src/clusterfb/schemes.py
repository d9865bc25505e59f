"""Feedback schemes as scikit-learn style estimators.

Every scheme is fitted on the users' exponential SNR rates (what the base
station knows about long-term channel quality) and then maps instantaneous
SNRs to feedback reports. ``transform`` returns the value the scheduler ranks
by, NaN where the user stays silent; ``report`` returns everything the
simulator needs (bits, region, cell, rate-accounting SNR).

>>> import numpy as np
>>> scheme = ClusterFeedback(variant="type2", n_clusters=2).fit([0.4, 0.5, 0.8, 1.6])
>>> scheme.thresholds_.round(3)
array([1.54 , 0.578])
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._roots import solve_increasing
from ._validation import check_positive_int, check_probability, check_rates, check_snr
from .order_stats import MaxOfExponentials
from .quantization import (DEFAULT_B_MAX, FeedbackBudget, QuantizerSpec, allocate_bits,
                           equiprobable_levels, expected_feedback_load)
from .thresholds import (THRESHOLD_VARIANTS, compute_thresholds, min_clusters,
                         partition_users, rate_loss_bound)

FEEDBACK_MODES = ("best_beam", "all_beams")


@dataclass(frozen=True)
class Reports:
    """Per-SNR feedback decision; every field has the shape of the input SNRs."""

    selection: np.ndarray  # scheduler's ranking value, NaN when silent
    rate_snr: np.ndarray   # SNR the rate is based on under quantized accounting
    bits: np.ndarray       # uplink bits spent, 0 when silent
    region: np.ndarray     # region index, -1 when silent or unquantized
    cell: np.ndarray       # cell index within the region, -1 likewise

    @property
    def sent(self):
        return ~np.isnan(self.selection)


def single_threshold_level(rates, p_out, rtol=1e-12):
    """SNR ``r`` at which ``P(max_k X_k <= r) = p_out`` (scheduling outage)."""
    rates = check_rates(rates)
    p_out = check_probability(p_out, "p_out")
    log_target = math.log(p_out)
    dist = MaxOfExponentials(rates)
    # log F is increasing in r, so its offset from the target changes sign once.
    start = math.log(rates.size + 1.0) / rates.mean()
    return solve_increasing(lambda r: float(dist.logcdf(r)) - log_target, start,
                            rtol=rtol, atol=1e-300)


def feedback_probability(rates, threshold, n_beams, mode):
    """Per-user probability of sending a report, per drop (best_beam) or per beam."""
    p_beam = np.exp(-check_rates(rates) * threshold)
    if mode == "all_beams":
        return p_beam
    if mode == "best_beam":
        return -np.expm1(n_beams * np.log1p(-p_beam)) if threshold > 0 else np.ones_like(p_beam)
    raise ValueError(f"mode must be one of {FEEDBACK_MODES}, got {mode!r}")


class _CellReporter:
    """Lookup from SNR to the quantizer cell covering it (cells tile ``[lo, inf)``)."""

    def __init__(self, quantizer, region_bits):
        table = quantizer.cell_table()
        self.lower = table["lower"]
        self.level = table["level"]
        self.region = table["region"]
        self.cell = table["cell"]
        self.bits = table["bits"] + region_bits

    def __call__(self, snr):
        idx = np.searchsorted(self.lower, snr, side="right") - 1
        sent = idx >= 0
        safe = np.where(sent, idx, 0)
        return Reports(selection=np.where(sent, self.level[safe], np.nan),
                       rate_snr=np.where(sent, self.lower[safe], 0.0),
                       bits=np.where(sent, self.bits[safe], 0),
                       region=np.where(sent, self.region[safe], -1),
                       cell=np.where(sent, self.cell[safe], -1))


class FeedbackScheme(TransformerMixin, BaseEstimator):
    """Common surface: ``fit(rates)``, ``report(snr)``, ``transform(snr)``."""

    name = "scheme"

    def fit(self, rates, y=None):
        self.rates_ = check_rates(rates)
        self.n_users_ = self.rates_.size
        self._fit()
        return self

    def _fit(self):
        raise NotImplementedError

    def report(self, snr):
        check_is_fitted(self, "rates_")
        return self._report(check_snr(snr))

    def transform(self, snr):
        return self.report(snr).selection

    @property
    def threshold_(self):
        """SNR below which users stay silent (0 when everybody reports)."""
        return 0.0

    def analytic_feedback_load(self, n_beams, mode="all_beams"):
        """Expected uplink bits per drop from the scheme's own bit model."""
        raise NotImplementedError

    def rate_loss_bound(self, n_beams):
        check_is_fitted(self, "rates_")
        return rate_loss_bound(self.rates_, self.threshold_, n_beams)


class FullCSI(FeedbackScheme):
    """Unquantized reports: every user sends its exact SNR.

    Parameters
    ----------
    report_bits : int, default=32
        Bits charged per report (a single-precision value) for load accounting.
    """

    name = "full_csi"

    def __init__(self, report_bits=32):
        self.report_bits = report_bits

    def _fit(self):
        check_positive_int(self.report_bits, "report_bits", minimum=0)

    def _report(self, snr):
        return Reports(selection=snr.astype(float), rate_snr=snr.astype(float),
                       bits=np.full(snr.shape, self.report_bits),
                       region=np.full(snr.shape, -1), cell=np.full(snr.shape, -1))

    def analytic_feedback_load(self, n_beams, mode="all_beams"):
        check_is_fitted(self, "rates_")
        per_user = 1 if mode == "best_beam" else n_beams
        return float(self.n_users_ * per_user * self.report_bits)

    def rate_loss_bound(self, n_beams):
        return 0.0


class _QuantizedScheme(FeedbackScheme):
    def _report(self, snr):
        return self.reporter_(snr)

    def analytic_feedback_load(self, n_beams, mode="all_beams"):
        check_is_fitted(self, "rates_")
        p = feedback_probability(self.rates_, self.threshold_, n_beams, mode)
        per_report = self.bits
        scale = n_beams if mode == "all_beams" else 1
        return float(scale * np.sum(p) * per_report)


class ConventionalFeedback(_QuantizedScheme):
    """Every user always reports with a fixed-size equiprobable quantizer.

    The quantizer cells are equiprobable under the distribution of the
    strongest user's SNR over ``[0, inf)``.
    """

    name = "conventional"

    def __init__(self, bits=3):
        self.bits = bits

    def _fit(self):
        check_positive_int(self.bits, "bits", minimum=0)
        q = equiprobable_levels(0.0, np.inf, MaxOfExponentials(self.rates_), self.bits)
        self.quantizer_ = QuantizerSpec(np.array([0.0]), (self.bits,), (q,))
        self.reporter_ = _CellReporter(self.quantizer_, 0)

    def rate_loss_bound(self, n_beams):
        return 0.0


class SingleThresholdFeedback(_QuantizedScheme):
    """One threshold from a target scheduling-outage probability, then a
    fixed-size equiprobable quantizer above it.

    Parameters
    ----------
    p_out : float, default=0.1
        Probability that nobody's SNR on a beam clears the threshold.
    bits : int, default=3
    """

    name = "single_threshold"

    def __init__(self, p_out=0.1, bits=3):
        self.p_out = p_out
        self.bits = bits

    def _fit(self):
        check_positive_int(self.bits, "bits", minimum=0)
        self.r_th_ = single_threshold_level(self.rates_, self.p_out)
        q = equiprobable_levels(self.r_th_, np.inf, MaxOfExponentials(self.rates_), self.bits)
        self.quantizer_ = QuantizerSpec(np.array([self.r_th_]), (self.bits,), (q,))
        self.reporter_ = _CellReporter(self.quantizer_, 0)

    @property
    def threshold_(self):
        return self.r_th_


class ClusterFeedback(FeedbackScheme):
    """Cluster-based multi-threshold feedback.

    Users are grouped by mean SNR, each cluster contributes one threshold,
    and a report carries the region index plus the per-region quantization
    bits chosen by exhaustive search under the per-user average bit limit.

    Parameters
    ----------
    variant : {"type1", "type2"}, default="type1"
        Exact heterogeneous rank probabilities, or the closed form from the
        cluster-averaged rate.
    n_clusters : int or "auto", default=4
        ``"auto"`` picks the fewest clusters whose loss bound is within
        `max_rate_loss`.
    max_rate_loss : float, default=1e-2
        Tolerable sum-rate loss (bits/s/Hz), used only with ``"auto"``.
    n_beams : int, default=4
        Beams (transmit antennas) for the loss bound and allocation objective.
    feedback_limit : float or array-like, default=0.8
        Average quantization bits each user may spend per drop.
    b_max : int, default=6
        Largest bit count tried per region.
    quantize : bool, default=True
        With ``False`` users above the smallest threshold report their exact
        SNR, which isolates the effect of thresholding from quantization.
    """

    def __init__(self, variant="type1", n_clusters=4, max_rate_loss=1e-2, n_beams=4,
                 feedback_limit=0.8, b_max=DEFAULT_B_MAX, quantize=True):
        self.variant = variant
        self.n_clusters = n_clusters
        self.max_rate_loss = max_rate_loss
        self.n_beams = n_beams
        self.feedback_limit = feedback_limit
        self.b_max = b_max
        self.quantize = quantize

    @property
    def name(self):
        return f"cluster_{self.variant}"

    def _fit(self):
        if self.variant not in THRESHOLD_VARIANTS:
            raise ValueError(f"variant must be one of {THRESHOLD_VARIANTS}, got {self.variant!r}")
        if self.n_clusters == "auto":
            n_clusters = min_clusters(self.rates_, self.max_rate_loss, self.n_beams, self.variant)
        else:
            n_clusters = check_positive_int(self.n_clusters, "n_clusters")
        self.n_clusters_ = n_clusters
        self.plan_ = compute_thresholds(partition_users(self.rates_, n_clusters), self.variant)
        self.thresholds_ = self.plan_.thresholds
        self.region_bits_ = self.plan_.region_bits
        self.budget_ = FeedbackBudget(
            np.broadcast_to(np.asarray(self.feedback_limit, dtype=float), self.rates_.shape),
            self.region_bits_)
        if self.quantize:
            self.allocation_ = allocate_bits(self.thresholds_, self.rates_, self.budget_,
                                             self.b_max, self.n_beams)
            self.bits_ = self.allocation_.bits
            self.quantizer_ = self.allocation_.quantizer
            self.reporter_ = _CellReporter(self.quantizer_, self.region_bits_)
        else:
            self.allocation_ = None
            self.bits_ = (0,) * n_clusters
            self.quantizer_ = None
            self.reporter_ = None

    @property
    def threshold_(self):
        return float(self.thresholds_[-1])

    def _report(self, snr):
        if self.reporter_ is not None:
            return self.reporter_(snr)
        sent = snr >= self.threshold_
        region = np.searchsorted(-self.thresholds_, -snr, side="right")
        return Reports(selection=np.where(sent, snr, np.nan),
                       rate_snr=np.where(sent, snr, 0.0),
                       bits=np.where(sent, self.region_bits_, 0),
                       region=np.where(sent, region, -1),
                       cell=np.full(snr.shape, -1))

    def analytic_feedback_load(self, n_beams, mode="all_beams"):
        """Average total feedback load ``M sum_k exp(-rate_k r_min) (B_C + C_k)``.

        Uses the per-user bit limits as the quantization bits actually sent,
        whatever the simulated feedback mode.
        """
        check_is_fitted(self, "rates_")
        return expected_feedback_load(self.rates_, self.threshold_, self.budget_, n_beams)

    def realized_feedback_load(self, mean_quantization_bits, n_beams):
        """The same expression with the limits replaced by the realized mean bits."""
        check_is_fitted(self, "rates_")
        budget = FeedbackBudget(np.full(self.n_users_, float(mean_quantization_bits)),
                                self.region_bits_)
        return expected_feedback_load(self.rates_, self.threshold_, budget, n_beams)


def default_schemes(n_clusters=4, max_rate_loss=1e-2, n_beams=4, feedback_limit=0.8,
                    b_max=DEFAULT_B_MAX, p_out=0.1, conventional_bits=3):
    """The five schemes compared in the experiments, unfitted."""
    cluster = dict(n_clusters=n_clusters, max_rate_loss=max_rate_loss, n_beams=n_beams,
                   feedback_limit=feedback_limit, b_max=b_max)
    return [FullCSI(), ConventionalFeedback(bits=conventional_bits),
            SingleThresholdFeedback(p_out=p_out, bits=conventional_bits),
            ClusterFeedback(variant="type1", **cluster),
            ClusterFeedback(variant="type2", **cluster)]


__all__ = ["ClusterFeedback", "ConventionalFeedback", "FEEDBACK_MODES", "FeedbackScheme",
           "FullCSI", "Reports", "SingleThresholdFeedback",
           "default_schemes", "feedback_probability", "single_threshold_level"]
