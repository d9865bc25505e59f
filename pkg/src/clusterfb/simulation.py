"""Monte Carlo scheduling engine.

A drop draws every user's per-beam SNR, lets each scheme turn SNRs into
reports, and schedules on every beam the user with the largest reported
value (ties to the smallest user index). The realized rate of a beam is
``log2(1 + SNR)`` of the scheduled user's true SNR, or of the SNR the report
guarantees under ``rate_accounting="quantized"``; beams without reports idle.

Drops are processed in fixed-size blocks, each with its own counter-based
random stream, and per-drop results are concatenated in block order, so
results depend only on the seed, never on how many workers ran the blocks.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone

from ._validation import check_positive_int
from .fading import SystemConfig, sample_snr_batch
from .rng import block_generator, stream_generator
from .schemes import FEEDBACK_MODES, ClusterFeedback

BLOCK_SIZE = 1000
RATE_ACCOUNTING = ("true", "quantized")


@dataclass
class DropRecord:
    """Everything that happened in one drop.

    ``reported[k, m]`` marks a report from user ``k`` about beam ``m``; under
    best-beam feedback each row has at most one mark.
    """

    snr: np.ndarray        # (K, M) true SNRs
    best_beam: np.ndarray  # (K,)
    reported: np.ndarray   # (K, M) bool
    region: np.ndarray     # (K, M) region index or -1
    cell: np.ndarray       # (K, M) cell index or -1
    bits: np.ndarray       # (K, M) bits spent
    scheduled: np.ndarray  # (M,) user index or -1 for an idle beam
    rates: np.ndarray      # (M,) realized log2(1 + SNR), 0 when idle

    @property
    def sum_rate(self):
        return float(self.rates.sum())

    @property
    def feedback_bits(self):
        return int(self.bits.sum())


@dataclass
class SchemeResult:
    scheme: str
    sum_rate: float
    sum_rate_se: float
    fb_bits: float
    fb_bits_se: float
    n_drops: int
    seed: int
    reports_per_drop: float
    mean_report_bits: float
    per_drop_rate: np.ndarray = field(repr=False)
    per_drop_bits: np.ndarray = field(repr=False)

    def paired_difference(self, other):
        """Mean and standard error of ``self - other`` drop by drop.

        Only meaningful for results produced on the same SNR draws.
        """
        if self.per_drop_rate.shape != other.per_drop_rate.shape:
            raise ValueError("results come from different numbers of drops")
        diff = self.per_drop_rate - other.per_drop_rate
        return float(diff.mean()), _standard_error(diff)


def _standard_error(samples):
    if samples.size < 2:
        return 0.0
    return float(samples.std(ddof=1) / math.sqrt(samples.size))


def _schedule(snr, scheme, mode, accounting):
    """Vectorized core over a batch ``snr`` of shape (n, K, M)."""
    n, K, M = snr.shape
    if mode == "best_beam":
        best = np.argmax(snr, axis=2)
        value = np.take_along_axis(snr, best[..., None], axis=2)[..., 0]
        rep = scheme.report(value)

        def spread(a, fill):
            out = np.full((n, K, M), fill, dtype=np.asarray(a).dtype)
            np.put_along_axis(out, best[..., None], np.asarray(a)[..., None], axis=2)
            return out

        selection = spread(rep.selection, np.nan)
        rate_snr = spread(rep.rate_snr, 0.0)
        bits = spread(rep.bits, 0)
        region = spread(rep.region, -1)
        cell = spread(rep.cell, -1)
    elif mode == "all_beams":
        best = np.argmax(snr, axis=2)
        rep = scheme.report(snr)
        selection, rate_snr, bits = rep.selection, rep.rate_snr, rep.bits
        region, cell = rep.region, rep.cell
    else:
        raise ValueError(f"feedback mode must be one of {FEEDBACK_MODES}, got {mode!r}")

    reported = ~np.isnan(selection)
    score = np.where(reported, selection, -np.inf)
    scheduled = np.argmax(score, axis=1)  # first maximum = smallest user index
    active = np.take_along_axis(reported, scheduled[:, None, :], axis=1)[:, 0, :]
    if accounting == "true":
        source = snr
    elif accounting == "quantized":
        source = rate_snr
    else:
        raise ValueError(f"rate accounting must be one of {RATE_ACCOUNTING}")
    chosen = np.take_along_axis(source, scheduled[:, None, :], axis=1)[:, 0, :]
    beam_rates = np.where(active, np.log2(1.0 + np.where(active, chosen, 0.0)), 0.0)
    return {
        "best_beam": best, "reported": reported, "region": region, "cell": cell,
        "bits": bits, "scheduled": np.where(active, scheduled, -1), "rates": beam_rates,
    }


def run_drop(config, scheme, rng, mode="all_beams", snr_model="analytic",
             accounting="true"):
    """Simulate a single drop and return its full :class:`DropRecord`."""
    snr = sample_snr_batch(config, rng, 1, model=snr_model)
    out = _schedule(snr, scheme, mode, accounting)
    return DropRecord(snr=snr[0], **{k: v[0] for k, v in out.items()})


def _prepare(config, scheme):
    if hasattr(scheme, "rates_"):
        if scheme.rates_.shape != config.rates.shape or not np.allclose(scheme.rates_,
                                                                        config.rates):
            raise ValueError(f"{scheme.name} was fitted on different user rates")
        return scheme
    return clone(scheme).fit(config.rates)


def _run_block(config, schemes, n, seed, block, stream, mode, snr_model, accounting):
    rng = block_generator(seed, block, *stream)
    snr = sample_snr_batch(config, rng, n, model=snr_model)
    out = []
    for scheme in schemes:
        res = _schedule(snr, scheme, mode, accounting)
        bits = res["bits"]
        quant = bits - (scheme.region_bits_ if isinstance(scheme, ClusterFeedback) else 0)
        out.append((res["rates"].sum(axis=1), bits.sum(axis=(1, 2)),
                    res["reported"].sum(axis=(1, 2)),
                    np.where(res["reported"], quant, 0).sum(axis=(1, 2))))
    return out


def simulate_many(config, schemes, n_drops, seed, n_jobs=1, block_size=BLOCK_SIZE,
                  mode="all_beams", snr_model="analytic", accounting="true", stream=()):
    """Run several schemes on common SNR draws; returns one SchemeResult each.

    Unfitted schemes are cloned and fitted on ``config.rates``.
    """
    if not isinstance(config, SystemConfig):
        raise TypeError("config must be a SystemConfig")
    n_drops = check_positive_int(n_drops, "n_drops")
    block_size = check_positive_int(block_size, "block_size")
    fitted = [_prepare(config, s) for s in schemes]
    n_blocks = -(-n_drops // block_size)
    sizes = [min(block_size, n_drops - b * block_size) for b in range(n_blocks)]
    jobs = (delayed(_run_block)(config, fitted, sizes[b], seed, b, stream, mode, snr_model,
                                accounting) for b in range(n_blocks))
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(jobs)
    results = []
    for i, scheme in enumerate(fitted):
        rate = np.concatenate([blk[i][0] for blk in blocks])
        bits = np.concatenate([blk[i][1] for blk in blocks]).astype(float)
        n_reports = float(sum(blk[i][2].sum() for blk in blocks))
        quant = float(sum(blk[i][3].sum() for blk in blocks))
        results.append(SchemeResult(
            scheme=scheme.name, sum_rate=float(rate.mean()), sum_rate_se=_standard_error(rate),
            fb_bits=float(bits.mean()), fb_bits_se=_standard_error(bits), n_drops=n_drops,
            seed=int(seed), reports_per_drop=n_reports / n_drops,
            mean_report_bits=quant / n_reports if n_reports else 0.0,
            per_drop_rate=rate, per_drop_bits=bits))
    return results


def simulate(config, scheme, n_drops, seed, n_jobs=1, **kwargs):
    """Average `n_drops` drops of one scheme; bit-identical for a fixed seed."""
    return simulate_many(config, [scheme], n_drops, seed, n_jobs=n_jobs, **kwargs)[0]


@dataclass
class ResultRow:
    K: int
    scheme: str
    sum_rate: float
    sum_rate_se: float
    fb_bits: float
    fb_bits_se: float
    fb_bits_analytic: float
    rate_loss_bound: float
    seed: int
    extras: dict = field(default_factory=dict, repr=False)


CSV_COLUMNS = ("K", "scheme", "sum_rate", "sum_rate_se", "fb_bits", "fb_bits_se",
               "fb_bits_analytic", "rate_loss_bound", "seed")


def draw_channel_vars(rng, K):
    """Channel variances uniform on (0, 1]; zero would mean a user with no channel."""
    return 1.0 - rng.random(K)


def sweep_users(M, N, P, noise_var, k_values, schemes, n_drops, seed, n_jobs=1,
                mode="all_beams", snr_model="analytic", accounting="true",
                block_size=BLOCK_SIZE):
    """Sweep the user count; fresh variances per K, common SNR draws across schemes.

    Returns one :class:`ResultRow` per (K, scheme), in input order.
    """
    variance_rng = stream_generator(seed, 1)
    rows = []
    for j, K in enumerate(k_values):
        K = check_positive_int(K, "K")
        config = SystemConfig(M=M, N=N, P=P, noise_var=noise_var,
                              channel_vars=draw_channel_vars(variance_rng, K))
        fitted = [clone(s).fit(config.rates) for s in schemes]
        results = simulate_many(config, fitted, n_drops, seed, n_jobs=n_jobs,
                                block_size=block_size, mode=mode, snr_model=snr_model,
                                accounting=accounting, stream=(2, j))
        for scheme, res in zip(fitted, results):
            extras = {"reports_per_drop": res.reports_per_drop,
                      "mean_report_bits": res.mean_report_bits,
                      "threshold": scheme.threshold_, "config": config, "scheme": scheme,
                      "result": res}
            if isinstance(scheme, ClusterFeedback):
                extras["fb_bits_realized_form"] = scheme.realized_feedback_load(
                    res.mean_report_bits, M)
                extras["bits"] = scheme.bits_
                extras["thresholds"] = scheme.thresholds_
            rows.append(ResultRow(
                K=K, scheme=scheme.name, sum_rate=res.sum_rate, sum_rate_se=res.sum_rate_se,
                fb_bits=res.fb_bits, fb_bits_se=res.fb_bits_se,
                fb_bits_analytic=scheme.analytic_feedback_load(M, mode),
                rate_loss_bound=scheme.rate_loss_bound(M), seed=int(seed), extras=extras))
    return rows
