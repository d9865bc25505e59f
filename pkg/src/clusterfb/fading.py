"""Rayleigh channels, orthogonal random beamforming and zero-forcing receiver SNRs.

Two ways of producing per-beam SNRs are provided. The matrix path draws
``H_k`` and a Haar precoder ``W`` and evaluates the zero-forcing SNR exactly.
The analytic path draws exponential variates directly; for ``N == M`` the
per-beam marginal of the matrix path is exponential with rate
``M * noise_var / (P * channel_var)``, so the two agree in distribution
(beam-to-beam dependence is only present in the matrix path).
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_rates


class RankDeficientChannel(np.linalg.LinAlgError):
    """The effective channel ``H_k W`` does not have full column rank."""


@dataclass(frozen=True)
class SystemConfig:
    """Downlink parameters.

    Parameters
    ----------
    M : int
        Transmit antennas (= number of beams).
    N : int
        Receive antennas per user, ``N >= M``.
    P : float
        Total transmit power.
    noise_var : float
        Receiver noise variance.
    channel_vars : sequence of float
        Per-user channel-element variances; its length is the user count K.
    """

    M: int
    N: int
    P: float
    noise_var: float
    channel_vars: tuple = field(default=())

    def __post_init__(self):
        check_positive_int(self.M, "M")
        check_positive_int(self.N, "N")
        if self.N < self.M:
            raise ValueError(f"N must be >= M, got N={self.N}, M={self.M}")
        if not self.P > 0:
            raise ValueError(f"P must be > 0, got {self.P}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")
        variances = check_rates(self.channel_vars, name="channel_vars")
        object.__setattr__(self, "channel_vars", tuple(float(v) for v in variances))

    @property
    def K(self):
        return len(self.channel_vars)

    @property
    def rates(self):
        """Exponential rate of every user's per-beam SNR, shape ``(K,)``."""
        return self.M * self.noise_var / (self.P * np.asarray(self.channel_vars))


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray  # (K, N, M) complex
    W: np.ndarray  # (M, M) complex, unitary


def lambda_from_config(config, k):
    """Rate of user `k`'s (0-based) exponential SNR: ``M noise_var / (P var_k)``."""
    if not 0 <= k < config.K:
        raise IndexError(f"user index {k} out of range for K={config.K}")
    return config.M * config.noise_var / (config.P * config.channel_vars[k])


def _complex_normal(rng, shape, var=1.0):
    scale = np.sqrt(np.asarray(var) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_orb_precoder(M, rng):
    """Haar-distributed ``M x M`` unitary matrix.

    QR of a complex Gaussian matrix, with the phases of R's diagonal pushed
    into Q so the result is exactly Haar rather than QR-convention biased.
    """
    check_positive_int(M, "M")
    Z = _complex_normal(rng, (M, M))
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def sample_channel(config, rng):
    """One realization of every user's ``N x M`` channel and a fresh precoder."""
    var = np.asarray(config.channel_vars)[:, None, None]
    H = _complex_normal(rng, (config.K, config.N, config.M), var)
    return ChannelRealization(H=H, W=sample_orb_precoder(config.M, rng))


def zf_snr(H, W, config):
    """Per-beam SNR after zero-forcing: ``(P/M) / (noise_var [((HW)^H HW)^-1]_mm)``.

    `H` may carry leading batch axes, ``(..., N, M)``; the result has shape
    ``(..., M)``.

    Raises
    ------
    RankDeficientChannel
        If any effective channel ``H W`` is (numerically) rank deficient.
    """
    G = np.asarray(H) @ np.asarray(W)
    gram = np.conj(np.swapaxes(G, -1, -2)) @ G
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientChannel(str(exc)) from exc
    d = np.real(np.diagonal(inv, axis1=-2, axis2=-1))
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise RankDeficientChannel("effective channel is rank deficient")
    return (config.P / config.M) / (config.noise_var * d)


def sample_snr_analytic(rate, rng, size=None):
    """Exponential SNR with the given rate (mean ``1/rate``)."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("rate must be > 0")
    return rng.exponential(1.0 / rate, size=size)


def sample_snr_batch(config, rng, n_drops, model="analytic"):
    """Per-drop, per-user, per-beam SNRs, shape ``(n_drops, K, M)``.

    ``model="analytic"`` draws independent exponentials (valid marginal for
    ``N == M``); ``model="matrix"`` draws channels and a new precoder for
    every drop and applies :func:`zf_snr`, redrawing rank-deficient draws.
    """
    K, M = config.K, config.M
    if model == "analytic":
        return rng.exponential(1.0, size=(n_drops, K, M)) / config.rates[None, :, None]
    if model != "matrix":
        raise ValueError(f"unknown SNR model {model!r}")
    var = np.asarray(config.channel_vars)[None, :, None, None]
    out = np.empty((n_drops, K, M))
    todo = np.arange(n_drops)
    while todo.size:
        n = todo.size
        Z = _complex_normal(rng, (n, M, M))
        Q, R = np.linalg.qr(Z)
        d = np.diagonal(R, axis1=-2, axis2=-1)
        W = Q * (d / np.abs(d))[:, None, :]
        H = _complex_normal(rng, (n, K, config.N, M), var)
        G = H @ W[:, None]
        gram = np.conj(np.swapaxes(G, -1, -2)) @ G
        with np.errstate(all="ignore"):
            inv_diag = np.real(np.diagonal(np.linalg.pinv(gram, hermitian=True),
                                           axis1=-2, axis2=-1))
            cond = np.linalg.cond(gram)
        ok = np.all((inv_diag > 0) & (cond[..., None] < 1e12), axis=(1, 2))
        out[todo[ok]] = (config.P / M) / (config.noise_var * inv_diag[ok])
        todo = todo[~ok]
    return out
