"""Input validation helpers shared by the estimators and analysis functions."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_rates(rates, name="rates"):
    """Return `rates` as a 1-D float array of strictly positive, finite values."""
    rates = check_array(np.atleast_1d(np.asarray(rates, dtype=float)), ensure_2d=False,
                        input_name=name)
    if rates.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {rates.shape}")
    if np.any(rates <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return rates


def check_nonnegative(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    if np.isnan(value) or value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probability(value, name, open_interval=True):
    value = float(value)
    lo_ok = value > 0 if open_interval else value >= 0
    hi_ok = value < 1 if open_interval else value <= 1
    if not (lo_ok and hi_ok):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
    return value


def check_snr(snr, name="snr"):
    """Nonnegative SNR array of any shape (linear scale)."""
    snr = np.asarray(snr, dtype=float)
    if np.any(np.isnan(snr)) or np.any(snr < 0):
        raise ValueError(f"{name} must be nonnegative")
    return snr
