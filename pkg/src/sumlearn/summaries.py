"""Windowed summary statistics of masked time series.

Each summary is computed per variable from the last ``C`` hours before the
time of prediction ``T``.  Soft windows are sigmoid weights
``w_t = sigmoid((t - T + C) / tau)`` so the window length is learnable;
hard windows use the exact indicator ``1(t > T - C)``.

Array convention: time is the trailing axis and hour ``t`` (1-based, in
``[1, T]``) maps to index ``t - 1``.  All functions broadcast, so they
accept a single ``(T,)`` series, a ``(D, T)`` variable block, or a full
``(N, D, T)`` batch with weights of shape ``(T,)`` or ``(D, T)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-8

SUMMARY_NAMES = (
    "mean",
    "variance",
    "ever_measured",
    "indicator_mean",
    "indicator_variance",
    "switch_count",
    "first_measured",
    "last_measured",
    "frac_above",
    "frac_below",
    "slope",
    "slope_stderr",
)

(
    MEAN,
    VARIANCE,
    EVER_MEASURED,
    INDICATOR_MEAN,
    INDICATOR_VARIANCE,
    SWITCH_COUNT,
    FIRST_MEASURED,
    LAST_MEASURED,
    FRAC_ABOVE,
    FRAC_BELOW,
    SLOPE,
    SLOPE_STDERR,
) = range(12)

N_SUMMARIES = len(SUMMARY_NAMES)

# first/last measured are constants of the mask; no gradient path.
NON_DIFFERENTIABLE = frozenset({FIRST_MEASURED, LAST_MEASURED})


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class SummaryParams:
    """Learnable parameters of the summary layer.

    C          : (D, I) window lengths in hours, kept in [0, T].
    phi_plus   : (D,) upper thresholds, in normalized units.
    phi_minus  : (D,) lower thresholds, in normalized units.
    tau_temp   : sigmoid temperature (> 0).
    """

    C: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    tau_temp: float

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        self.phi_plus = np.asarray(self.phi_plus, dtype=float)
        self.phi_minus = np.asarray(self.phi_minus, dtype=float)
        if self.tau_temp <= 0:
            raise ValueError("tau_temp must be positive")
        if self.C.ndim != 2:
            raise ValueError("C must be a (D, I) matrix")

    @property
    def n_variables(self):
        return self.C.shape[0]

    @property
    def n_summaries(self):
        return self.C.shape[1]

    def copy(self):
        return SummaryParams(
            self.C.copy(), self.phi_plus.copy(), self.phi_minus.copy(), self.tau_temp
        )


def compute_weights(C, T, tau_temp):
    """Soft window weights, shape (T, I, D): sigmoid((t - T + C) / tau)."""
    C = np.asarray(C, dtype=float)
    t = np.arange(1, T + 1, dtype=float)
    # (T, 1, 1) + (I, D) -> (T, I, D)
    return sigmoid((t[:, None, None] - T + C.T[None, :, :]) / tau_temp)


def compute_weights_hard(C, T):
    """Hard window indicators, shape (T, I, D): 1(t > T - C)."""
    C = np.asarray(C, dtype=float)
    t = np.arange(1, T + 1, dtype=float)
    return (t[:, None, None] > T - C.T[None, :, :]).astype(float)


def s_mean(X, M, w):
    v = w * M
    return (v * X).sum(-1) / (v.sum(-1) + EPS)


def _weighted_unbiased_variance(values, v):
    """Reliability-weighted unbiased variance of `values` with weights `v`.

    V = (sum v (x - xbar)^2) * S1 / (S1^2 - S2 + eps); zero when fewer than
    two effective points (the numerator vanishes there).
    """
    s1 = v.sum(-1)
    s2 = (v * v).sum(-1)
    xbar = (v * values).sum(-1) / (s1 + EPS)
    q = (v * (values - xbar[..., None]) ** 2).sum(-1)
    return q * s1 / (s1 * s1 - s2 + EPS)


def s_variance(X, M, w):
    return _weighted_unbiased_variance(X, w * M)


def s_ever_measured(M, w, tau_temp):
    num = (w * M).sum(-1)
    den = tau_temp * np.asarray(w).sum(-1) + EPS
    return sigmoid(num / den)


def s_indicator_mean(M, w):
    return (w * M).sum(-1) / (np.asarray(w).sum(-1) + EPS)


def s_indicator_variance(M, w):
    return _weighted_unbiased_variance(M, np.asarray(w, dtype=float))


def s_switch_count(M, w):
    w = np.asarray(w, dtype=float)
    switches = np.abs(np.diff(M, axis=-1))
    return (w[..., :-1] * switches).sum(-1) / (w.sum(-1) + EPS)


def s_first_measured(M):
    M = np.asarray(M)
    T = M.shape[-1]
    any_measured = M.any(-1)
    first = (M.argmax(-1) + 1) / T
    return np.where(any_measured, first, 1.0)


def s_last_measured(M):
    M = np.asarray(M)
    T = M.shape[-1]
    any_measured = M.any(-1)
    last = (T - M[..., ::-1].argmax(-1)) / T
    return np.where(any_measured, last, 0.0)


def s_frac_above(X, M, w, phi_plus, tau_temp):
    v = w * M
    soft = sigmoid((X - np.asarray(phi_plus)[..., None]) / tau_temp)
    return (v * soft).sum(-1) / (v.sum(-1) + EPS)


def s_frac_below(X, M, w, phi_minus, tau_temp):
    v = w * M
    soft = sigmoid((np.asarray(phi_minus)[..., None] - X) / tau_temp)
    return (v * soft).sum(-1) / (v.sum(-1) + EPS)


def _time_axis(T):
    return np.arange(1, T + 1, dtype=float)


def s_slope(X, M, w):
    v = w * M
    t = _time_axis(np.asarray(X).shape[-1])
    s = v.sum(-1) + EPS
    tbar = (v * t).sum(-1) / s
    xbar = (v * X).sum(-1) / s
    a = t - tbar[..., None]
    b = X - xbar[..., None]
    num = (v * a * b).sum(-1)
    den = (v * a * a).sum(-1) + EPS
    return num / den


def s_slope_stderr(M, w):
    v = w * M
    t = _time_axis(np.asarray(M).shape[-1])
    s = v.sum(-1) + EPS
    tbar = (v * t).sum(-1) / s
    a = t - tbar[..., None]
    return 1.0 / ((v * a * a).sum(-1) + EPS)


def _hard_frac(X, M, w, phi, above):
    v = w * M
    ind = (X > phi[..., None]) if above else (X < phi[..., None])
    return (v * ind).sum(-1) / (v.sum(-1) + EPS)


def compute_summary_tensor(X, M, params, mode="relaxed"):
    """All I summaries for every (example, variable), shape (N, D, I).

    mode="relaxed" uses soft windows and soft threshold indicators;
    mode="hard" uses exact indicators throughout (no tau dependence).
    """
    if mode not in ("relaxed", "hard"):
        raise ValueError(f"unknown summary mode: {mode!r}")
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    N, D, T = X.shape
    tau = params.tau_temp
    if mode == "relaxed":
        W = compute_weights(params.C, T, tau)
    else:
        W = compute_weights_hard(params.C, T)

    def w_of(i):
        return W[:, i, :].T  # (D, T)

    H = np.empty((N, D, N_SUMMARIES), dtype=float)
    H[:, :, MEAN] = s_mean(X, M, w_of(MEAN))
    H[:, :, VARIANCE] = s_variance(X, M, w_of(VARIANCE))
    if mode == "relaxed":
        H[:, :, EVER_MEASURED] = s_ever_measured(M, w_of(EVER_MEASURED), tau)
        H[:, :, FRAC_ABOVE] = s_frac_above(
            X, M, w_of(FRAC_ABOVE), params.phi_plus, tau
        )
        H[:, :, FRAC_BELOW] = s_frac_below(
            X, M, w_of(FRAC_BELOW), params.phi_minus, tau
        )
    else:
        in_window = (w_of(EVER_MEASURED) * M).sum(-1) > 0
        H[:, :, EVER_MEASURED] = np.where(in_window, 1.0, 0.5)
        H[:, :, FRAC_ABOVE] = _hard_frac(
            X, M, w_of(FRAC_ABOVE), params.phi_plus, above=True
        )
        H[:, :, FRAC_BELOW] = _hard_frac(
            X, M, w_of(FRAC_BELOW), params.phi_minus, above=False
        )
    H[:, :, INDICATOR_MEAN] = s_indicator_mean(M, w_of(INDICATOR_MEAN))
    H[:, :, INDICATOR_VARIANCE] = s_indicator_variance(M, w_of(INDICATOR_VARIANCE))
    H[:, :, SWITCH_COUNT] = s_switch_count(M, w_of(SWITCH_COUNT))
    H[:, :, FIRST_MEASURED] = s_first_measured(M)
    H[:, :, LAST_MEASURED] = s_last_measured(M)
    H[:, :, SLOPE] = s_slope(X, M, w_of(SLOPE))
    H[:, :, SLOPE_STDERR] = s_slope_stderr(M, w_of(SLOPE_STDERR))
    return H
