"""Analytic gradients of the training loss and a finite-difference checker.

The loss is differentiated by hand through the full graph: logistic head,
design matrix, and the relaxed summary definitions (soft windows and soft
threshold indicators).  Each summary contributes a closed-form
``dH/dw_t`` term; the window-parameter chain rule then uses
``dw_t/dC = w_t (1 - w_t) / tau``.

The epsilon guards inside the weighted means leave tiny residuals
(sum of v * deviation = mean * eps instead of zero); their derivative
cross-terms are kept so the gradients are exact, not just eps-close.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import class_weights
from .errors import NumericalError
from .model import (
    assemble_features,
    penalty_grad,
    penalty_value,
    total_loss,
    weighted_bce_from_logits,
)
from .summaries import (
    EPS,
    FRAC_ABOVE,
    FRAC_BELOW,
    N_SUMMARIES,
    compute_summary_tensor,
    compute_weights,
    sigmoid,
)


@dataclass
class GradientSet:
    """Partial derivatives of the loss for every learnable block.

    d_coeffs has F+1 entries: the F design coefficients followed by the
    bias.  Non-differentiable summaries (first/last measured) contribute
    exactly zero to d_C.
    """

    d_coeffs: np.ndarray  # (F + 1,), bias last
    d_C: np.ndarray  # (D, I)
    d_phi_plus: np.ndarray  # (D,)
    d_phi_minus: np.ndarray  # (D,)


def _summary_weight_grads(X, M, w, params, i):
    """dH[:, :, i]/dw_t for summary i, shape (N, D, T); None if no path.

    w is the (D, T) weight slice for summary i (relaxed weights).
    Also returns dH/dphi (N, D) for the threshold summaries, else None.
    """
    from . import summaries as sm

    tau = params.tau_temp
    t_ax = np.arange(1, X.shape[-1] + 1, dtype=float)

    if i == sm.MEAN:
        v = w * M
        B = v.sum(-1) + EPS
        h = (v * X).sum(-1) / B
        return M * (X - h[..., None]) / B[..., None], None

    if i == sm.VARIANCE:
        v = w * M
        s1 = v.sum(-1)
        s2 = (v * v).sum(-1)
        B = s1 + EPS
        xbar = (v * X).sum(-1) / B
        dev = X - xbar[..., None]
        q = (v * dev**2).sum(-1)
        r = (v * dev).sum(-1)  # = xbar * eps, kept exactly
        den = s1 * s1 - s2 + EPS
        V = q * s1 / den
        dq = dev**2 - (2.0 * r / B)[..., None] * dev
        dVdv = (dq * s1[..., None] + q[..., None]) / den[..., None] - (
            2.0 * V / den
        )[..., None] * (s1[..., None] - v)
        return M * dVdv, None

    if i == sm.EVER_MEASURED:
        A = (w * M).sum(-1)
        B = tau * w.sum(-1) + EPS  # (D,)
        a = A / B
        h = sigmoid(a)
        return (h * (1 - h))[..., None] * (M - (a * tau)[..., None]) / B[:, None], None

    if i == sm.INDICATOR_MEAN:
        B = w.sum(-1) + EPS  # (D,)
        h = (w * M).sum(-1) / B
        return (M - h[..., None]) / B[:, None], None

    if i == sm.INDICATOR_VARIANCE:
        s1 = w.sum(-1)  # (D,)
        s2 = (w * w).sum(-1)
        B = s1 + EPS
        mbar = (w * M).sum(-1) / B
        dev = M - mbar[..., None]
        q = (w * dev**2).sum(-1)
        r = (w * dev).sum(-1)
        den = s1 * s1 - s2 + EPS
        V = q * s1 / den
        dq = dev**2 - (2.0 * r / B[None, :])[..., None] * dev
        dVdv = (dq * s1[None, :, None] + q[..., None]) / den[None, :, None] - (
            2.0 * V / den
        )[..., None] * (s1[None, :, None] - w[None])
        return dVdv, None

    if i == sm.SWITCH_COUNT:
        B = w.sum(-1) + EPS  # (D,)
        switches = np.abs(np.diff(M, axis=-1))
        padded = np.concatenate([switches, np.zeros(M.shape[:-1] + (1,))], axis=-1)
        h = (w[..., :-1] * switches).sum(-1) / B
        return (padded - h[..., None]) / B[:, None], None

    if i == sm.FRAC_ABOVE:
        v = w * M
        soft = sigmoid((X - params.phi_plus[None, :, None]) / tau)
        B = v.sum(-1) + EPS
        h = (v * soft).sum(-1) / B
        d_w = M * (soft - h[..., None]) / B[..., None]
        d_phi = -(v * soft * (1 - soft)).sum(-1) / (tau * B)
        return d_w, d_phi

    if i == sm.FRAC_BELOW:
        v = w * M
        soft = sigmoid((params.phi_minus[None, :, None] - X) / tau)
        B = v.sum(-1) + EPS
        h = (v * soft).sum(-1) / B
        d_w = M * (soft - h[..., None]) / B[..., None]
        d_phi = (v * soft * (1 - soft)).sum(-1) / (tau * B)
        return d_w, d_phi

    if i == sm.SLOPE:
        v = w * M
        s = v.sum(-1) + EPS
        tbar = (v * t_ax).sum(-1) / s
        xbar = (v * X).sum(-1) / s
        a = t_ax - tbar[..., None]
        b = X - xbar[..., None]
        r_t = (v * a).sum(-1)  # eps-scale residuals, kept exactly
        r_x = (v * b).sum(-1)
        den = (v * a * a).sum(-1) + EPS
        h = (v * a * b).sum(-1) / den
        dnum = a * b - (a * r_x[..., None] + b * r_t[..., None]) / s[..., None]
        dden = a * a - 2.0 * a * r_t[..., None] / s[..., None]
        return M * (dnum - h[..., None] * dden) / den[..., None], None

    if i == sm.SLOPE_STDERR:
        v = w * M
        s = v.sum(-1) + EPS
        tbar = (v * t_ax).sum(-1) / s
        a = t_ax - tbar[..., None]
        r_t = (v * a).sum(-1)
        den = (v * a * a).sum(-1) + EPS
        dden = a * a - 2.0 * a * r_t[..., None] / s[..., None]
        return M * (-dden) / (den**2)[..., None], None

    # first/last measured: constants of the mask
    return None, None


def backprop_summaries(X, M, params, G):
    """Accumulate (d_C, d_phi_plus, d_phi_minus) from dL/dH = G (N, D, I)."""
    N, D, T = X.shape
    W = compute_weights(params.C, T, params.tau_temp)  # (T, I, D)
    d_C = np.zeros_like(params.C)
    d_phi_plus = np.zeros(D)
    d_phi_minus = np.zeros(D)
    for i in range(N_SUMMARIES):
        w = W[:, i, :].T  # (D, T)
        dHdw, dHdphi = _summary_weight_grads(X, M, w, params, i)
        if dHdw is not None:
            # P[d, t] = sum_n G[n, d, i] * dH/dw_t
            P = np.einsum("nd,ndt->dt", G[:, :, i], np.broadcast_to(dHdw, (N, D, T)))
            wdot = w * (1 - w) / params.tau_temp
            d_C[:, i] = (P * wdot).sum(-1)
        if dHdphi is not None:
            contrib = (G[:, :, i] * dHdphi).sum(0)
            if i == FRAC_ABOVE:
                d_phi_plus += contrib
            else:
                d_phi_minus += contrib
    return d_C, d_phi_plus, d_phi_minus


def loss_and_gradients(summary_params, model_params, batch, config, weights=None):
    """(loss, GradientSet): the loss equals total_loss on the same inputs."""
    if weights is None:
        weights = class_weights(batch.y)
    X, M, S, y = batch.X, batch.M, batch.S, batch.y
    N = X.shape[0]
    D = X.shape[1]
    mode = config.mode

    H = None
    if mode in ("relaxed", "hard"):
        H = compute_summary_tensor(X, M, summary_params, mode)
    design = assemble_features(H, S, X, M, mode)
    z = design @ model_params.coeffs + model_params.bias
    y_hat = sigmoid(z)
    loss = weighted_bce_from_logits(z, y, weights) + config.alpha * penalty_value(
        model_params.coeffs, config
    )
    if not np.isfinite(loss):
        bad = "coefficients" if not np.all(np.isfinite(z)) else "summaries"
        raise NumericalError(f"non-finite loss (suspect block: {bad})")

    r = weights * (y_hat - y) / N
    d_bias = r.sum()
    d_beta = design.T @ r + config.alpha * penalty_grad(model_params.coeffs, config)
    d_coeffs = np.concatenate([d_beta, [d_bias]])

    d_C = np.zeros_like(summary_params.C)
    d_phi_plus = np.zeros(D)
    d_phi_minus = np.zeros(D)
    if mode == "relaxed":
        n_hcols = D * N_SUMMARIES
        G = np.outer(r, model_params.coeffs[:n_hcols]).reshape(N, D, N_SUMMARIES)
        d_C, d_phi_plus, d_phi_minus = backprop_summaries(X, M, summary_params, G)
    return loss, GradientSet(d_coeffs, d_C, d_phi_plus, d_phi_minus)


@dataclass
class FDEntry:
    block: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class FDReport:
    max_rel_error: float
    worst: FDEntry
    entries: list

    def passed(self, tolerance=1e-4):
        return self.max_rel_error < tolerance


def finite_difference_check(
    summary_params, model_params, batch, config, eps_fd=1e-5,
    n_coeff_samples=32, seed=0, weights=None,
):
    """Compare analytic gradients against central differences.

    Covers every C and phi entry plus n_coeff_samples random coefficients
    (and the bias).  Relative error uses max(1e-8, |a| + |n|) scaling.
    """
    if eps_fd <= 0:
        raise ValueError("eps_fd must be positive")
    loss, grads = loss_and_gradients(
        summary_params, model_params, batch, config, weights=weights
    )

    def fd(apply_bump):
        def at(delta):
            sp = summary_params.copy()
            mp = model_params.copy()
            apply_bump(sp, mp, delta)
            return total_loss(sp, mp, batch, config, weights=weights)

        return (at(eps_fd) - at(-eps_fd)) / (2.0 * eps_fd)

    entries = []

    def record(block, index, analytic, bump):
        numeric = fd(bump)
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        entries.append(FDEntry(block, index, float(analytic), float(numeric), rel))

    D, I = summary_params.C.shape
    for d in range(D):
        for i in range(I):
            def bump(sp, mp, delta, d=d, i=i):
                sp.C[d, i] += delta
            record("C", (d, i), grads.d_C[d, i], bump)
    for d in range(D):
        def bump_p(sp, mp, delta, d=d):
            sp.phi_plus[d] += delta
        record("phi_plus", (d,), grads.d_phi_plus[d], bump_p)

        def bump_m(sp, mp, delta, d=d):
            sp.phi_minus[d] += delta
        record("phi_minus", (d,), grads.d_phi_minus[d], bump_m)

    rng = np.random.default_rng(seed)
    F = model_params.n_features
    picks = rng.choice(F, size=min(n_coeff_samples, F), replace=False)
    for j in picks:
        def bump_c(sp, mp, delta, j=j):
            mp.coeffs[j] += delta
        record("coeffs", (int(j),), grads.d_coeffs[j], bump_c)

    def bump_b(sp, mp, delta):
        mp.bias += delta
    record("bias", (), grads.d_coeffs[-1], bump_b)

    worst = max(entries, key=lambda e: e.rel_error)
    return FDReport(worst.rel_error, worst, entries)
