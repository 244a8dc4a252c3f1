"""Closed-form expressions on the two-sphere for frame-constant noise.

These are the fast paths used by the solvers and the reference formulas the
generic operators are checked against.  Arguments are plain arrays of values
and coordinate partials; ``sig_t2`` and ``sig_p2`` are the squared noise
amplitudes along ``E_theta`` and ``E_phi``.
"""
from __future__ import annotations

import numpy as np


def divergence(xt, dxt_dtheta, dxp_dphi, theta):
    """``(1/sin) d_theta(sin X^theta) + (1/sin) d_phi X^phi``."""
    s, c = np.sin(theta), np.cos(theta)
    return dxt_dtheta + c / s * xt + dxp_dphi / s


def hessian_components(ft, fp, ftt, ftp, fpp, theta):
    """``(H_tt, H_tp, H_pp)`` of a scalar in the orthonormal frame."""
    s, c = np.sin(theta), np.cos(theta)
    h_tt = ftt
    h_pp = fpp / s**2 + c / s * ft
    h_tp = ftp / s - c / s**2 * fp
    return h_tt, h_tp, h_pp


def generator_strat(xt, xp, ft, fp, ftt, fpp, theta, sig_t2, sig_p2):
    s = np.sin(theta)
    return xt * ft + xp * fp / s + 0.5 * (sig_t2 * ftt + sig_p2 * fpp / s**2)


def generator_ito(xt, xp, ft, fp, ftt, fpp, theta, sig_t2, sig_p2):
    s, c = np.sin(theta), np.cos(theta)
    return (xt * ft + xp * fp / s
            + 0.5 * (sig_t2 * ftt + sig_p2 * (fpp / s**2 + c / s * ft)))


def ito_drift_correction(theta, sig_p2):
    """``(1/2) sum nabla_sigma sigma`` for ``sigma_1 = a E_theta``, ``sigma_2 = b E_phi``."""
    return -0.5 * sig_p2 * np.cos(theta) / np.sin(theta), np.zeros_like(np.asarray(theta, float))


def inner_divergence(p, pt, pp, theta, sig_t2, sig_p2):
    """``V = div(p D)`` for ``D = diag(sig_t2, sig_p2)``; returns ``(V^theta, V^phi)``."""
    s, c = np.sin(theta), np.cos(theta)
    vt = sig_t2 * pt + p * c / s * (sig_t2 - sig_p2)
    vp = sig_p2 / s * pp
    return vt, vp


def fp_rhs_strat(p, pt, pp, ptt, ppp, xt, dxt_dt, xp, dxp_dp, theta, sig_t2, sig_p2):
    """Stratonovich Fokker-Planck right-hand side in raw derivative form."""
    s, c = np.sin(theta), np.cos(theta)
    drift = -(1 / s) * (pt * s * xt + p * c * xt + p * s * dxt_dt + pp * xp + p * dxp_dp)
    d2_psin = ptt * s + 2 * pt * c - p * s
    return drift + sig_t2 / (2 * s) * d2_psin + sig_p2 / (2 * s**2) * ppp


def fp_rhs_ito(p, pt, pp, ptt, ppp, xt, dxt_dt, xp, dxp_dp, theta, sig_t2, sig_p2):
    """Ito Fokker-Planck right-hand side in raw derivative form."""
    s, c = np.sin(theta), np.cos(theta)
    drift = -(1 / s) * (pt * s * xt + p * c * xt + p * s * dxt_dt + pp * xp + p * dxp_dp)
    d_sin_pt = c * pt + s * ptt
    d_pcos = pt * c - p * s
    return (drift + sig_t2 / (2 * s) * (d_sin_pt + d_pcos)
            + sig_p2 / (2 * s) * (ppp / s - d_pcos))
