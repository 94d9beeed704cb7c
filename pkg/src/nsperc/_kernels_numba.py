"""Numba-jitted evaluation kernels (hot path).

Mirrors ``_kernels_numpy`` function-for-function; see that module for the
math. Scalar special functions are implemented locally because scipy is not
callable from nopython code: ``math.erfc`` covers the unscaled function and
a Laplace continued fraction covers the scaled one for large arguments.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

BACKEND_NAME = "numba"

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)


@njit(cache=True)
def _erfcx_scalar(x):
    """exp(x^2) * erfc(x); continued fraction above x = 5."""
    if x < 0.0:
        if x < -26.5:
            return math.inf
        return 2.0 * math.exp(x * x) - _erfcx_scalar(-x)
    if x <= 5.0:
        return math.exp(x * x) * math.erfc(x)
    t = 0.0
    for k in range(64, 0, -1):
        t = 0.5 * k / (x + t)
    return 1.0 / (_SQRT_PI * (x + t))


@njit(cache=True)
def _log_erfc_scalar(z):
    if z < 5.0:
        return math.log(math.erfc(z))
    return math.log(_erfcx_scalar(z)) - z * z


@njit(cache=True)
def _log_erfc_and_ratio(w):
    """(log erfc(w), d log erfc / dw) from a single transcendental call."""
    if w < 5.0:
        e = math.erfc(w)
        return math.log(e), -(2.0 / _SQRT_PI) * math.exp(-w * w) / e
    ex = _erfcx_scalar(w)
    return math.log(ex) - w * w, -(2.0 / _SQRT_PI) / ex


@njit(cache=True)
def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    d = b - a
    if d < -745.0:
        return a
    return a + math.log1p(math.exp(d))


@njit(cache=True)
def _log_fzt_scalar(C, B, omp):
    som = math.sqrt(omp)
    h = -C / som
    D = 2.0 * omp * B + 1.0
    lfzd = -B * C * C / D - math.log(2.0 * math.sqrt(D)) + _log_erfc_scalar(h / math.sqrt(2.0 * D))
    lfzu = _LOG_HALF + _log_erfc_scalar(-h / _SQRT_2)
    return _logaddexp(lfzd, lfzu)


def erfcx(x):
    return _erfcx_scalar(float(x))


def log_erfc(z):
    z = np.asarray(z, dtype=float)
    return _log_erfc_arr(np.atleast_1d(z)) if z.ndim else _log_erfc_scalar(float(z))


@njit(cache=True)
def _log_erfc_arr(z):
    out = np.empty_like(z)
    for i in range(z.size):
        out[i] = _log_erfc_scalar(z[i])
    return out


@njit(cache=True)
def _log_fzt_arr(C, B, omp):
    out = np.empty_like(C)
    for i in range(C.size):
        out[i] = _log_fzt_scalar(C[i], B, omp)
    return out


def log_fzt(C, B, omp):
    C = np.asarray(C, dtype=float)
    scalar = C.ndim == 0
    out = _log_fzt_arr(np.atleast_1d(C).ravel(), float(B), float(omp))
    if scalar:
        return float(out[0])
    return out.reshape(C.shape)


@njit(cache=True)
def _node_grads(C, dC, dB, domp, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som):
    dh = -dC / som + C * domp / (2.0 * omp * som)
    dD = 2.0 * (domp * B + omp * dB)
    dz = dh / s2D - z * dD / (2.0 * D)
    dlfzd = (
        -(2.0 * B * C * dC + C * C * dB) / D
        + B * C * C * dD / (D * D)
        - dD / (2.0 * D)
        + rd * dz
    )
    dlfzu = ru * (-dh / _SQRT_2)
    return wd * dlfzd + wu * dlfzu


@njit(cache=True)
def _node_state(C, B, omp):
    """Shared per-node state: (lft, wd, wu, rd, ru, h, z, D, s2D, som)."""
    som = math.sqrt(omp)
    h = -C / som
    D = 2.0 * omp * B + 1.0
    s2D = math.sqrt(2.0 * D)
    z = h / s2D
    le_d, rd = _log_erfc_and_ratio(z)
    le_u, ru = _log_erfc_and_ratio(-h / _SQRT_2)
    lfzd = -B * C * C / D - math.log(2.0 * math.sqrt(D)) + le_d
    lfzu = _LOG_HALF + le_u
    lft = _logaddexp(lfzd, lfzu)
    wd = math.exp(lfzd - lft)
    wu = math.exp(lfzu - lft)
    return lft, wd, wu, rd, ru, h, z, D, s2D, som


@njit(cache=True)
def l2_value(kappa, p2, c2, gsq, nodes, weights):
    B = c2 / (4.0 * gsq)
    sp = math.sqrt(p2)
    omp = 1.0 - p2
    acc = 0.0
    for i in range(nodes.size):
        acc += weights[i] * _log_fzt_scalar(sp * nodes[i] + kappa, B, omp)
    return acc


@njit(cache=True)
def l2_terms(kappa, p2, c2, gsq, nodes, weights):
    B = c2 / (4.0 * gsq)
    sp = math.sqrt(p2)
    omp = 1.0 - p2
    dB_c2 = 1.0 / (4.0 * gsq)
    dB_gs = -c2 / (4.0 * gsq * gsq)
    e_l = e_p = e_c = e_g = 0.0
    for i in range(nodes.size):
        u = nodes[i]
        C = sp * u + kappa
        st = _node_state(C, B, omp)
        lft, wd, wu, rd, ru, h, z, D, s2D, som = st
        dC_p2 = u / (2.0 * sp)
        g_p = _node_grads(C, dC_p2, 0.0, -1.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
        g_c = _node_grads(C, 0.0, dB_c2, 0.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
        g_g = _node_grads(C, 0.0, dB_gs, 0.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
        w = weights[i]
        e_l += w * lft
        e_p += w * g_p
        e_c += w * g_c
        e_g += w * g_g
    return e_l, e_p, e_c, e_g


@njit(cache=True)
def l3_value(kappa, p2, p3, c2, c3, gsq, nodes_in, w_in, nodes_out, w_out):
    B = c2 / (4.0 * gsq)
    th = c3 / c2
    spd = math.sqrt(p2 - p3)
    sp3 = math.sqrt(p3)
    omp = 1.0 - p2
    ni = nodes_in.size
    L = np.empty(ni)
    acc = 0.0
    for j in range(nodes_out.size):
        v = nodes_out[j]
        m = -math.inf
        for i in range(ni):
            li = _log_fzt_scalar(spd * nodes_in[i] + sp3 * v + kappa, B, omp)
            L[i] = th * li
            if L[i] > m:
                m = L[i]
        s = 0.0
        for i in range(ni):
            s += w_in[i] * math.exp(L[i] - m)
        acc += w_out[j] * (m + math.log(s))
    return acc


@njit(cache=True)
def l3_terms(kappa, p2, p3, c2, c3, gsq, nodes_in, w_in, nodes_out, w_out):
    B = c2 / (4.0 * gsq)
    th = c3 / c2
    spd = math.sqrt(p2 - p3)
    sp3 = math.sqrt(p3)
    omp = 1.0 - p2
    dB_c2 = 1.0 / (4.0 * gsq)
    dB_gs = -c2 / (4.0 * gsq * gsq)
    ni = nodes_in.size
    L = np.empty(ni)
    G3 = np.empty(ni)
    G2 = np.empty(ni)
    GC = np.empty(ni)
    GG = np.empty(ni)
    eM = eT = e3 = e2 = ec = eg = 0.0
    for j in range(nodes_out.size):
        v = nodes_out[j]
        m = -math.inf
        for i in range(ni):
            u = nodes_in[i]
            C = spd * u + sp3 * v + kappa
            st = _node_state(C, B, omp)
            lft, wd, wu, rd, ru, h, z, D, s2D, som = st
            dC_p3 = -u / (2.0 * spd) + v / (2.0 * sp3)
            dC_p2 = u / (2.0 * spd)
            G3[i] = _node_grads(C, dC_p3, 0.0, 0.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
            G2[i] = _node_grads(C, dC_p2, 0.0, -1.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
            GC[i] = _node_grads(C, 0.0, dB_c2, 0.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
            GG[i] = _node_grads(C, 0.0, dB_gs, 0.0, B, omp, lft, wd, wu, rd, ru, h, z, D, s2D, som)
            L[i] = lft
            if th * lft > m:
                m = th * lft
        Z = sT = s3 = s2 = sc = sg = 0.0
        for i in range(ni):
            lw = w_in[i] * math.exp(th * L[i] - m)
            Z += lw
            sT += lw * L[i]
            s3 += lw * G3[i]
            s2 += lw * G2[i]
            sc += lw * GC[i]
            sg += lw * GG[i]
        w = w_out[j]
        eM += w * (m + math.log(Z))
        eT += w * sT / Z
        e3 += w * s3 / Z
        e2 += w * s2 / Z
        ec += w * sc / Z
        eg += w * sg / Z
    return eM, eT, e3, e2, ec, eg
