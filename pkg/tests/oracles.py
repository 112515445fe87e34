"""Independent reference implementations used by the tests.

Nothing here calls into quantsel's numerical code: every routine is a direct,
slow transcription of the defining formula.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate, stats

# Lloyd-Max distortions for a unit Gaussian, computed with ``lloyd_max_quad``
# (adaptive quadrature per cell, uniform [-4, 4] initial levels, stop at
# |dD| < 1e-13) and frozen here.
ORACLE_BETA = {
    1: 0.36338022763241873,
    2: 0.11748184782935531,
    3: 0.03454776078878157,
    4: 0.009501008009546737,
    5: 0.0025046683610702044,
}


def lloyd_max_quad(bits: int, tol: float = 1e-13, max_iter: int = 100_000) -> float:
    n = 2**bits
    levels = np.linspace(-4.0, 4.0, n)
    pdf = stats.norm.pdf
    prev = np.inf
    for _ in range(max_iter):
        t = np.concatenate(([-np.inf], 0.5 * (levels[:-1] + levels[1:]), [np.inf]))
        new = []
        for i in range(n):
            p = integrate.quad(pdf, t[i], t[i + 1], epsabs=1e-15, epsrel=1e-13)[0]
            m = integrate.quad(lambda x: x * pdf(x), t[i], t[i + 1], epsabs=1e-15, epsrel=1e-13)[0]
            new.append(m / p)
        levels = np.array(new)
        dist = sum(integrate.quad(lambda x, y=y: (x - y) ** 2 * pdf(x), t[i], t[i + 1],
                                  epsabs=1e-16, epsrel=1e-13)[0]
                   for i, y in enumerate(levels))
        if abs(prev - dist) < tol:
            return dist
        prev = dist
    raise RuntimeError("no convergence")


def aqnm_ul_capacity(H_K, rho, alpha):
    """``log2 det(I + rho a^2 (a^2 I + R_qq)^{-1} H H^H)`` built entry by entry."""
    H_K = np.atleast_2d(H_K)
    n_r = H_K.shape[0]
    if n_r == 0:
        return 0.0
    R_qq = np.zeros((n_r, n_r))
    for i in range(n_r):
        R_qq[i, i] = alpha * (1 - alpha) * (rho * np.vdot(H_K[i], H_K[i]).real + 1.0)
    A = np.eye(n_r) + rho * alpha**2 * np.linalg.inv(alpha**2 * np.eye(n_r) + R_qq) @ H_K @ H_K.conj().T
    return float(np.log2(np.linalg.det(A).real))


def brute_ul_best(H, rho, alpha, n_r):
    best, best_val = None, -np.inf
    for combo in itertools.combinations(range(H.shape[0]), n_r):
        v = aqnm_ul_capacity(H[list(combo)], rho, alpha)
        if v > best_val + 1e-12:
            best, best_val = combo, v
    return best, best_val


def dl_rate(H_T, P, alpha):
    """ZF sum rate written out from the precoder."""
    W = H_T.conj().T @ np.linalg.inv(H_T @ H_T.conj().T)
    p = P / np.real(np.trace(W.conj().T @ W))
    sinr = alpha * p / (1 + (1 - alpha) * p)
    return H_T.shape[0] * np.log2(1 + sinr)


def brute_dl_best(H_dl, n_t, P, alpha):
    best, best_val = None, -np.inf
    for combo in itertools.combinations(range(H_dl.shape[1]), n_t):
        v = dl_rate(H_dl[:, list(combo)], P, alpha)
        if v > best_val + 1e-12:
            best, best_val = combo, v
    return best, best_val


def direct_q(H_sel, rho, alpha, penalties):
    """``(I + rho alpha H^H D^{-1} H)^{-1}`` by plain inversion."""
    n_ms = H_sel.shape[1]
    D_inv = np.diag(1.0 / np.asarray(penalties, dtype=float))
    return np.linalg.inv(np.eye(n_ms) + rho * alpha * H_sel.conj().T @ D_inv @ H_sel)


def block_circulant_loop(taps, n_sc):
    """Block ``(i, j)`` = ``H_{(i - j) mod n_sc}`` by explicit loops over all blocks."""
    L, r, c = taps.shape
    out = np.zeros((n_sc * r, n_sc * c), dtype=complex)
    for i in range(n_sc):
        for j in range(n_sc):
            ell = (i - j) % n_sc
            if ell < L:
                out[i * r:(i + 1) * r, j * c:(j + 1) * c] = taps[ell]
    return out


def complex_gaussian(rng, shape, var=1.0):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
