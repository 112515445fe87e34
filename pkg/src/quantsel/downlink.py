"""Downlink ZF precoding with coarse quantization at the users.

With ZF and equal power per user, every user sees the same SINR
``alpha p / (1 + (1 - alpha) p)`` where ``p = P / tr((H H^H)^{-1})``.  Maximising
the sum rate over antenna subsets therefore reduces to minimising that trace,
independent of the ADC resolution.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .channel import (AntennaSubset, SelectionOutcome, as_indices, block_circulant,
                      dft_matrix, freq_channels)
from .linalg import COND_LIMIT, IllConditionedError, gram_cholesky, gram_inverse_trace
from .quantization import QuantizerSpec

__all__ = [
    "IllConditionedError",
    "UnboundedError",
    "DlEvaluation",
    "RateLossProfile",
    "zf_precoder",
    "dl_power",
    "dl_sum_rate",
    "dl_rate_loss",
    "rate_loss_profile",
    "p_d_max",
    "max_rate_loss",
    "nbs_select",
    "exhaustive_dl_select",
    "dl_ofdm_power",
    "dl_ofdm_sum_rate",
    "dl_ofdm_sinr",
    "dbm_to_linear",
]

EXHAUSTIVE_BUDGET = 10**6


class UnboundedError(ValueError):
    """The rate loss has no finite maximiser (perfect quantization)."""


def dbm_to_linear(p_dbm):
    """dBm to watts; with noise-normalised channels this is the SNR scale."""
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class DlEvaluation:
    subset: AntennaSubset | None
    p_t: float
    sum_rate: float
    per_user_sinr: float


@dataclass(frozen=True)
class RateLossProfile:
    tr_q: float  # large subset
    tr_k: float  # small subset
    p_d_max: float
    max_loss: float
    subset_small: AntennaSubset | None = None
    subset_large: AntennaSubset | None = None


def _sinr(p_t, alpha):
    return alpha * p_t / (1.0 + (1.0 - alpha) * p_t)


def _sum_rate(p_t, n_ms, alpha):
    return n_ms * np.log2(1.0 + _sinr(p_t, alpha))


def zf_precoder(H_T) -> np.ndarray:
    """Right pseudo-inverse ``H^H (H H^H)^{-1}``."""
    H_T = np.atleast_2d(H_T)
    L = gram_cholesky(H_T)
    gram_inv = sla.cho_solve((L, True), np.eye(L.shape[0], dtype=complex))
    return H_T.conj().T @ gram_inv


def dl_power(H_T, P: float) -> float:
    """Per-user power that spends the total budget ``P`` under ZF."""
    if P < 0:
        raise ValueError("total power must be nonnegative")
    return P / gram_inverse_trace(H_T)


def dl_sum_rate(H_T, P: float, spec: QuantizerSpec, subset=None) -> DlEvaluation:
    H_T = np.atleast_2d(H_T)
    p_t = dl_power(H_T, P)
    sinr = _sinr(p_t, spec.alpha)
    return DlEvaluation(
        subset=None if subset is None else AntennaSubset.of(subset),
        p_t=p_t,
        sum_rate=float(H_T.shape[0] * math.log2(1.0 + sinr)),
        per_user_sinr=float(sinr),
    )


def _loss_from_traces(tr_q, tr_k, P, alpha, n_ms):
    """Sum-rate gap between the large (``tr_q``) and small (``tr_k``) subsets.

    Written as ``log(1 + x)`` with a positive ``x`` so it stays accurate when the
    two rates nearly coincide (large ``P``).
    """
    psi = tr_k - tr_q
    num = alpha * psi * P
    den = tr_q**2 + (psi + P) * tr_q + (1.0 - alpha) * (P**2 + P * (psi + tr_q))
    return n_ms * np.log1p(num / den) / math.log(2.0)


def dl_rate_loss(H_small, H_large, P: float, spec: QuantizerSpec) -> float:
    """``R(large) - R(small)`` for nested antenna subsets."""
    H_small = np.atleast_2d(H_small)
    tr_k = gram_inverse_trace(H_small)
    tr_q = gram_inverse_trace(H_large)
    if P == 0:
        return 0.0
    return float(_loss_from_traces(tr_q, tr_k, P, spec.alpha, H_small.shape[0]))


def _p_d_max(tr_q, tr_k, alpha):
    if alpha >= 1.0:
        raise UnboundedError("with perfect quantization the rate loss grows monotonically in P")
    return math.sqrt(tr_q * tr_k / (1.0 - alpha))


def _max_loss(tr_q, tr_k, alpha, n_ms):
    if alpha >= 1.0:
        raise UnboundedError("with perfect quantization the rate loss grows monotonically in P")
    beta = 1.0 - alpha
    den = tr_q + beta * tr_k + 2.0 * math.sqrt(beta * tr_q * tr_k)
    return n_ms * math.log2(1.0 + alpha * (tr_k - tr_q) / den)


def p_d_max(H_small, H_large, spec: QuantizerSpec) -> float:
    """Total power at which the loss from dropping antennas peaks."""
    return _p_d_max(gram_inverse_trace(H_large), gram_inverse_trace(H_small), spec.alpha)


def max_rate_loss(H_small, H_large, spec: QuantizerSpec) -> float:
    H_small = np.atleast_2d(H_small)
    return _max_loss(gram_inverse_trace(H_large), gram_inverse_trace(H_small), spec.alpha,
                     H_small.shape[0])


def rate_loss_profile(H_small, H_large, spec: QuantizerSpec, subset_small=None,
                      subset_large=None) -> RateLossProfile:
    H_small = np.atleast_2d(H_small)
    tr_q = gram_inverse_trace(H_large)
    tr_k = gram_inverse_trace(H_small)
    return RateLossProfile(
        tr_q=tr_q,
        tr_k=tr_k,
        p_d_max=_p_d_max(tr_q, tr_k, spec.alpha),
        max_loss=_max_loss(tr_q, tr_k, spec.alpha, H_small.shape[0]),
        subset_small=None if subset_small is None else AntennaSubset.of(subset_small),
        subset_large=None if subset_large is None else AntennaSubset.of(subset_large),
    )


def nbs_select(H_dl, n_t: int) -> AntennaSubset:
    """Columns with the largest norms; equal norms go to the lower index."""
    H_dl = np.atleast_2d(H_dl)
    if not 1 <= n_t <= H_dl.shape[1]:
        raise ValueError("n_t must lie in [1, N_BS]")
    norms = np.sum(np.abs(H_dl) ** 2, axis=0)
    order = np.argsort(-norms, kind="stable")
    return AntennaSubset.of(order[:n_t])


def _batched_inverse_traces(H_dl, combos):
    """``tr((H_T H_T^H)^{-1})`` for every column subset; ``inf`` when ill conditioned."""
    sub = np.moveaxis(H_dl[:, combos], 1, 0)  # (C, N_MS, n_t)
    gram = sub @ np.conj(np.swapaxes(sub, -1, -2))
    eig = np.linalg.eigvalsh(gram)
    bad = (eig[:, 0] <= 0) | (eig[:, -1] > COND_LIMIT * eig[:, 0])
    traces = np.full(len(combos), np.inf)
    good = ~bad
    if np.any(good):
        traces[good] = np.sum(1.0 / eig[good], axis=1)
    return traces


def exhaustive_dl_select(H_dl, n_t: int, P: float, spec: QuantizerSpec,
                         chunk: int = 20_000) -> SelectionOutcome:
    """Best ``n_t``-subset by full enumeration (minimum inverse-Gram trace).

    Subsets are scanned in lexicographic order and only a strictly smaller trace
    replaces the incumbent, so ties resolve to the lexicographically first one.
    """
    H_dl = np.atleast_2d(H_dl)
    n_bs = H_dl.shape[1]
    if math.comb(n_bs, n_t) > EXHAUSTIVE_BUDGET:
        raise ValueError(f"C({n_bs}, {n_t}) exceeds the exhaustive budget of {EXHAUSTIVE_BUDGET}")
    best, best_tr = None, math.inf
    it = itertools.combinations(range(n_bs), n_t)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        combos = np.array(block, dtype=np.intp)
        traces = _batched_inverse_traces(H_dl, combos)
        k = int(np.argmin(traces))
        if traces[k] < best_tr:
            best, best_tr = block[k], float(traces[k])
    if best is None:
        raise IllConditionedError("no full-rank antenna subset of this size")
    p_t = P / best_tr
    return SelectionOutcome(
        subset=AntennaSubset(best),
        objective=float(_sum_rate(p_t, H_dl.shape[0], spec.alpha)),
        algorithm="exhaustive",
    )


def _dl_taps(taps):
    taps = np.asarray(taps)
    return taps[None] if taps.ndim == 2 else taps


def dl_ofdm_power(taps, subset, P: float, n_sc: int) -> float:
    """``P / sum_n tr((G_n G_n^H)^{-1})`` for bulk selection over all subcarriers."""
    taps = _dl_taps(taps)
    idx = as_indices(subset, taps.shape[2])
    G = freq_channels(taps[:, :, idx], n_sc)
    total = sum(gram_inverse_trace(G_n) for G_n in G)
    return P / total


def dl_ofdm_sum_rate(taps, subset, P: float, spec: QuantizerSpec, n_sc: int) -> float:
    """Average (over subcarriers) sum rate; the SINR is flat in users and subcarriers."""
    taps = _dl_taps(taps)
    p_t = dl_ofdm_power(taps, subset, P, n_sc)
    return float(_sum_rate(p_t, taps.shape[1], spec.alpha))


def dl_ofdm_sinr(taps, subset, P: float, spec: QuantizerSpec, n_sc: int) -> np.ndarray:
    """Per-subcarrier, per-user SINR built from the explicit time-domain model.

    Uses the block-circulant channel, per-subcarrier ZF, the time-domain AQNM
    covariance and the DFT combiner, without relying on the closed-form SINR.
    Meant for small instances; returns shape ``(n_sc, N_MS)``.
    """
    taps = _dl_taps(taps)
    idx = as_indices(subset, taps.shape[2])
    sel = taps[:, :, idx]
    n_ms, n_t = sel.shape[1], sel.shape[2]
    alpha = spec.alpha

    H_bar = block_circulant(sel, n_sc)
    p_t = P / float(np.real(np.trace(np.linalg.inv(H_bar @ H_bar.conj().T))))

    G = freq_channels(sel, n_sc)
    W_bb = sla.block_diag(*[zf_precoder(G_n) for G_n in G])
    W = dft_matrix(n_sc)
    W_bs = np.kron(W, np.eye(n_t))
    W_ms = np.kron(W, np.eye(n_ms))

    tx = W_bs.conj().T @ W_bb  # time-domain precoder
    r_cov = p_t * H_bar @ tx @ tx.conj().T @ H_bar.conj().T + np.eye(n_sc * n_ms)
    R_qq = alpha * (1.0 - alpha) * np.diag(np.real(np.diag(r_cov)))
    v_cov = alpha**2 * np.eye(n_sc * n_ms) + W_ms @ R_qq @ W_ms.conj().T

    eff = W_ms @ H_bar @ tx  # frequency-domain symbol -> combiner output
    power = alpha**2 * p_t * np.abs(eff) ** 2
    signal = np.real(np.diag(power))
    interference = np.sum(power, axis=1) - signal
    sinr = signal / (interference + np.real(np.diag(v_cov)))
    return sinr.reshape(n_sc, n_ms)
