"""Uplink receive antenna selection under the AQNM.

The capacity of the selected rows ``H_K`` is

    R(K) = log2 | I + rho alpha D^{-1} H_K H_K^H |,   D = diag(1 + rho (1 - alpha) ||f_i||^2)

and is evaluated through the ``N_MS x N_MS`` dual determinant.  It is
normalised, monotone and submodular in ``K``, which gives the greedy
``(1 - 1/e)`` guarantee.  The greedy engine below serves QFAS, the FAS
baseline and their bulk-OFDM variants: one running inverse ``Q`` per
subcarrier, refreshed with a rank-one update after every pick.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .channel import AntennaSubset, SelectionOutcome, as_indices, freq_channels
from .linalg import log2det_hpd
from .quantization import QuantizerSpec, ul_ofdm_quant_covariance, ul_quant_covariance

__all__ = [
    "GreedyState",
    "McmcConfig",
    "ul_capacity",
    "ul_capacity_primal",
    "ul_ofdm_capacity",
    "iter_qfas",
    "iter_qfas_ofdm",
    "qfas",
    "fas_baseline",
    "qfas_ofdm",
    "fas_ofdm",
    "nbs_ul",
    "nbs_ofdm",
    "random_select",
    "random_select_ofdm",
    "exhaustive_ul_select",
    "exhaustive_ul_ofdm_select",
    "qmcmc_as",
    "qmcmc_ofdm",
    "metropolis_independence_chain",
]

EXHAUSTIVE_BUDGET = 10**6
_P_FLOOR = 1e-12


# -- capacity ---------------------------------------------------------------

def _check_rho(rho):
    if rho < 0:
        raise ValueError("rho must be nonnegative")


def _penalties(row_energy, rho, alpha):
    return 1.0 + rho * (1.0 - alpha) * row_energy


def ul_capacity(H_K, rho: float, spec: QuantizerSpec) -> float:
    """Sum capacity (bps/Hz) of the selected rows ``H_K`` (``N_r x N_MS``)."""
    _check_rho(rho)
    H_K = np.asarray(H_K)
    if H_K.size == 0:
        return 0.0
    H_K = np.atleast_2d(H_K)
    alpha = spec.alpha
    d = _penalties(np.sum(np.abs(H_K) ** 2, axis=1), rho, alpha)
    M = np.eye(H_K.shape[1]) + rho * alpha * (H_K.conj().T / d) @ H_K
    return float(log2det_hpd(M))


def ul_capacity_primal(H_K, rho: float, spec: QuantizerSpec) -> float:
    """Same capacity in the ``N_r x N_r`` AQNM form; kept as an oracle."""
    _check_rho(rho)
    H_K = np.asarray(H_K)
    if H_K.size == 0:
        return 0.0
    H_K = np.atleast_2d(H_K)
    alpha = spec.alpha
    n_r = H_K.shape[0]
    R_qq = ul_quant_covariance(spec, H_K, rho)
    A = np.eye(n_r) + rho * alpha**2 * np.linalg.solve(alpha**2 * np.eye(n_r) + R_qq,
                                                       H_K @ H_K.conj().T)
    sign, logdet = np.linalg.slogdet(A)
    return float(logdet / math.log(2.0))


def _ofdm_rows(taps, subset):
    taps = np.asarray(taps)
    if taps.ndim == 2:
        taps = taps[None]
    idx = as_indices(subset, taps.shape[1])
    return taps[:, idx, :]


def ul_ofdm_capacity(taps, subset, rho: float, spec: QuantizerSpec, n_sc: int,
                     form: str = "dbar"):
    """Per-subcarrier capacities and their sum for bulk selection ``subset``.

    ``form="dbar"`` uses ``log2|I + rho alpha G^H Dbar^{-1} G|`` (``N_MS``-sized);
    ``form="aqnm"`` uses ``log2|I + rho alpha^2 (alpha^2 I + R_qq)^{-1} G G^H|``.
    """
    _check_rho(rho)
    sel = _ofdm_rows(taps, subset)
    G = freq_channels(sel, n_sc)  # (n_sc, N_r, N_MS)
    alpha = spec.alpha
    n_r, n_ms = G.shape[1], G.shape[2]
    if n_r == 0:
        rates = np.zeros(n_sc)
        return rates, 0.0
    if form == "dbar":
        d_bar = _penalties(np.sum(np.abs(sel) ** 2, axis=(0, 2)), rho, alpha)
        M = np.eye(n_ms) + rho * alpha * (np.conj(np.swapaxes(G, 1, 2)) / d_bar) @ G
        rates = log2det_hpd(M)
    elif form == "aqnm":
        R_qq = ul_ofdm_quant_covariance(spec, sel, rho)
        C = alpha**2 * np.eye(n_r) + R_qq
        GG = G @ np.conj(np.swapaxes(G, 1, 2))
        A = np.eye(n_r) + rho * alpha**2 * np.linalg.solve(C, GG)
        rates = np.linalg.slogdet(A)[1] / math.log(2.0)
    else:
        raise ValueError(f"unknown capacity form {form!r}")
    rates = np.asarray(rates, dtype=float)
    return rates, float(np.sum(rates))


def _batched_capacity(F, d, combos, rho_alpha):
    """``sum_n log2|I + rho alpha F_K^H D^{-1} F_K|`` for each row subset in ``combos``.

    ``F`` has shape ``(n_sc, N_BS, N_MS)``, ``d`` the per-antenna penalties.
    """
    n_ms = F.shape[2]
    sub = F[:, combos]  # (n_sc, C, n_r, N_MS)
    w = 1.0 / d[combos]  # (C, n_r)
    M = np.einsum("sciu,ci,sciv->scuv", sub.conj(), w, sub) * rho_alpha
    M += np.eye(n_ms)
    return np.sum(log2det_hpd(M), axis=0)


# -- greedy engine ------------------------------------------------------------

@dataclass
class GreedyState:
    """Snapshot after each greedy stage.

    ``q_matrix`` and ``gains`` carry a leading subcarrier axis (length 1 for
    narrowband).  ``stage_rates[t]`` is the model capacity of the first ``t``
    picks, so ``stage_rates[0] == 0``.
    """

    selected: list[int]
    q_matrix: np.ndarray
    gains: np.ndarray
    penalties: np.ndarray
    stage_rates: list[float] = field(default_factory=lambda: [0.0])


def _greedy(F, rho, alpha, penalties, n_r, criterion) -> Iterator[GreedyState]:
    n_sc, n_bs, n_ms = F.shape
    if not 0 <= n_r <= n_bs:
        raise ValueError(f"cannot select {n_r} of {n_bs} antennas")
    rho_alpha = rho * alpha
    Q = np.broadcast_to(np.eye(n_ms, dtype=complex), (n_sc, n_ms, n_ms)).copy()
    c = np.sum(np.abs(F) ** 2, axis=2)  # (n_sc, N_BS): c_0(j) = ||f_{n,j}||^2
    available = np.ones(n_bs, dtype=bool)
    state = GreedyState([], Q.copy(), c.copy(), penalties.copy())

    for _ in range(n_r):
        if criterion == "ratio":
            score = c[0] / penalties
        else:
            score = np.sum(np.log2(1.0 + rho_alpha * np.maximum(c, 0.0) / penalties), axis=0)
        score = np.where(available, score, -np.inf)
        J = int(np.argmax(score))  # first maximiser = lowest index
        available[J] = False

        c_J = np.maximum(c[:, J], 0.0)
        increment = float(np.sum(np.log2(1.0 + rho_alpha * c_J / penalties[J])))
        if rho_alpha > 0:
            f_J = np.conj(F[:, J, :])  # column f_J, with row J of F equal to f_J^H
            a = np.einsum("suv,sv->su", Q, f_J) / np.sqrt(c_J + penalties[J] / rho_alpha)[:, None]
            Q -= a[:, :, None] * a[:, None, :].conj()
            c -= np.abs(np.einsum("sju,su->sj", F, a)) ** 2

        state = GreedyState(
            selected=state.selected + [J],
            q_matrix=Q.copy(),
            gains=c.copy(),
            penalties=penalties,
            stage_rates=state.stage_rates + [state.stage_rates[-1] + increment],
        )
        yield state


def _narrowband(H):
    H = np.asarray(H)
    if H.ndim == 3:
        if H.shape[0] != 1:
            raise ValueError("expected a narrowband channel")
        H = H[0]
    return np.atleast_2d(H)


def iter_qfas(H, rho: float, spec: QuantizerSpec, n_r: int) -> Iterator[GreedyState]:
    """QFAS stages on a narrowband ``N_BS x N_MS`` channel: pick ``argmax c(j)/d_j``."""
    _check_rho(rho)
    H = _narrowband(H)
    d = _penalties(np.sum(np.abs(H) ** 2, axis=1), rho, spec.alpha)
    return _greedy(H[None], rho, spec.alpha, d, n_r, "ratio")


def _run(stages) -> GreedyState:
    state = None
    for state in stages:
        pass
    return state


def _outcome(order, objective, algorithm, trace=None):
    return SelectionOutcome(
        subset=AntennaSubset.of(order),
        objective=float(objective),
        algorithm=algorithm,
        trace=None if trace is None else tuple(float(v) for v in trace),
        order=tuple(order),
    )


def qfas(H, rho: float, spec: QuantizerSpec, n_r: int) -> SelectionOutcome:
    """Quantization-aware fast antenna selection."""
    H = _narrowband(H)
    state = _run(iter_qfas(H, rho, spec, n_r))
    if state is None:
        raise ValueError("n_r must be at least 1")
    objective = ul_capacity(H[state.selected], rho, spec)
    return _outcome(state.selected, objective, "qfas", state.stage_rates)


def _prefix_capacities(H, order, rho, spec):
    return [ul_capacity(H[order[:t]], rho, spec) for t in range(len(order) + 1)]


def fas_baseline(H, rho: float, spec: QuantizerSpec, n_r: int) -> SelectionOutcome:
    """Greedy selection that ignores quantization (``d_j = 1``, ``alpha = 1``).

    The reported objective and trace use the true quantized capacity.
    """
    _check_rho(rho)
    H = _narrowband(H)
    ones = np.ones(H.shape[0])
    state = _run(_greedy(H[None], rho, 1.0, ones, n_r, "ratio"))
    if state is None:
        raise ValueError("n_r must be at least 1")
    trace = _prefix_capacities(H, state.selected, rho, spec)
    return _outcome(state.selected, trace[-1], "fas", trace)


def iter_qfas_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int,
                   n_sc: int) -> Iterator[GreedyState]:
    """Bulk-selection QFAS for OFDM: maximise the summed per-subcarrier increments.

    The penalty of antenna ``j`` uses its energy over all taps,
    ``1 + rho (1 - alpha) sum_l ||row_j(H_l)||^2``.
    """
    _check_rho(rho)
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    F = freq_channels(taps, n_sc)
    d_bar = _penalties(np.sum(np.abs(taps) ** 2, axis=(0, 2)), rho, spec.alpha)
    return _greedy(F, rho, spec.alpha, d_bar, n_r, "log")


def qfas_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int, n_sc: int) -> SelectionOutcome:
    state = _run(iter_qfas_ofdm(taps, rho, spec, n_r, n_sc))
    if state is None:
        raise ValueError("n_r must be at least 1")
    _, total = ul_ofdm_capacity(taps, state.selected, rho, spec, n_sc)
    return _outcome(state.selected, total, "qfas", state.stage_rates)


def fas_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int, n_sc: int) -> SelectionOutcome:
    """OFDM greedy without quantization awareness; evaluated with the true ``spec``."""
    _check_rho(rho)
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    F = freq_channels(taps, n_sc)
    state = _run(_greedy(F, rho, 1.0, np.ones(taps.shape[1]), n_r, "log"))
    if state is None:
        raise ValueError("n_r must be at least 1")
    _, total = ul_ofdm_capacity(taps, state.selected, rho, spec, n_sc)
    return _outcome(state.selected, total, "fas")


# -- simple baselines -----------------------------------------------------------

def _top_rows(energy, n_r):
    if not 1 <= n_r <= energy.size:
        raise ValueError(f"cannot select {n_r} of {energy.size} antennas")
    return np.argsort(-energy, kind="stable")[:n_r]


def nbs_ul(H, rho: float, spec: QuantizerSpec, n_r: int) -> SelectionOutcome:
    """Largest row norms, ties to the lower index."""
    H = _narrowband(H)
    order = _top_rows(np.sum(np.abs(H) ** 2, axis=1), n_r)
    return _outcome(order.tolist(), ul_capacity(H[np.sort(order)], rho, spec), "nbs")


def nbs_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int, n_sc: int) -> SelectionOutcome:
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    order = _top_rows(np.sum(np.abs(taps) ** 2, axis=(0, 2)), n_r)
    _, total = ul_ofdm_capacity(taps, np.sort(order), rho, spec, n_sc)
    return _outcome(order.tolist(), total, "nbs")


def random_select(H, rho: float, spec: QuantizerSpec, n_r: int, seed=None) -> SelectionOutcome:
    """Uniformly random ``n_r`` antennas (without replacement)."""
    H = _narrowband(H)
    rng = np.random.default_rng(seed)
    order = rng.choice(H.shape[0], size=n_r, replace=False)
    return _outcome(order.tolist(), ul_capacity(H[np.sort(order)], rho, spec), "random")


def random_select_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int, n_sc: int,
                       seed=None) -> SelectionOutcome:
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    rng = np.random.default_rng(seed)
    order = rng.choice(taps.shape[1], size=n_r, replace=False)
    _, total = ul_ofdm_capacity(taps, np.sort(order), rho, spec, n_sc)
    return _outcome(order.tolist(), total, "random")


# -- exhaustive oracles -----------------------------------------------------------

def _exhaustive(F, d, n_r, rho_alpha, chunk=4096):
    n_bs = F.shape[1]
    if math.comb(n_bs, n_r) > EXHAUSTIVE_BUDGET:
        raise ValueError(f"C({n_bs}, {n_r}) exceeds the exhaustive budget of {EXHAUSTIVE_BUDGET}")
    best, best_val = None, -math.inf
    it = itertools.combinations(range(n_bs), n_r)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        vals = _batched_capacity(F, d, np.array(block, dtype=np.intp), rho_alpha)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best, best_val = block[k], float(vals[k])
    return best, best_val


def exhaustive_ul_select(H, rho: float, spec: QuantizerSpec, n_r: int) -> SelectionOutcome:
    """Global capacity maximiser over all ``n_r``-subsets (lexicographic tie-break)."""
    _check_rho(rho)
    H = _narrowband(H)
    d = _penalties(np.sum(np.abs(H) ** 2, axis=1), rho, spec.alpha)
    best, _ = _exhaustive(H[None], d, n_r, rho * spec.alpha)
    return _outcome(list(best), ul_capacity(H[list(best)], rho, spec), "exhaustive")


def exhaustive_ul_ofdm_select(taps, rho: float, spec: QuantizerSpec, n_r: int,
                              n_sc: int) -> SelectionOutcome:
    _check_rho(rho)
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    F = freq_channels(taps, n_sc)
    d_bar = _penalties(np.sum(np.abs(taps) ** 2, axis=(0, 2)), rho, spec.alpha)
    best, _ = _exhaustive(F, d_bar, n_r, rho * spec.alpha)
    _, total = ul_ofdm_capacity(taps, list(best), rho, spec, n_sc)
    return _outcome(list(best), total, "exhaustive")


# -- adaptive MCMC ------------------------------------------------------------------

@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    The step size at iteration ``t`` is ``(t + 1) ** -step_exponent``; an exponent
    in ``(0.5, 1]`` makes the steps sum to infinity while their squares converge.
    """

    n_mcmc: int = 60
    tau_stop: int = 30
    tau_rate: float = 1.0
    step_exponent: float = 0.7

    def __post_init__(self):
        if self.n_mcmc < 1 or self.tau_stop < 0:
            raise ValueError("n_mcmc must be positive and tau_stop nonnegative")
        if not self.tau_rate > 0:
            raise ValueError("tau_rate must be positive")
        if not 0.5 < self.step_exponent <= 1.0:
            raise ValueError("step_exponent must lie in (0.5, 1]")

    def step(self, t: int) -> float:
        return (t + 1.0) ** -self.step_exponent


def _log_q(mask, log_p, log_1mp):
    return float(np.sum(np.where(mask, log_p, log_1mp)))


def _repair(mask, p, n_r, rng):
    """Force exactly ``n_r`` ones: drop the lowest-``p`` picks or add random ones."""
    count = int(mask.sum())
    if count > n_r:
        on = np.flatnonzero(mask)
        # equal probabilities are ordered at random rather than by index
        order = np.lexsort((rng.random(on.size), -p[on]))
        mask = np.zeros_like(mask)
        mask[on[order[:n_r]]] = True
    elif count < n_r:
        off = np.flatnonzero(~mask)
        mask = mask.copy()
        mask[rng.choice(off, size=n_r - count, replace=False)] = True
    return mask


def metropolis_independence_chain(objective: Callable[[np.ndarray], float], n_bs: int,
                                  n_r: int, cfg: McmcConfig, init, rng,
                                  proposal: str = "adaptive"):
    """Adaptive Metropolized independence sampler over ``n_r``-subsets.

    Targets ``pi(w) ~ exp(objective(w) / tau)`` with a product-Bernoulli
    proposal whose probabilities move toward the empirical selection frequencies
    after each batch of ``n_mcmc`` samples.  The ``q`` ratio in the acceptance
    test is evaluated on the repaired codewords.  With ``proposal="uniform"`` the
    probabilities stay fixed, which makes the proposal symmetric on subsets.

    Returns ``(best_mask, best_value, per_iteration_best, visited_states)``.
    """
    cache: dict[bytes, float] = {}

    def value(mask):
        key = np.packbits(mask).tobytes()
        if key not in cache:
            cache[key] = float(objective(mask))
        return cache[key]

    cur = np.zeros(n_bs, dtype=bool)
    cur[as_indices(init, n_bs)] = True
    if int(cur.sum()) != n_r:
        raise ValueError("initial subset must contain exactly n_r antennas")
    cur_val = value(cur)
    best, best_val = cur.copy(), cur_val
    p = np.full(n_bs, 0.5)
    trace, visited = [], []
    tau = cfg.tau_rate

    for t in range(1, cfg.tau_stop + 1):
        pc = np.clip(p, _P_FLOOR, 1.0 - _P_FLOOR)
        log_p, log_1mp = np.log(pc), np.log1p(-pc)
        cur_lq = _log_q(cur, log_p, log_1mp)
        samples = np.empty((cfg.n_mcmc, n_bs), dtype=bool)
        for i in range(cfg.n_mcmc):
            prop = _repair(rng.random(n_bs) < p, p, n_r, rng)
            val = value(prop)
            lq = _log_q(prop, log_p, log_1mp)
            log_ratio = (val - cur_val) / tau + (cur_lq - lq)
            if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
                cur, cur_val, cur_lq = prop, val, lq
            samples[i] = cur
            if cur_val > best_val:
                best, best_val = cur.copy(), cur_val
        visited.append(samples)
        if proposal == "adaptive":
            p = p + cfg.step(t) * (samples.mean(axis=0) - p)
        trace.append(best_val)
    return best, best_val, trace, visited


def qmcmc_as(H, rho: float, spec: QuantizerSpec, n_r: int, cfg: McmcConfig | None = None,
             init=None, seed=None) -> SelectionOutcome:
    """Adaptive MCMC search started from ``init`` (QFAS output when omitted).

    The best subset seen is returned, so the objective never falls below the
    objective of ``init``.
    """
    cfg = cfg or McmcConfig()
    H = _narrowband(H)
    if init is None:
        init = qfas(H, rho, spec, n_r).subset
    rng = np.random.default_rng(seed)
    best, best_val, trace, _ = metropolis_independence_chain(
        lambda m: ul_capacity(H[m], rho, spec), H.shape[0], n_r, cfg, init, rng)
    return _outcome(np.flatnonzero(best).tolist(), best_val, "qmcmc", trace)


def qmcmc_ofdm(taps, rho: float, spec: QuantizerSpec, n_r: int, n_sc: int,
               cfg: McmcConfig | None = None, init=None, seed=None) -> SelectionOutcome:
    """OFDM variant targeting ``exp(sum_n R_n(w) / tau)``."""
    cfg = cfg or McmcConfig()
    taps = np.asarray(taps)
    taps = taps[None] if taps.ndim == 2 else taps
    if init is None:
        init = qfas_ofdm(taps, rho, spec, n_r, n_sc).subset
    F = freq_channels(taps, n_sc)
    d_bar = _penalties(np.sum(np.abs(taps) ** 2, axis=(0, 2)), rho, spec.alpha)
    rho_alpha = rho * spec.alpha

    def objective(mask):
        idx = np.flatnonzero(mask)[None]
        return _batched_capacity(F, d_bar, idx, rho_alpha)[0]

    rng = np.random.default_rng(seed)
    best, best_val, trace, _ = metropolis_independence_chain(
        objective, taps.shape[1], n_r, cfg, init, rng)
    return _outcome(np.flatnonzero(best).tolist(), best_val, "qmcmc", trace)
