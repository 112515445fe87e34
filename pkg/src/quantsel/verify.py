"""Self-check battery run by ``quantsel verify``.

Each check draws seeded random instances small enough for brute force and
reports how many were examined, how many violated the property and the
worst margin observed (positive margin = property held with room to spare).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import block_circulant, dft_matrix, freq_channels, sample_channel
from .downlink import (UnboundedError, dl_ofdm_power, dl_ofdm_sinr, dl_rate_loss, dl_sum_rate,
                       exhaustive_dl_select, max_rate_loss, p_d_max)
from .linalg import gram_inverse_trace
from .quantization import QuantizerSpec
from .uplink import (exhaustive_ul_ofdm_select, exhaustive_ul_select, iter_qfas, iter_qfas_ofdm,
                     qfas, qfas_ofdm, ul_capacity, ul_ofdm_capacity)

__all__ = ["CheckResult", "VerificationReport", "verify_theorems", "instance_size"]

GREEDY_FACTOR = 1.0 - 1.0 / math.e


@dataclass(frozen=True)
class CheckResult:
    name: str
    count: int
    violations: int
    worst_margin: float
    note: str = ""
    expected_unbounded: bool = False

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.expected_unbounded:
            status = "PASS (unbounded, as expected)"
        text = (f"[{status}] {self.name}: {self.count} checked, {self.violations} violations, "
                f"worst margin {self.worst_margin:.3e}")
        return text + (f" ({self.note})" if self.note else "")


@dataclass(frozen=True)
class VerificationReport:
    seed: int
    budget: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        head = f"quantsel verify: seed={self.seed} budget={self.budget}"
        tail = "all checks passed" if self.passed else "VERIFICATION FAILED"
        return "\n".join([head, *(c.line() for c in self.checks), tail])


def instance_size(budget: int) -> int:
    """Largest antenna count in [4, 8] whose half-size subsets fit the budget."""
    n = 4
    for cand in range(4, 9):
        if math.comb(cand, cand // 2) <= budget:
            n = cand
    return n


def _narrowband(rng, n_bs, n_ms, scale=1.0):
    ch = sample_channel(n_bs, n_ms, 1, np.full(n_ms, scale), seed=rng)
    return ch.taps[0]


def _result(name, margins, note="", tol=0.0):
    margins = np.asarray(margins, dtype=float)
    return CheckResult(name, int(margins.size), int(np.sum(margins < -tol)),
                       float(margins.min()) if margins.size else math.nan, note)


# -- downlink ---------------------------------------------------------------

def check_dl_monotonicity(rng, n_inst, alphas=(0.7, 0.9655, 1.0), n_bs=8, n_ms=2, P=10.0):
    """Optimal sum rate strictly increases with the number of active antennas."""
    margins = []
    for _ in range(n_inst):
        H = _narrowband(rng, n_bs, n_ms).T
        for a in alphas:
            spec = QuantizerSpec.from_alpha(a)
            rates = [exhaustive_dl_select(H, n_t, P, spec).objective for n_t in range(n_ms, n_bs + 1)]
            margins.extend(np.diff(rates))
    return _result("dl_monotonicity", margins, f"alpha in {list(alphas)}, n_t = {n_ms}..{n_bs}")


def _nested_pair(rng, n_bs=8, n_ms=2):
    H = _narrowband(rng, n_bs, n_ms).T
    k = int(rng.integers(n_ms, n_bs))
    small = np.sort(rng.choice(n_bs, size=k, replace=False))
    extra = np.setdiff1d(np.arange(n_bs), small)
    large = np.sort(np.concatenate([small, rng.choice(extra, size=int(rng.integers(1, extra.size + 1)),
                                                      replace=False)]))
    return H[:, small], H[:, large]


def check_dl_unimodality(rng, n_inst, alpha=0.9655, grid_points=200):
    """Rate loss peaks at the closed-form power with the closed-form value."""
    spec = QuantizerSpec.from_alpha(alpha)
    name = "dl_rate_loss_peak"
    if spec.is_perfect:
        H_s, H_l = _nested_pair(rng)
        try:
            p_d_max(H_s, H_l, spec)
        except UnboundedError:
            return CheckResult(name, 1, 0, math.inf, "alpha = 1: loss has no finite peak",
                               expected_unbounded=True)
        return CheckResult(name, 1, 1, -math.inf, "alpha = 1 returned a finite peak")
    margins = []
    for _ in range(n_inst):
        H_s, H_l = _nested_pair(rng)
        p_star = p_d_max(H_s, H_l, spec)
        grid = np.logspace(math.log10(p_star) - 3, math.log10(p_star) + 3, grid_points)
        loss = np.array([dl_rate_loss(H_s, H_l, P, spec) for P in grid])
        k = int(np.argmax(loss))
        # one grid step is a factor 10**(6/199) ~ 1.07; the peak must lie within it
        step = grid[1] / grid[0]
        margins.append(math.log(step) - abs(math.log(grid[k] / p_star)))
        closed = max_rate_loss(H_s, H_l, spec)
        margins.append(1e-6 - abs(dl_rate_loss(H_s, H_l, p_star, spec) - closed))
        # single peak: increasing before the argmax, decreasing after
        d = np.diff(loss)
        margins.append(min(d[:k].min(initial=0.0), -d[k:].max(initial=0.0)) + 1e-12)
    return _result(name, margins, f"alpha = {alpha}")


def check_dl_vanishing_loss(rng, n_inst, alpha=0.9655, P=1e12):
    """Loss from dropping antennas vanishes at very high power under coarse quantization."""
    spec = QuantizerSpec.from_alpha(alpha)
    name = "dl_loss_vanishes"
    if spec.is_perfect:
        return CheckResult(name, 0, 0, math.inf, "alpha = 1: loss grows without bound",
                           expected_unbounded=True)
    margins = []
    ceiling = 2 * math.log2(1.0 + alpha / (1.0 - alpha))
    for _ in range(n_inst):
        H_s, H_l = _nested_pair(rng)
        margins.append(1e-3 - dl_rate_loss(H_s, H_l, P, spec))
        margins.append(1e-3 - abs(dl_sum_rate(H_s, P, spec).sum_rate - ceiling))
    return _result(name, margins, f"P = {P:g}, alpha = {alpha}")


# -- uplink -----------------------------------------------------------------

def _all_subset_capacities(H, rho, spec):
    n = H.shape[0]
    caps = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        idx = [i for i in range(n) if mask >> i & 1]
        caps[mask] = ul_capacity(H[idx], rho, spec)
    return caps


def check_submodularity(rng, n_inst, n_bs, spec, n_ms=2):
    """Diminishing returns and monotonicity over every nested pair of subsets."""
    margins = []
    masks = np.arange(1 << n_bs)
    for _ in range(n_inst):
        rho = float(10.0 ** rng.uniform(-1, 2))
        caps = _all_subset_capacities(_narrowband(rng, n_bs, n_ms), rho, spec)
        worst = math.inf
        for B in range(1 << n_bs):
            subs = masks[((masks & B) == masks) & (masks != B)]  # A strictly inside B
            for s in range(n_bs):
                bit = 1 << s
                if B & bit:
                    continue
                gain_B = caps[B | bit] - caps[B]
                worst = min(worst, gain_B)
                if subs.size:
                    gain_A = caps[subs | bit] - caps[subs]
                    worst = min(worst, float(np.min(gain_A - gain_B)))
        margins.append(worst)
    return _result("ul_submodularity", margins, f"N_BS = {n_bs}, all A in B", tol=1e-9)


def check_greedy_bound(rng, n_inst, n_bs, spec, n_ms=2, n_sc=8, n_taps=2):
    """QFAS reaches at least (1 - 1/e) of the optimum, narrowband and OFDM."""
    n_r = n_bs // 2
    ratios = []
    for k in range(n_inst):
        rho = float(10.0 ** rng.uniform(-1, 2))
        if k % 2 == 0:
            H = _narrowband(rng, n_bs, n_ms)
            best = exhaustive_ul_select(H, rho, spec, n_r).objective
            got = qfas(H, rho, spec, n_r).objective
        else:
            taps = sample_channel(n_bs, n_ms, n_taps, np.ones(n_ms), seed=rng).taps
            best = exhaustive_ul_ofdm_select(taps, rho, spec, n_r, n_sc).objective
            got = qfas_ofdm(taps, rho, spec, n_r, n_sc).objective
        ratios.append(got / best)
    ratios = np.array(ratios)
    return _result("ul_greedy_bound", ratios - GREEDY_FACTOR,
                   f"worst qfas/optimum ratio {ratios.min():.4f}")


def _direct_q(F, d, idx, rho_alpha):
    n_ms = F.shape[-1]
    sub = F[:, idx]
    M = np.eye(n_ms) + rho_alpha * np.einsum("siu,i,siv->suv", sub.conj(), 1.0 / d[idx], sub)
    return np.linalg.inv(M)


def check_rank_one(rng, n_inst, spec, n_bs=8, n_ms=3, n_r=5, n_sc=8, n_taps=4):
    """Running inverse and stage rates equal direct recomputation."""
    margins = []
    for k in range(n_inst):
        rho = float(10.0 ** rng.uniform(-1, 2))
        ofdm = k % 2 == 1
        if ofdm:
            taps = sample_channel(n_bs, n_ms, n_taps, np.ones(n_ms), seed=rng).taps
            stages = iter_qfas_ofdm(taps, rho, spec, n_r, n_sc)
            F = freq_channels(taps, n_sc)
        else:
            H = _narrowband(rng, n_bs, n_ms)
            stages = iter_qfas(H, rho, spec, n_r)
            F = H[None]
        for state in stages:
            idx = state.selected
            Q = _direct_q(F, state.penalties, idx, rho * spec.alpha)
            err_q = float(np.max(np.linalg.norm(state.q_matrix - Q, axis=(1, 2))))
            if ofdm:
                rate = ul_ofdm_capacity(taps, idx, rho, spec, n_sc)[1]
            else:
                rate = ul_capacity(H[idx], rho, spec)
            err_r = abs(state.stage_rates[-1] - rate)
            margins.append(1e-8 - max(err_q, err_r))
    return _result("ul_rank_one_update", margins, "narrowband and OFDM (N_sc = 8, L = 4)")


# -- OFDM ---------------------------------------------------------------------

def check_block_circulant(rng, n_inst, spec, n_sc=8, n_taps=3, n_bs=5, n_ms=2, P=10.0):
    """DFT diagonalisation, trace identity and flat downlink SINR."""
    margins = []
    for _ in range(n_inst):
        taps = sample_channel(n_bs, n_ms, n_taps, np.ones(n_ms), seed=rng).taps
        dl = np.swapaxes(taps, 1, 2)  # N_MS x N_BS per tap
        H_bar = block_circulant(dl, n_sc)
        W = dft_matrix(n_sc)
        D = np.kron(W, np.eye(n_ms)) @ H_bar @ np.kron(W, np.eye(n_bs)).conj().T
        G = freq_channels(dl, n_sc)
        expected = np.zeros_like(D)
        for n in range(n_sc):
            expected[n * n_ms:(n + 1) * n_ms, n * n_bs:(n + 1) * n_bs] = G[n]
        margins.append(1e-9 - float(np.max(np.abs(D - expected))))

        tr_time = float(np.real(np.trace(np.linalg.inv(H_bar @ H_bar.conj().T))))
        tr_freq = sum(gram_inverse_trace(g) for g in G)
        margins.append(1e-9 - abs(tr_time - tr_freq) / tr_freq)

        subset = np.arange(n_bs)
        sinr = dl_ofdm_sinr(dl, subset, P, spec, n_sc)
        p_t = dl_ofdm_power(dl, subset, P, n_sc)
        closed = spec.alpha * p_t / (1.0 + (1.0 - spec.alpha) * p_t)
        margins.append(1e-12 - float(np.max(np.abs(sinr - closed))))
    return _result("ofdm_block_circulant", margins, f"N_sc = {n_sc}, L = {n_taps}")


def verify_theorems(seed: int = 0, budget: int = 100, instances: int = 20,
                    alpha: float = 0.9655) -> VerificationReport:
    """Run the whole battery.

    ``budget`` caps the number of subsets any brute-force oracle enumerates for
    a half-size selection, which fixes the uplink instance size.  ``alpha`` is
    the quantization gain used by the rate-loss checks; ``alpha = 1`` makes
    them report the unbounded case.
    """
    if budget < 1 or instances < 1:
        raise ValueError("budget and instances must be positive")
    rng = np.random.default_rng(seed)
    spec = QuantizerSpec.from_alpha(alpha)
    ul_spec = spec if not spec.is_perfect else QuantizerSpec.from_alpha(0.9655)
    n_bs = instance_size(budget)
    checks = (
        check_dl_monotonicity(rng, instances),
        check_dl_unimodality(rng, instances, alpha),
        check_dl_vanishing_loss(rng, instances, alpha),
        check_submodularity(rng, max(1, instances // 4), min(n_bs, 6), ul_spec),
        check_greedy_bound(rng, instances, n_bs, ul_spec),
        check_rank_one(rng, instances, ul_spec),
        check_block_circulant(rng, instances, ul_spec),
    )
    return VerificationReport(seed, budget, checks)
