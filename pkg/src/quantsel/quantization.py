"""Additive quantization noise model (AQNM) for low-resolution ADCs.

A ``b``-bit scalar MMSE quantizer driven by a Gaussian input is linearised as
``Q(x) = alpha * x + q`` with ``alpha = 1 - beta`` and ``q`` uncorrelated with
``x``.  ``beta`` is the normalised mean squared quantization error.  For
``b <= 5`` it comes from a Lloyd-Max design (frozen in ``data/lloyd_max_beta.txt``),
above that from the high-resolution approximation ``(pi*sqrt(3)/2) 2^(-2b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "INF_BITS",
    "QuantizerSpec",
    "ScalarQuantizer",
    "LloydMaxConvergenceError",
    "lloyd_max",
    "quantizer_spec",
    "high_resolution_beta",
    "dl_quant_covariance",
    "ul_quant_covariance",
    "ul_ofdm_quant_covariance",
    "load_beta_table",
    "write_beta_table",
]

INF_BITS = math.inf
LLOYD_TABLE_MAX_BITS = 5
_HIGH_RES_CONSTANT = math.pi * math.sqrt(3.0) / 2.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class LloydMaxConvergenceError(RuntimeError):
    pass


def high_resolution_beta(bits: float) -> float:
    """``(pi*sqrt(3)/2) * 2**(-2*bits)``, accurate for ``bits > 5``."""
    return _HIGH_RES_CONSTANT * 2.0 ** (-2.0 * bits)


@dataclass(frozen=True)
class QuantizerSpec:
    """ADC resolution and the derived AQNM constants.

    ``bits`` may be ``math.inf`` for a perfect quantizer (``alpha == 1``).
    """

    bits: float
    beta: float

    @property
    def alpha(self) -> float:
        return 1.0 - self.beta

    @property
    def is_perfect(self) -> bool:
        return self.beta == 0.0

    @property
    def noise_factor(self) -> float:
        """``alpha * (1 - alpha)``, the scale of every quantization covariance."""
        return self.alpha * self.beta

    @classmethod
    def from_alpha(cls, alpha: float, bits: float = math.nan) -> "QuantizerSpec":
        """Build a spec directly from a gain value, e.g. for sweeps over alpha."""
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if alpha == 1.0:
            return cls(bits=INF_BITS, beta=0.0)
        return cls(bits=bits, beta=1.0 - alpha)


@dataclass(frozen=True)
class ScalarQuantizer:
    """Lloyd-Max quantizer designed for a zero-mean unit-variance Gaussian."""

    levels: np.ndarray
    thresholds: np.ndarray  # interior decision boundaries, len(levels) - 1
    distortion: float
    iterations: int = field(default=0, compare=False)

    @property
    def bits(self) -> int:
        return int(round(math.log2(len(self.levels))))

    def quantize(self, x, scale: float = 1.0) -> np.ndarray:
        """Map ``x`` to reconstruction levels of the codebook scaled by ``scale``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.thresholds * scale, x, side="right")
        return self.levels[idx] * scale

    def quantize_complex(self, z, scale: float = 1.0) -> np.ndarray:
        """Quantize real and imaginary parts independently."""
        z = np.asarray(z)
        return self.quantize(z.real, scale) + 1j * self.quantize(z.imag, scale)

    def normalized_mse(self, sigma: float = 1.0) -> float:
        """Exact MSE / sigma^2 for input N(0, sigma^2) with the sigma-scaled codebook."""
        _, _, err = _cell_stats(self.thresholds * sigma, self.levels * sigma, sigma)
        return float(err / sigma**2)


def _cell_moments(edges: np.ndarray, sigma: float = 1.0):
    """Probability, first and second partial moments of N(0, sigma^2) per cell."""
    u = edges / sigma
    prob = np.diff(ndtr(u))
    dens = np.exp(-0.5 * u * u) * _INV_SQRT_2PI
    first = -np.diff(dens) * sigma
    with np.errstate(invalid="ignore"):
        u_dens = np.where(np.isfinite(u), u * dens, 0.0)
    second = (prob - np.diff(u_dens)) * sigma**2
    return prob, first, second


def _cell_stats(thresholds, levels, sigma=1.0):
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
    prob, first, second = _cell_moments(edges, sigma)
    err = np.sum(second - 2.0 * levels * first + levels**2 * prob)
    return prob, first, err


def lloyd_max(bits: int, tol: float = 1e-14, max_iter: int = 200_000) -> ScalarQuantizer:
    """Lloyd-Max quantizer for a unit-variance Gaussian with ``2**bits`` levels.

    Cell probabilities and partial moments are evaluated in closed form through
    the Gaussian CDF, so each iteration is exact up to rounding.  Thresholds are
    initialised at the quantiles of N(0, 3), the asymptotically optimal point
    density, which keeps the iteration count manageable up to 12 bits.  The
    loop stops once successive distortions differ by less than ``tol``.
    """
    if isinstance(bits, bool) or int(bits) != bits or not 1 <= bits <= 12:
        raise ValueError(f"bits must be an integer in [1, 12], got {bits!r}")
    n_levels = 2 ** int(bits)
    thresholds = math.sqrt(3.0) * ndtri(np.arange(1, n_levels) / n_levels)
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))

    previous = math.inf
    for it in range(1, max_iter + 1):
        prob, first, _ = _cell_moments(edges)
        levels = first / prob
        # at the centroids, E[(x - y)^2] = E[x^2] - sum P_i y_i^2
        distortion = 1.0 - float(np.sum(first * levels))
        if abs(previous - distortion) < tol:
            break
        previous = distortion
        edges[1:-1] = 0.5 * (levels[:-1] + levels[1:])
    else:
        raise LloydMaxConvergenceError(
            f"Lloyd iteration for {bits} bits did not converge in {max_iter} steps"
        )

    # symmetrise away rounding drift; the fixed point is odd-symmetric
    levels = 0.5 * (levels - levels[::-1])
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return ScalarQuantizer(
        levels=levels, thresholds=thresholds, distortion=distortion, iterations=it
    )


_TABLE_RESOURCE = "lloyd_max_beta.txt"
_TABLE_HEADER = """\
# Normalized MSE (beta) of the Lloyd-Max quantizer for a unit-variance Gaussian.
# Generated by: quantsel constants --regenerate
# Closed-form Gaussian cell moments, N(0, 3)-quantile initialisation, tol = 1e-14.
# bits beta
"""


def load_beta_table() -> dict[int, float]:
    text = resources.files("quantsel.data").joinpath(_TABLE_RESOURCE).read_text()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, value = line.split()
        table[int(key)] = float(value)
    return table


def write_beta_table(path, max_bits: int = 12) -> dict[int, float]:
    table = {b: lloyd_max(b).distortion for b in range(1, max_bits + 1)}
    lines = [f"{b} {beta:.15g}" for b, beta in table.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_TABLE_HEADER + "\n".join(lines) + "\n")
    return table


@lru_cache(maxsize=None)
def _table() -> dict[int, float]:
    return load_beta_table()


def quantizer_spec(bits) -> QuantizerSpec:
    """AQNM constants for ``bits`` per real dimension (``math.inf`` allowed)."""
    if bits == INF_BITS:
        return QuantizerSpec(bits=INF_BITS, beta=0.0)
    if isinstance(bits, bool) or int(bits) != bits or bits < 1:
        raise ValueError(f"bits must be a positive integer or inf, got {bits!r}")
    bits = int(bits)
    if bits <= LLOYD_TABLE_MAX_BITS:
        return QuantizerSpec(bits=bits, beta=_table()[bits])
    return QuantizerSpec(bits=bits, beta=high_resolution_beta(bits))


def dl_quant_covariance(spec: QuantizerSpec, per_user_power) -> np.ndarray:
    """``alpha(1-alpha) diag(P + I)`` for the users' received signals."""
    p = np.asarray(per_user_power, dtype=float)
    if np.any(p < 0):
        raise ValueError("per-user powers must be nonnegative")
    return np.diag(spec.noise_factor * (p + 1.0))


def ul_quant_covariance(spec: QuantizerSpec, H_K, rho: float) -> np.ndarray:
    """``alpha(1-alpha) diag(rho H_K H_K^H + I)`` for the selected receive rows."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    H_K = np.atleast_2d(np.asarray(H_K))
    row_energy = np.sum(np.abs(H_K) ** 2, axis=1)
    return np.diag(spec.noise_factor * (rho * row_energy + 1.0))


def ul_ofdm_quant_covariance(spec: QuantizerSpec, taps, rho: float) -> np.ndarray:
    """Wideband version: row energies are summed over all channel taps.

    The result does not depend on the subcarrier index.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    taps = np.asarray(taps)
    if taps.ndim == 2:
        taps = taps[None]
    if taps.shape[0] < 1:
        raise ValueError("need at least one tap")
    row_energy = np.sum(np.abs(taps) ** 2, axis=(0, 2))
    return np.diag(spec.noise_factor * (rho * row_energy + 1.0))
