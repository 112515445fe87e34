"""Multiuser narrowband / L-tap wideband channels and their frequency response.

Channels are stored in uplink orientation: ``taps[l]`` is the ``n_bs x n_ms``
matrix of tap ``l``.  The downlink channel is the plain transpose
(reciprocity convention).  Large-scale gains are noise-normalised, so every
rate formula downstream uses unit-variance noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LargeScaleParams",
    "ChannelSet",
    "AntennaSubset",
    "SelectionOutcome",
    "as_indices",
    "sample_positions",
    "pathloss_db",
    "thermal_noise_dbw",
    "large_scale_gain",
    "sample_channel",
    "ul_submatrix",
    "dl_channel",
    "freq_channel",
    "freq_channels",
    "dft_matrix",
    "block_circulant",
    "save_channel",
    "load_channel",
]

SPEED_OF_LIGHT = 299_792_458.0
REFERENCE_DISTANCE_M = 100.0


@dataclass(frozen=True)
class LargeScaleParams:
    carrier_hz: float = 2.4e9
    bandwidth_hz: float = 1e7
    cell_radius_m: float = 1000.0
    min_distance_m: float = 100.0
    shadowing_std_db: float = 8.7
    noise_figure_db: float = 12.0
    pathloss_exponent: float = 3.5

    def __post_init__(self):
        for name in ("carrier_hz", "bandwidth_hz", "cell_radius_m", "min_distance_m",
                     "pathloss_exponent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be nonnegative")
        if not self.min_distance_m < self.cell_radius_m:
            raise ValueError("min_distance_m must be smaller than cell_radius_m")


@dataclass(frozen=True)
class AntennaSubset:
    """Strictly increasing antenna indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("an antenna subset needs at least one index")
        if any(i < 0 for i in idx):
            raise ValueError("antenna indices must be nonnegative")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError("antenna indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices) -> "AntennaSubset":
        """Sort and validate an arbitrary iterable of distinct indices."""
        idx = sorted(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate antenna index")
        return cls(tuple(idx))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.indices, dtype=dtype or np.intp)


@dataclass(frozen=True)
class SelectionOutcome:
    """Result of an antenna selection run.

    ``order`` keeps the greedy selection order; ``trace`` holds per-stage (greedy)
    or per-iteration (MCMC) objective values when the algorithm produces them.
    """

    subset: AntennaSubset
    objective: float
    algorithm: str
    trace: tuple[float, ...] | None = None
    order: tuple[int, ...] | None = None


def as_indices(subset, n_bs: int | None = None) -> np.ndarray:
    idx = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset,
                     dtype=np.intp).reshape(-1)
    if n_bs is not None and idx.size and (idx.min() < 0 or idx.max() >= n_bs):
        raise IndexError(f"antenna index out of range for {n_bs} antennas: {idx.tolist()}")
    return idx


@dataclass(frozen=True)
class ChannelSet:
    """``taps`` has shape ``(n_taps, n_bs, n_ms)``; gains are linear per user."""

    taps: np.ndarray
    large_scale_gain: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex)
        if taps.ndim == 2:
            taps = taps[None]
        if taps.ndim != 3:
            raise ValueError("taps must have shape (n_taps, n_bs, n_ms)")
        gains = np.asarray(self.large_scale_gain, dtype=float).reshape(-1)
        if gains.shape != (taps.shape[2],):
            raise ValueError("need one large-scale gain per user")
        taps.setflags(write=False)
        gains.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "large_scale_gain", gains)

    @property
    def n_taps(self) -> int:
        return self.taps.shape[0]

    @property
    def n_bs(self) -> int:
        return self.taps.shape[1]

    @property
    def n_ms(self) -> int:
        return self.taps.shape[2]

    @property
    def narrowband(self) -> np.ndarray:
        """The single tap of a frequency-flat channel."""
        if self.n_taps != 1:
            raise ValueError("channel has more than one tap")
        return self.taps[0]

    def restrict(self, n_bs: int | None = None, n_ms: int | None = None) -> "ChannelSet":
        """Leading ``n_bs`` antennas and ``n_ms`` users of this draw."""
        n_bs = self.n_bs if n_bs is None else n_bs
        n_ms = self.n_ms if n_ms is None else n_ms
        return ChannelSet(self.taps[:, :n_bs, :n_ms], self.large_scale_gain[:n_ms], self.seed)


def sample_positions(n_ms: int, params: LargeScaleParams, seed=None) -> np.ndarray:
    """User distances drawn uniformly over the annulus area."""
    if n_ms < 1:
        raise ValueError("n_ms must be positive")
    rng = np.random.default_rng(seed)
    r2 = rng.uniform(params.min_distance_m**2, params.cell_radius_m**2, size=n_ms)
    return np.sqrt(r2)


def thermal_noise_dbw(params: LargeScaleParams) -> float:
    """kT0 B in dBW (-204 dBW/Hz at 290 K)."""
    return -204.0 + 10.0 * math.log10(params.bandwidth_hz)


def pathloss_db(distance_m, params: LargeScaleParams) -> np.ndarray:
    """Log-distance pathloss anchored at free space for the reference distance."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d < params.min_distance_m):
        raise ValueError("distance below the minimum BS-MS distance")
    d0 = REFERENCE_DISTANCE_M
    pl_d0 = 20.0 * math.log10(4.0 * math.pi * d0 * params.carrier_hz / SPEED_OF_LIGHT)
    return pl_d0 + 10.0 * params.pathloss_exponent * np.log10(d / d0)


def large_scale_gain(distance_m, params: LargeScaleParams, seed=None, *, db: bool = False):
    """Noise-normalised linear gain (or dB with ``db=True``) including shadowing.

    ``gain_db = -(PL(d) + X) - NF - N_thermal`` where ``X ~ N(0, std^2)`` dB and
    ``N_thermal`` is the thermal noise over the bandwidth in dBW, so a transmit
    power in watts times the gain is the receive SNR.
    """
    rng = np.random.default_rng(seed)
    d = np.asarray(distance_m, dtype=float)
    shadow = rng.normal(0.0, params.shadowing_std_db, size=d.shape)
    gain_db = -(pathloss_db(d, params) + shadow) - params.noise_figure_db - thermal_noise_dbw(params)
    out = gain_db if db else 10.0 ** (gain_db / 10.0)
    return out if out.ndim else float(out)


def sample_channel(n_bs: int, n_ms: int, n_taps: int, gains, seed=None) -> ChannelSet:
    """Rayleigh taps with a uniform power delay profile summing to ``gains``."""
    gains = np.asarray(gains, dtype=float).reshape(-1)
    if gains.shape != (n_ms,):
        raise ValueError("gains must have length n_ms")
    if min(n_bs, n_ms, n_taps) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    shape = (n_taps, n_bs, n_ms)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    h *= np.sqrt(gains / n_taps)
    return ChannelSet(h, gains, seed if isinstance(seed, (int, np.integer)) else None)


def _taps(ch) -> np.ndarray:
    taps = ch.taps if isinstance(ch, ChannelSet) else np.asarray(ch)
    return taps[None] if taps.ndim == 2 else taps


def ul_submatrix(ch, subset) -> np.ndarray:
    """Rows of every tap picked out by ``subset`` (in subset order)."""
    taps = _taps(ch)
    idx = as_indices(subset, taps.shape[1])
    return taps[:, idx, :]


def dl_channel(taps) -> np.ndarray:
    """Swap the antenna/user axes of every tap (uplink <-> downlink)."""
    return np.swapaxes(_taps(taps), -1, -2)


def freq_channel(taps, n: int, n_sc: int) -> np.ndarray:
    """``G_n = sum_l H_l exp(-j 2 pi (n-1) l / n_sc)`` for 1-based subcarrier ``n``."""
    taps = _taps(taps)
    if not 1 <= n <= n_sc:
        raise ValueError(f"subcarrier index must lie in [1, {n_sc}]")
    if taps.shape[0] > n_sc:
        raise ValueError("more taps than subcarriers")
    ell = np.arange(taps.shape[0])
    phase = np.exp(-2j * np.pi * (n - 1) * ell / n_sc)
    return np.tensordot(phase, taps, axes=1)


def freq_channels(taps, n_sc: int) -> np.ndarray:
    """All subcarriers at once, shape ``(n_sc, rows, cols)``."""
    taps = _taps(taps)
    if taps.shape[0] > n_sc:
        raise ValueError("more taps than subcarriers")
    return np.fft.fft(taps, n=n_sc, axis=0)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``W[k, m] = exp(-j 2 pi k m / n) / sqrt(n)``."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def block_circulant(taps, n_sc: int) -> np.ndarray:
    """Time-domain channel over one OFDM symbol after CP removal.

    Block ``(i, j)`` is ``H_{(i - j) mod n_sc}`` (zero beyond the last tap), i.e.
    the first block row reads ``H_0, 0, ..., 0, H_{L-1}, ..., H_1``.
    """
    taps = _taps(taps)
    n_taps, rows, cols = taps.shape
    if n_taps > n_sc:
        raise ValueError("more taps than subcarriers")
    out = np.zeros((n_sc * rows, n_sc * cols), dtype=complex)
    for i in range(n_sc):
        for ell in range(n_taps):
            j = (i - ell) % n_sc
            out[i * rows:(i + 1) * rows, j * cols:(j + 1) * cols] = taps[ell]
    return out


_MAGIC = "# quantsel-channel v1"


def save_channel(ch: ChannelSet, path) -> None:
    """Text format: a ``key value...`` header, then one line per (tap, antenna) row
    holding ``re im`` pairs for each user.  Floats are written with ``repr`` so a
    reload is exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"dims {ch.n_bs} {ch.n_ms} {ch.n_taps}\n")
        fh.write(f"seed {'none' if ch.seed is None else int(ch.seed)}\n")
        fh.write("gains " + " ".join(repr(float(g)) for g in ch.large_scale_gain) + "\n")
        fh.write("data\n")
        for tap in ch.taps:
            for row in tap:
                fh.write(" ".join(f"{z.real!r} {z.imag!r}" for z in row.tolist()) + "\n")


def load_channel(path) -> ChannelSet:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a quantsel channel file")
    header = {}
    pos = 1
    while lines[pos] != "data":
        key, *vals = lines[pos].split()
        header[key] = vals
        pos += 1
    n_bs, n_ms, n_taps = (int(v) for v in header["dims"])
    seed = None if header["seed"][0] == "none" else int(header["seed"][0])
    gains = np.array([float(v) for v in header["gains"]])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1:pos + 1 + n_taps * n_bs]])
    values = rows[:, 0::2] + 1j * rows[:, 1::2]
    return ChannelSet(values.reshape(n_taps, n_bs, n_ms), gains, seed)
