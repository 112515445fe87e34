"""Seeded Monte-Carlo sweeps over antenna selection algorithms.

Every trial draws user positions, large-scale gains and small-scale fading
from its own substream ``SeedSequence([seed, trial])``.  The channel is drawn
once at the largest dimensions of the sweep and sliced for smaller ones, and
all algorithms see that same draw.  Per-trial results are stored by trial
index before aggregation, so the output does not depend on the number of
worker processes.

Absolute rates depend on the large-scale model parameters; the sweeps are
meant to reproduce curve shapes and algorithm orderings.
"""
from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np

from .channel import LargeScaleParams, dl_channel, large_scale_gain, sample_channel, sample_positions
from .downlink import dbm_to_linear, dl_sum_rate, exhaustive_dl_select, nbs_select
from .quantization import INF_BITS, quantizer_spec
from .uplink import (McmcConfig, exhaustive_ul_ofdm_select, exhaustive_ul_select, fas_baseline,
                     fas_ofdm, nbs_ofdm, nbs_ul, qfas, qfas_ofdm, qmcmc_as, qmcmc_ofdm,
                     random_select, random_select_ofdm, ul_capacity, ul_ofdm_capacity)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "SCENARIOS",
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "load_config",
    "apply_overrides",
    "run_experiment",
    "emit_csv",
    "emit_plot",
    "read_csv",
]

CSV_HEADER = ("sweep", "algorithm", "mean_rate", "std_error", "trials")

# scenario -> (swept quantity, x-axis label)
SCENARIOS = {
    "dl_rate_vs_nt": ("n_select", "selected BS antennas N_t"),
    "dl_rate_vs_power": ("power", "total transmit power P (dBm)"),
    "ul_rate_vs_power": ("power", "transmit power rho (dBm)"),
    "ul_rate_vs_bits": ("bits", "ADC resolution b (bits)"),
    "ul_rate_vs_nbs": ("n_bs", "BS antennas N_BS"),
    "ul_rate_vs_nms": ("n_ms", "users N_MS"),
    "ul_ofdm_rate_vs_power": ("power", "transmit power rho (dBm)"),
    "ul_ofdm_rate_vs_nr": ("n_select", "selected BS antennas N_r"),
}
DL_ALGORITHMS = ("exhaustive", "nbs", "random", "full")
UL_ALGORITHMS = ("qmcmc", "qfas", "fas", "nbs", "random", "exhaustive", "full")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _as_bits(v, name):
    if v == INF_BITS or v == "inf":
        return INF_BITS
    if not _is_int(v) or v < 1:
        raise ConfigError(name, f"expected a positive integer or inf, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.

    Power scenarios sweep ``power_grid``; every other scenario sweeps ``sweep``
    (values of the quantity named in ``SCENARIOS``) at ``power_grid[0]``.  For
    ``ul_rate_vs_nbs`` and ``ul_rate_vs_nms`` the swept value replaces
    ``n_bs`` / ``n_ms``.  Powers are in dBm against unit noise power.
    """

    scenario: str
    n_bs: int = 32
    n_ms: int = 8
    n_select: int = 8
    bits: int | float = 3
    n_sc: int = 64
    n_taps: int = 1
    power_grid: tuple[float, ...] = (20.0,)
    sweep: tuple = ()
    trials: int = 500
    seed: int = 0
    algorithms: tuple[str, ...] = ("qfas", "fas", "nbs", "random")
    large_scale: LargeScaleParams = field(default_factory=LargeScaleParams)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}; "
                              f"choose from {', '.join(SCENARIOS)}")
        for name in ("n_bs", "n_ms", "n_select", "n_sc", "n_taps", "trials"):
            v = getattr(self, name)
            if not _is_int(v) or v < 1:
                raise ConfigError(name, f"expected a positive integer, got {v!r}")
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigError("seed", f"expected a nonnegative integer, got {self.seed!r}")
        object.__setattr__(self, "bits", _as_bits(self.bits, "bits"))

        grid = tuple(self.power_grid)
        if not grid:
            raise ConfigError("power_grid", "must not be empty")
        if not all(isinstance(p, (int, float)) and not isinstance(p, bool) and math.isfinite(p)
                   for p in grid):
            raise ConfigError("power_grid", "expected finite numbers (dBm)")
        object.__setattr__(self, "power_grid", tuple(float(p) for p in grid))

        algs = tuple(self.algorithms)
        allowed = DL_ALGORITHMS if self.is_downlink else UL_ALGORITHMS
        if not algs:
            raise ConfigError("algorithms", "must not be empty")
        bad = [a for a in algs if a not in allowed]
        if bad:
            raise ConfigError("algorithms", f"{bad} not available for {self.scenario}; "
                              f"choose from {', '.join(allowed)}")
        if len(set(algs)) != len(algs):
            raise ConfigError("algorithms", "duplicate entries")
        object.__setattr__(self, "algorithms", algs)

        self._check_sweep()
        self._check_dimensions()

    @property
    def is_downlink(self) -> bool:
        return self.scenario.startswith("dl_")

    @property
    def is_ofdm(self) -> bool:
        return "ofdm" in self.scenario

    @property
    def swept(self) -> str:
        return SCENARIOS[self.scenario][0]

    @property
    def sweep_values(self) -> tuple:
        return self.power_grid if self.swept == "power" else self.sweep

    def _check_sweep(self):
        if self.swept == "power":
            if self.sweep:
                raise ConfigError("sweep", f"{self.scenario} sweeps power_grid; leave sweep empty")
            return
        values = tuple(self.sweep)
        if not values:
            raise ConfigError("sweep", f"{self.scenario} needs a non-empty list of "
                              f"{self.swept} values")
        if self.swept == "bits":
            values = tuple(_as_bits(v, "sweep") for v in values)
        elif not all(_is_int(v) and v >= 1 for v in values):
            raise ConfigError("sweep", f"{self.swept} values must be positive integers")
        if len(set(values)) != len(values):
            raise ConfigError("sweep", "duplicate sweep values")
        object.__setattr__(self, "sweep", tuple(values))

    def point(self, value) -> dict:
        """Dimensions and quantizer in effect at one sweep point."""
        dims = {"n_bs": self.n_bs, "n_ms": self.n_ms, "n_select": self.n_select,
                "bits": self.bits, "power": self.power_grid[0]}
        dims[self.swept] = value
        return dims

    def _check_dimensions(self):
        if not self.is_ofdm and self.n_taps != 1:
            raise ConfigError("n_taps", f"{self.scenario} is narrowband; n_taps must be 1")
        if self.is_ofdm and self.n_taps > self.n_sc:
            raise ConfigError("n_taps", "cannot exceed n_sc")
        for v in self.sweep_values:
            d = self.point(v)
            if d["n_select"] > d["n_bs"]:
                raise ConfigError("n_select", f"cannot select {d['n_select']} of {d['n_bs']} antennas")
            if self.is_downlink and d["n_select"] < d["n_ms"]:
                raise ConfigError("n_select", "ZF precoding needs n_select >= n_ms")
            if "exhaustive" in self.algorithms and math.comb(d["n_bs"], d["n_select"]) > 10**6:
                raise ConfigError("algorithms", f"exhaustive search over C({d['n_bs']}, "
                                  f"{d['n_select']}) subsets exceeds the 1e6 budget")

    @property
    def max_dims(self) -> tuple[int, int]:
        pts = [self.point(v) for v in self.sweep_values]
        return max(p["n_bs"] for p in pts), max(p["n_ms"] for p in pts)


_NESTED = {"large_scale": LargeScaleParams, "mcmc": McmcConfig}


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    if "scenario" not in data:
        raise ConfigError("scenario", "required")
    for key, cls in _NESTED.items():
        if key in data:
            sub = data[key]
            if not isinstance(sub, dict):
                raise ConfigError(key, "expected a table")
            names = {f.name for f in fields(cls)}
            for k in sub:
                if k not in names:
                    raise ConfigError(f"{key}.{k}", "unknown configuration key")
            try:
                data[key] = cls(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from None
    for key in ("power_grid", "sweep", "algorithms"):
        if key in data:
            if not isinstance(data[key], (list, tuple)):
                raise ConfigError(key, "expected a list")
            data[key] = tuple(data[key])
    try:
        return ExperimentConfig(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from None


def _parse_value(text: str):
    """TOML value syntax (``20``, ``[0, 10]``, ``"qfas"``); bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys reach into sub-tables."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for item in overrides or ():
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(item, "override must look like key=value")
        target = data
        *parents, leaf = key.split(".")
        for p in parents:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(key, f"{p} is not a table")
        target[leaf] = _parse_value(text.strip())
    return data


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    return config_from_dict(apply_overrides(data, overrides))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    for key in ("power_grid", "sweep", "algorithms"):
        out[key] = list(out[key])
    return out


# -- trials ------------------------------------------------------------------

def _trial_streams(seed: int, trial: int):
    positions, shadowing, fading, selection = np.random.SeedSequence([seed, trial]).spawn(4)
    return positions, shadowing, fading, selection


def draw_channel(cfg: ExperimentConfig, trial: int):
    """Channel of one trial at the largest dimensions of the sweep."""
    n_bs, n_ms = cfg.max_dims
    pos_ss, shadow_ss, fading_ss, _ = _trial_streams(cfg.seed, trial)
    dist = sample_positions(n_ms, cfg.large_scale, seed=pos_ss)
    gains = np.atleast_1d(large_scale_gain(dist, cfg.large_scale, seed=shadow_ss))
    n_taps = cfg.n_taps if cfg.is_ofdm else 1
    return sample_channel(n_bs, n_ms, n_taps, gains, seed=fading_ss)


def _dl_rates(cfg, ch, pt, rng_seed):
    H = dl_channel(ch.taps)[0]  # N_MS x N_BS
    P = float(dbm_to_linear(pt["power"]))
    spec = quantizer_spec(pt["bits"])
    n_t = pt["n_select"]
    out = []
    for alg in cfg.algorithms:
        if alg == "exhaustive":
            out.append(exhaustive_dl_select(H, n_t, P, spec).objective)
            continue
        if alg == "nbs":
            idx = np.asarray(nbs_select(H, n_t))
        elif alg == "random":
            idx = np.sort(np.random.default_rng(rng_seed).choice(H.shape[1], n_t, replace=False))
        else:
            idx = np.arange(H.shape[1])
        out.append(dl_sum_rate(H[:, idx], P, spec).sum_rate)
    return out


def _ul_rates(cfg, ch, pt, rng_seed):
    H = ch.narrowband
    rho = float(dbm_to_linear(pt["power"]))
    spec = quantizer_spec(pt["bits"])
    n_r = pt["n_select"]
    out = []
    for alg in cfg.algorithms:
        if alg == "qmcmc":
            r = qmcmc_as(H, rho, spec, n_r, cfg.mcmc, seed=rng_seed).objective
        elif alg == "qfas":
            r = qfas(H, rho, spec, n_r).objective
        elif alg == "fas":
            r = fas_baseline(H, rho, spec, n_r).objective
        elif alg == "nbs":
            r = nbs_ul(H, rho, spec, n_r).objective
        elif alg == "random":
            r = random_select(H, rho, spec, n_r, seed=rng_seed).objective
        elif alg == "exhaustive":
            r = exhaustive_ul_select(H, rho, spec, n_r).objective
        else:
            r = ul_capacity(H, rho, spec)
        out.append(r)
    return out


def _ul_ofdm_rates(cfg, ch, pt, rng_seed):
    """Sum capacity averaged over subcarriers."""
    taps = ch.taps
    rho = float(dbm_to_linear(pt["power"]))
    spec = quantizer_spec(pt["bits"])
    n_r, n_sc = pt["n_select"], cfg.n_sc
    out = []
    for alg in cfg.algorithms:
        if alg == "qmcmc":
            r = qmcmc_ofdm(taps, rho, spec, n_r, n_sc, cfg.mcmc, seed=rng_seed).objective
        elif alg == "qfas":
            r = qfas_ofdm(taps, rho, spec, n_r, n_sc).objective
        elif alg == "fas":
            r = fas_ofdm(taps, rho, spec, n_r, n_sc).objective
        elif alg == "nbs":
            r = nbs_ofdm(taps, rho, spec, n_r, n_sc).objective
        elif alg == "random":
            r = random_select_ofdm(taps, rho, spec, n_r, n_sc, seed=rng_seed).objective
        elif alg == "exhaustive":
            r = exhaustive_ul_ofdm_select(taps, rho, spec, n_r, n_sc).objective
        else:
            r = ul_ofdm_capacity(taps, np.arange(taps.shape[1]), rho, spec, n_sc)[1]
        out.append(r / n_sc)
    return out


def run_trial(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    """Rates of one trial, shape ``(len(sweep_values), len(algorithms))``."""
    full = draw_channel(cfg, trial)
    selection_ss = _trial_streams(cfg.seed, trial)[3]
    if cfg.is_downlink:
        evaluate = _dl_rates
    elif cfg.is_ofdm:
        evaluate = _ul_ofdm_rates
    else:
        evaluate = _ul_rates
    # randomised algorithms get one stream per sweep point
    point_streams = selection_ss.spawn(len(cfg.sweep_values))
    rows = []
    for value, stream in zip(cfg.sweep_values, point_streams):
        pt = cfg.point(value)
        ch = full.restrict(pt["n_bs"], pt["n_ms"])
        rows.append(evaluate(cfg, ch, pt, stream))
    return np.asarray(rows, dtype=float)


# -- results -----------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    sweep: float
    algorithm: str
    mean_rate: float
    std_error: float
    trials: int


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]
    scenario: str | None = None

    def __post_init__(self):
        keys = [(r.sweep, r.algorithm) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("every (sweep, algorithm) pair must appear once")

    def __len__(self):
        return len(self.rows)

    @property
    def algorithms(self) -> list[str]:
        return list(dict.fromkeys(r.algorithm for r in self.rows))

    def series(self, algorithm: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(sweep, mean_rate, std_error)`` arrays of one algorithm."""
        rows = [r for r in self.rows if r.algorithm == algorithm]
        return (np.array([r.sweep for r in rows]), np.array([r.mean_rate for r in rows]),
                np.array([r.std_error for r in rows]))

    def lookup(self, sweep, algorithm) -> ResultRow:
        for r in self.rows:
            if r.sweep == sweep and r.algorithm == algorithm:
                return r
        raise KeyError((sweep, algorithm))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([repr(float(r.sweep)), r.algorithm, repr(float(r.mean_rate)),
                        repr(float(r.std_error)), r.trials])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, scenario: str | None = None) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = tuple(ResultRow(float(s), a, float(m), float(e), int(n)) for s, a, m, e, n in reader)
        return cls(rows, scenario)


def aggregate(cfg: ExperimentConfig, rates: np.ndarray) -> ResultTable:
    """``rates`` is ``(trials, sweep points, algorithms)`` in trial order."""
    n = rates.shape[0]
    mean = rates.mean(axis=0)
    if n > 1:
        se = rates.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.full_like(mean, np.nan)
    rows = []
    for k, value in enumerate(cfg.sweep_values):
        for a, alg in enumerate(cfg.algorithms):
            rows.append(ResultRow(float(value), alg, float(mean[k, a]), float(se[k, a]), n))
    return ResultTable(tuple(rows), cfg.scenario)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Run all trials (in ``workers`` processes) and aggregate mean rates."""
    if workers < 1:
        raise ValueError("workers must be positive")
    task = partial(run_trial, cfg)
    if workers == 1:
        results = [task(t) for t in range(cfg.trials)]
    else:
        chunk = max(1, cfg.trials // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(cfg.trials), chunksize=chunk))
    return aggregate(cfg, np.stack(results))


# -- output -------------------------------------------------------------------

def emit_csv(table: ResultTable, path) -> Path:
    if not table.rows:
        raise ValueError("empty result table")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table.to_csv())
    return path


def read_csv(path, scenario: str | None = None) -> ResultTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return ResultTable.from_csv(fh.read(), scenario)


def _axis_labels(table: ResultTable) -> tuple[str, str]:
    x = SCENARIOS[table.scenario][1] if table.scenario in SCENARIOS else "sweep"
    y = "sum rate (bps/Hz)"
    if table.scenario and "ofdm" in table.scenario:
        y = "sum rate per subcarrier (bps/Hz)"
    return x, y


def _finite_x(x):
    # inf bits is drawn one step to the right of the last finite value
    x = np.array(x, dtype=float)
    if np.any(np.isinf(x)):
        finite = x[np.isfinite(x)]
        x[np.isinf(x)] = (finite.max() + 1.0) if finite.size else 0.0
    return x


def _plot_matplotlib(table, path, xlabel, ylabel):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for alg in table.algorithms:
        x, y, se = table.series(alg)
        ax.errorbar(_finite_x(x), y, yerr=np.nan_to_num(se), marker="o", ms=3, capsize=2,
                    label=alg)
    x_all = np.array(sorted({r.sweep for r in table.rows}))
    if np.any(np.isinf(x_all)):
        ax.set_xticks(_finite_x(x_all))
        ax.set_xticklabels([("inf" if np.isinf(v) else f"{v:g}") for v in x_all])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def _plot_gnuplot(table, path, xlabel, ylabel):
    dat, gp = path.with_suffix(".dat"), path.with_suffix(".gp")
    blocks = []
    for alg in table.algorithms:
        x, y, se = table.series(alg)
        lines = [f"# {alg}"] + [f"{a!r} {b!r} {c!r}" for a, b, c in
                                zip(_finite_x(x).tolist(), y.tolist(), se.tolist())]
        blocks.append("\n".join(lines))
    dat.write_text("\n\n\n".join(blocks) + "\n", encoding="utf-8")
    plots = ", ".join(f"'{dat.name}' index {i} using 1:2:3 with yerrorlines title '{alg}'"
                      for i, alg in enumerate(table.algorithms))
    gp.write_text(
        f"set terminal pngcairo size 720,480\nset output '{path.name}'\n"
        f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset grid\nset key best\n"
        f"plot {plots}\n",
        encoding="utf-8",
    )
    return [dat, gp]


def emit_plot(table: ResultTable, path, backend: str = "auto") -> list[Path]:
    """One line per algorithm.

    ``backend="auto"`` renders a PNG with matplotlib when it is installed and
    otherwise writes a gnuplot data + script pair next to ``path``.  Returns the
    files written.
    """
    if not table.rows:
        raise ValueError("empty result table")
    path = Path(path)
    xlabel, ylabel = _axis_labels(table)
    if backend not in ("auto", "matplotlib", "gnuplot"):
        raise ValueError(f"unknown plot backend {backend!r}")
    if backend in ("auto", "matplotlib"):
        try:
            return _plot_matplotlib(table, path, xlabel, ylabel)
        except ImportError:
            if backend == "matplotlib":
                raise
    return _plot_gnuplot(table, path, xlabel, ylabel)
