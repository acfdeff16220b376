"""Synthetic trial generator, closed-form truths and Monte Carlo calibration.

Outcome hazard ``a_w t`` (so ``T(w) ~ Weibull(2, sqrt(2 / a_w))``), constant
intercurrent hazard ``c_w``, ``T`` and ``R`` independent, censoring
``min(Exp(censor_rate), t_star)`` independent of both.

Random numbers come from a counter-based generator: the SplitMix64 finaliser
applied to ``(seed, arm, subject index, draw index)``. Each subject owns a
fixed stream, so changing ``n_per_arm`` never changes earlier subjects, and
replication ``r`` of a calibration run always sees the same data regardless
of how replications are scheduled across workers.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .data import Dataset
from .errors import EstimandError, NoEvents, UnsupportedStrategy
from .estimands import ALL_STRATEGIES, HazardTable, StrategyKind, estimate
from .logrank import LogRankTest, logrank
from .processes import build_processes

__all__ = [
    "SimConfig",
    "simulate",
    "oracle_mu",
    "oracle_tau",
    "default_checkpoints",
    "CalibrationReport",
    "run_calibration",
    "uniforms",
    "worker_count",
]

log = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DRAWS = 3  # outcome, intercurrent, censoring


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


def random_bits(seed: int, counters) -> np.ndarray:
    """64-bit outputs for integer ``counters`` under ``seed``."""
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        c = np.asarray(counters, dtype=np.uint64)
        return _mix(key + _mix(c * _GOLDEN + _GOLDEN))


def uniforms(seed: int, counters) -> np.ndarray:
    """Uniform(0, 1] variates for integer ``counters`` under ``seed``."""
    bits = random_bits(seed, counters)
    # 53 random bits, shifted off zero
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def _subject_counters(arm: int, n: int, draw: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.uint64)
    base = (np.uint64(arm) << np.uint64(40)) | idx
    return base * np.uint64(_DRAWS) + np.uint64(draw)


@dataclass(frozen=True)
class SimConfig:
    a1: float = 0.4
    a0: float = 0.8
    c1: float = 0.3
    c0: float = 0.15
    censor_rate: float = 0.1
    n_per_arm: int = 1000
    t_star: float = 2.0
    seed: int = 0
    censor_rate_arm: tuple[float, float] | None = None  # (control, active) overrides

    def __post_init__(self):
        for name in ("a1", "a0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("c1", "c0", "censor_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be nonnegative and finite, got {v!r}")
        if self.censor_rate_arm is not None:
            if len(self.censor_rate_arm) != 2 or not all(
                math.isfinite(v) and v >= 0 for v in self.censor_rate_arm
            ):
                raise ValueError("censor_rate_arm must be two nonnegative finite rates")
        if int(self.n_per_arm) != self.n_per_arm or self.n_per_arm < 1:
            raise ValueError("n_per_arm must be a positive integer")
        if not (math.isfinite(self.t_star) and self.t_star > 0):
            raise ValueError("t_star must be positive and finite")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def a(self, w: int) -> float:
        return self.a1 if w == 1 else self.a0

    def c(self, w: int) -> float:
        return self.c1 if w == 1 else self.c0

    def censoring(self, w: int) -> float:
        if self.censor_rate_arm is not None:
            return self.censor_rate_arm[w]
        return self.censor_rate

    def with_seed(self, seed: int) -> "SimConfig":
        return SimConfig(**{**asdict(self), "seed": int(seed)})


def _arm_draws(cfg: SimConfig, w: int):
    n = cfg.n_per_arm
    e = [-np.log(uniforms(cfg.seed, _subject_counters(w, n, k))) for k in range(_DRAWS)]
    T = np.sqrt(2.0 * e[0] / cfg.a(w))
    R = e[1] / cfg.c(w) if cfg.c(w) > 0 else np.full(n, np.inf)
    rate = cfg.censoring(w)
    C = np.minimum(e[2] / rate, cfg.t_star) if rate > 0 else np.full(n, cfg.t_star)
    return T, R, C


def simulate(cfg: SimConfig) -> Dataset:
    """Full-form synthetic trial: control arm rows first, then active."""
    cols = {k: [] for k in ("arm", "t_obs", "delta_t", "r_obs", "delta_r", "ids")}
    for w in (0, 1):
        T, R, C = _arm_draws(cfg, w)
        cols["arm"].append(np.full(T.size, w))
        cols["t_obs"].append(np.minimum(T, C))
        cols["delta_t"].append((T <= C).astype(np.int8))
        cols["r_obs"].append(np.minimum(R, C))
        cols["delta_r"].append((R <= C).astype(np.int8))
        cols["ids"].extend(f"{w}-{i + 1}" for i in range(T.size))
    ids = cols.pop("ids")
    arrays = {k: np.concatenate(v) for k, v in cols.items()}
    return Dataset.from_arrays(arrays.pop("arm"), t_star=cfg.t_star, ids=ids, **arrays)


# ----------------------------------------------------------------- closed forms


def _cause1_incidence(a: float, c: float, t):
    """``int_0^t exp(-a s^2/2 - c s) a s ds`` in closed form."""
    t = np.asarray(t, dtype=float)
    base = 1.0 - np.exp(-a * t * t / 2.0 - c * t)
    if c == 0:
        return base
    lo = c / math.sqrt(a)
    hi = math.sqrt(a) * (t + c / a)
    # Phi(hi) - Phi(lo) through upper tails to keep precision
    diff = ndtr(-lo) - ndtr(-hi)
    return base - math.exp(c * c / (2.0 * a)) * math.sqrt(2.0 * math.pi * c * c / a) * diff


def _intercurrent_incidence(a: float, c: float, t):
    """``int_0^t exp(-a s^2/2 - c s) c ds``."""
    if c == 0:
        return np.zeros_like(np.asarray(t, dtype=float))
    lo = c / math.sqrt(a)
    hi = math.sqrt(a) * (np.asarray(t, dtype=float) + c / a)
    return math.exp(c * c / (2.0 * a)) * math.sqrt(2.0 * math.pi * c * c / a) * (
        ndtr(-lo) - ndtr(-hi)
    )


def oracle_mu(strategy, w: int, t, cfg: SimConfig):
    """True ``mu_w(t)`` for the simulated design under ``strategy``."""
    kind = StrategyKind.parse(strategy)
    a, c = cfg.a(w), cfg.c(w)
    t_arr = np.asarray(t, dtype=float)
    if kind is StrategyKind.TREATMENT_POLICY or kind is StrategyKind.HYPOTHETICAL_II:
        out = 1.0 - np.exp(-a * t_arr**2 / 2.0)
    elif kind is StrategyKind.COMPOSITE_VARIABLE:
        out = 1.0 - np.exp(-a * t_arr**2 / 2.0 - c * t_arr)
    elif kind is StrategyKind.WHILE_ON_TREATMENT:
        out = _cause1_incidence(a, c, t_arr)
    elif kind is StrategyKind.HYPOTHETICAL_I:
        out = _cause1_incidence(a, cfg.c0, t_arr)
    elif kind is StrategyKind.PRINCIPAL_STRATUM:
        out = _cause1_incidence(a, c, t_arr) / (1.0 - _intercurrent_incidence(a, c, cfg.t_star))
    else:  # pragma: no cover
        raise UnsupportedStrategy(str(strategy))
    return out if out.ndim else float(out)


def oracle_tau(strategy, t, cfg: SimConfig):
    return oracle_mu(strategy, 1, t, cfg) - oracle_mu(strategy, 0, t, cfg)


def default_checkpoints(cfg: SimConfig) -> np.ndarray:
    """Quartiles of the composite first-event time, restricted to ``[0, t_star]``.

    The composite incidence averaged over arms is scaled by its value at
    ``t_star`` so the quartiles always fall inside the window.
    """

    def pooled(t):
        return 0.5 * (oracle_mu("cv", 0, t, cfg) + oracle_mu("cv", 1, t, cfg))

    top = pooled(cfg.t_star)
    return np.array(
        [brentq(lambda t: pooled(t) - q * top, 0.0, cfg.t_star, xtol=1e-12) for q in (0.25, 0.5, 0.75)]
    )


# ------------------------------------------------------------------ calibration


def worker_count(default: int | None = None) -> int:
    """Parallelism cap from ``ESTIMAND_THREADS``, else the CPU count."""
    env = os.environ.get("ESTIMAND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer ESTIMAND_THREADS=%r", env)
    return default or os.cpu_count() or 1


_SEED_DOMAIN = 1 << 62  # keeps replication counters apart from subject counters


def replication_seed(master: int, rep: int) -> int:
    return int(random_bits(master, [_SEED_DOMAIN + rep])[0])


def _null_holds(test: LogRankTest, cfg: SimConfig) -> bool:
    if test is LogRankTest.CV:
        return cfg.a1 == cfg.a0 and cfg.c1 == cfg.c0
    return cfg.a1 == cfg.a0


def _one_replication(args):
    cfg, rep, checkpoints, strategies, tests, level, transform = args
    ds = simulate(cfg.with_seed(replication_seed(cfg.seed, rep)))
    procs = build_processes(ds)
    tab = HazardTable.from_processes(procs)
    k = len(checkpoints)
    # columns: mu, se, lo, hi per (strategy, arm-or-effect, checkpoint)
    est = np.full((len(strategies), 3, k, 4), np.nan)
    for i, s in enumerate(strategies):
        try:
            res = estimate(tab, s, checkpoints, level=level, transform=transform)
        except EstimandError:
            continue
        for j, r in enumerate((res.control, res.active)):
            est[i, j] = np.column_stack([r.mu, r.se, r.ci_lo, r.ci_hi])
        e = res.effect
        est[i, 2] = np.column_stack([e.tau, e.se, e.ci_lo, e.ci_hi])
    pvals = np.full(len(tests), np.nan)
    for i, test in enumerate(tests):
        try:
            pvals[i] = logrank(procs, test).p_two_sided
        except NoEvents:
            pass
    return est, pvals


@dataclass
class CalibrationReport:
    config: dict
    replications: int
    level: float
    alpha: float
    checkpoints: list[float]
    rows: list[dict] = field(default_factory=list)
    tests: dict[str, dict] = field(default_factory=dict)
    note: str = "parameter values are artifact defaults, not taken from a published study"

    def row(self, strategy, arm, checkpoint_index) -> dict:
        strategy = StrategyKind.parse(strategy).value
        for r in self.rows:
            if r["strategy"] == strategy and r["arm"] == arm and r["checkpoint"] == checkpoint_index:
                return r
        raise KeyError((strategy, arm, checkpoint_index))

    def to_dict(self) -> dict:
        return asdict(self)


def run_calibration(
    cfg: SimConfig,
    replications: int = 1000,
    level: float = 0.95,
    *,
    checkpoints=None,
    strategies=ALL_STRATEGIES,
    tests=tuple(LogRankTest),
    alpha: float = 0.05,
    transform: str = "exp",
    workers: int | None = None,
) -> CalibrationReport:
    """Monte Carlo bias, SE calibration, CI coverage and log-rank rejection rates.

    Replication ``r`` uses a seed derived from ``(cfg.seed, r)``; results do
    not depend on ``workers``.
    """
    if replications < 100:
        raise ValueError("replications must be at least 100")
    strategies = [StrategyKind.parse(s) for s in strategies]
    tests = [LogRankTest(t) for t in tests]
    checkpoints = default_checkpoints(cfg) if checkpoints is None else np.asarray(checkpoints, float)
    jobs = [(cfg, r, checkpoints, strategies, tests, level, transform) for r in range(replications)]

    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1:
        out = [_one_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_replication, jobs, chunksize=max(1, replications // (4 * workers))))
    est = np.stack([o[0] for o in out])  # (rep, strategy, arm/effect, checkpoint, 4)
    pvals = np.stack([o[1] for o in out])

    report = CalibrationReport(
        config=asdict(cfg),
        replications=replications,
        level=level,
        alpha=alpha,
        checkpoints=[float(t) for t in checkpoints],
    )
    for i, s in enumerate(strategies):
        for j, arm in enumerate((0, 1, "effect")):
            for k, t in enumerate(checkpoints):
                truth = float(oracle_tau(s, t, cfg) if arm == "effect" else oracle_mu(s, arm, t, cfg))
                block = est[:, i, j, k, :]
                ok = ~np.isnan(block[:, 0])
                mu, se, lo, hi = block[ok].T
                emp_sd = float(np.std(mu, ddof=1)) if mu.size > 1 else float("nan")
                mean_se = float(np.mean(se)) if mu.size else float("nan")
                report.rows.append(
                    {
                        "strategy": s.value,
                        "arm": arm,
                        "checkpoint": k,
                        "t": float(t),
                        "oracle": truth,
                        "mean_estimate": float(np.mean(mu)) if mu.size else float("nan"),
                        "bias": float(np.mean(mu) - truth) if mu.size else float("nan"),
                        "empirical_sd": emp_sd,
                        "mean_se": mean_se,
                        "se_ratio": mean_se / emp_sd if emp_sd > 0 else float("nan"),
                        "coverage": float(np.mean((lo <= truth) & (truth <= hi))) if mu.size else float("nan"),
                        "valid_replications": int(ok.sum()),
                    }
                )
    for i, test in enumerate(tests):
        p = pvals[:, i]
        ok = ~np.isnan(p)
        report.tests[test.value] = {
            "rejection_rate": float(np.mean(p[ok] < alpha)) if ok.any() else float("nan"),
            "valid_replications": int(ok.sum()),
            "null_holds": _null_holds(test, cfg),
        }
    return report
