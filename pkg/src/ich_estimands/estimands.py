"""Cumulative incidences, treatment effects and pointwise variances per strategy.

Every estimator is a plug-in of Nelson-Aalen hazards. All computations run on
the pooled grid of event times of both arms in ``(0, t_star]``; results are
right-continuous step functions of ``t`` and are read off at the requested
output times.

Variances use the plug-in ``Pr(X >= s, W = w) ~ Y(s; w) / n`` with ``n`` the
total sample size, so ``avar`` is the asymptotic variance of
``sqrt(n) * (mu_hat - mu)`` and ``variance = avar / n``.

Two survival transforms are available. ``"exp"`` (default) uses
``exp(-Lambda)``; ``"product-limit"`` uses ``prod(1 - dLambda)``, under which
the Stieltjes sums telescope exactly (Aalen-Johansen form).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateStratum, WrongForm
from .hazards import HazardKind, arm_hazards
from .normal import norm_ppf
from .processes import ArmProcesses

__all__ = [
    "StrategyKind",
    "IncidenceResult",
    "EffectResult",
    "StrategyEstimate",
    "HazardTable",
    "PsVarianceTerms",
    "estimate",
    "estimate_tp",
    "estimate_cv",
    "estimate_wo",
    "estimate_hp",
    "estimate_ps",
    "estimate_all",
    "confidence_band",
    "DEGENERATE_EPS",
]

DEGENERATE_EPS = 1e-8


class StrategyKind(str, enum.Enum):
    TREATMENT_POLICY = "tp"
    COMPOSITE_VARIABLE = "cv"
    WHILE_ON_TREATMENT = "wo"
    HYPOTHETICAL_I = "hp1"
    HYPOTHETICAL_II = "hp2"
    PRINCIPAL_STRATUM = "ps"

    @classmethod
    def parse(cls, name: "str | StrategyKind") -> "StrategyKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {
            "hp-i": "hp1",
            "hpi": "hp1",
            "hp-1": "hp1",
            "hp-ii": "hp2",
            "hpii": "hp2",
            "hp-2": "hp2",
        }
        key = aliases.get(key, key)
        for member in cls:
            if key in (member.value, member.name.lower().replace("_", "-")):
                return member
        raise ValueError(f"unknown strategy {name!r}")

    @property
    def label(self) -> str:
        return {"hp1": "hp-I", "hp2": "hp-II"}.get(self.value, self.value)


ALL_STRATEGIES = tuple(StrategyKind)


# ---------------------------------------------------------------------- results


@dataclass(frozen=True, eq=False)
class IncidenceResult:
    strategy: StrategyKind
    arm: int
    grid: np.ndarray
    mu: np.ndarray
    avar: np.ndarray
    variance: np.ndarray
    truncated: np.ndarray
    n_total: int
    level: float | None = None
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    clipped: np.ndarray | None = None
    ci_transform: str = "plain"

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def at(self, t) -> np.ndarray:
        """Read the step function ``mu`` at arbitrary times."""
        return _step_lookup(self.grid, self.mu, t)


@dataclass(frozen=True, eq=False)
class EffectResult:
    strategy: StrategyKind
    grid: np.ndarray
    tau: np.ndarray
    avar: np.ndarray
    variance: np.ndarray
    truncated: np.ndarray
    n_total: int
    level: float | None = None
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    clipped: np.ndarray | None = None
    ci_transform: str = "plain"

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variance)


class StrategyEstimate(NamedTuple):
    control: IncidenceResult
    active: IncidenceResult
    effect: EffectResult

    def arm(self, w: int) -> IncidenceResult:
        return self.active if w == 1 else self.control


def _step_lookup(grid, values, t, before=0.0):
    idx = np.searchsorted(grid, np.asarray(t, dtype=float), side="right") - 1
    padded = np.concatenate(([before], values))
    return padded[idx + 1]


# ------------------------------------------------------------------ hazard table


@dataclass(eq=False)
class _ArmArrays:
    """Per-arm hazard increments and risk sets on the pooled grid."""

    arm: int
    d_comp: np.ndarray
    d_out: np.ndarray
    d_int: np.ndarray
    y_comp: np.ndarray
    t_max_comp: float
    d_marg: np.ndarray | None = None
    y_marg: np.ndarray | None = None
    t_max_marg: float | None = None


def _place(times, values, grid):
    out = np.zeros(grid.shape)
    out[np.searchsorted(grid, times)] = values
    return out


def _exclusive_cumsum(x):
    c = np.cumsum(x)
    return np.concatenate(([0.0], c[:-1])), c


@dataclass(eq=False)
class HazardTable:
    """Nelson-Aalen increments of both arms laid out on one pooled grid."""

    grid: np.ndarray
    arms: tuple[_ArmArrays, _ArmArrays]
    n_total: int
    t_star: float
    has_marginal: bool

    @classmethod
    def from_processes(cls, procs: Sequence[ArmProcesses]) -> "HazardTable":
        p0, p1 = procs
        if (p0.arm, p1.arm) != (0, 1):
            raise ValueError("processes must be ordered (control, active)")
        hz = [arm_hazards(p) for p in (p0, p1)]
        times = [h.times for hs in hz for h in hs.values()]
        grid = np.unique(np.concatenate(times)) if times else np.empty(0)
        arms = []
        for p, hs in zip((p0, p1), hz):
            comp = hs[HazardKind.COMPOSITE]
            out = hs[HazardKind.CAUSE_OUTCOME]
            inter = hs[HazardKind.CAUSE_INTERCURRENT]
            a = _ArmArrays(
                arm=p.arm,
                d_comp=_place(comp.times, comp.increments, grid),
                d_out=_place(out.times, out.increments, grid),
                d_int=_place(inter.times, inter.increments, grid),
                y_comp=np.asarray(p.y_composite(grid), dtype=float),
                t_max_comp=comp.t_max,
            )
            if HazardKind.MARGINAL in hs:
                marg = hs[HazardKind.MARGINAL]
                a.d_marg = _place(marg.times, marg.increments, grid)
                a.y_marg = np.asarray(p.y_marginal(grid), dtype=float)
                a.t_max_marg = marg.t_max
            arms.append(a)
        return cls(
            grid=grid,
            arms=(arms[0], arms[1]),
            n_total=p0.n_total,
            t_star=p0.t_star,
            has_marginal=p0.has_marginal and p1.has_marginal,
        )

    def default_output_grid(self, extra=None) -> np.ndarray:
        g = self.grid[(self.grid > 0) & (self.grid <= self.t_star)]
        if extra is not None:
            extra = np.asarray(extra, dtype=float).ravel()
            g = np.union1d(g, extra)
        return g


def _table(procs) -> HazardTable:
    return procs if isinstance(procs, HazardTable) else HazardTable.from_processes(procs)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


# ---------------------------------------------------------- survival transforms


def _survival(d, transform):
    """Return ``(S(s-), S(s))`` on the grid for hazard increments ``d``."""
    if transform == "exp":
        before, after = _exclusive_cumsum(d)
        return np.exp(-before), np.exp(-after)
    if transform == "product-limit":
        after = np.cumprod(1.0 - d)
        before = np.concatenate(([1.0], after[:-1]))
        return before, after
    raise ValueError(f"unknown survival transform {transform!r}")


def _mixed_survival_before(d_a, d_b, transform):
    """``S(s-)`` for the sum of two hazards taken from different arms."""
    if transform == "exp":
        return np.exp(-(_exclusive_cumsum(d_a)[0] + _exclusive_cumsum(d_b)[0]))
    # factored so each product stays in [0, 1]; d_a + d_b may exceed 1
    return _survival(d_a, transform)[0] * _survival(d_b, transform)[0]


def _sq_kernel(p, q, c):
    """``sum_{s <= t} (p(s) - q(t))^2 c(s)`` for every grid point ``t``."""
    out = np.cumsum(p * p * c) - 2.0 * q * np.cumsum(p * c) + q * q * np.cumsum(c)
    return np.maximum(out, 0.0)


# --------------------------------------------------------------- core per-arm


@dataclass(eq=False)
class _Curve:
    mu: np.ndarray
    var: np.ndarray  # avar / n, on the pooled grid
    t_max: float


def _one_minus_survival(d, y, t_max, transform) -> _Curve:
    _, surv = _survival(d, transform)
    mu = 1.0 - surv
    var = surv**2 * np.cumsum(_ratio(d, y))
    return _Curve(mu, var, t_max)


def _subdistribution(weight, d_cause, d_other, y, y_other=None):
    """``F(t) = sum_{s<=t} weight(s-) dLambda_cause(s)`` and its variance.

    ``d_other`` is the hazard whose increments only move the survival weight.
    """
    F = np.cumsum(weight * d_cause)
    a = _ratio(d_cause, y)
    b = _ratio(d_other, y if y_other is None else y_other)
    var = _sq_kernel(weight + F, F, a) + _sq_kernel(F, F, b)
    return F, var


def _wo_arm(a: _ArmArrays, transform) -> tuple[_Curve, np.ndarray]:
    weight, _ = _survival(a.d_comp, transform)
    F, var = _subdistribution(weight, a.d_out, a.d_int, a.y_comp)
    return _Curve(F, var, a.t_max_comp), weight


# ------------------------------------------------------------------ strategies


def _results(kind, tab, curves, grid, effect_var, level, ci_transform):
    def trunc(t_max):
        return grid > t_max

    inc = []
    for w, c in enumerate(curves):
        mu = _step_lookup(tab.grid, c.mu, grid)
        var = _step_lookup(tab.grid, c.var, grid)
        inc.append(
            IncidenceResult(
                strategy=kind,
                arm=w,
                grid=grid,
                mu=mu,
                avar=var * tab.n_total,
                variance=var,
                truncated=trunc(c.t_max),
                n_total=tab.n_total,
            )
        )
    tau = inc[1].mu - inc[0].mu
    if effect_var is None:
        evar = inc[0].variance + inc[1].variance
    else:
        evar = _step_lookup(tab.grid, effect_var, grid)
    eff = EffectResult(
        strategy=kind,
        grid=grid,
        tau=tau,
        avar=evar * tab.n_total,
        variance=evar,
        truncated=inc[0].truncated | inc[1].truncated,
        n_total=tab.n_total,
    )
    if level is not None:
        inc = [confidence_band(r, level, ci_transform) for r in inc]
        eff = confidence_band(eff, level)
    return StrategyEstimate(inc[0], inc[1], eff)


def _grid(tab, grid):
    if grid is None:
        return tab.default_output_grid()
    g = np.asarray(grid, dtype=float).ravel()
    return g


def estimate_tp(procs, grid=None, *, level=0.95, transform="exp", ci_transform="plain"):
    """Treatment policy: ``1 - S(t; w)`` from the outcome-only hazard.

    Needs full-form data, since intercurrent events must not remove subjects
    from the outcome risk set.
    """
    tab = _table(procs)
    if not tab.has_marginal:
        raise WrongForm("treatment policy strategy needs full-form data (T~, R~ observed)")
    curves = [
        _one_minus_survival(a.d_marg, a.y_marg, a.t_max_marg, transform) for a in tab.arms
    ]
    return _results(
        StrategyKind.TREATMENT_POLICY, tab, curves, _grid(tab, grid), None, level, ci_transform
    )


def estimate_cv(procs, grid=None, *, level=0.95, transform="exp", ci_transform="plain"):
    """Composite variable: ``1 - S_12(t; w)``, first of either event."""
    tab = _table(procs)
    curves = [
        _one_minus_survival(a.d_comp, a.y_comp, a.t_max_comp, transform) for a in tab.arms
    ]
    return _results(
        StrategyKind.COMPOSITE_VARIABLE, tab, curves, _grid(tab, grid), None, level, ci_transform
    )


def estimate_wo(procs, grid=None, *, level=0.95, transform="exp", ci_transform="plain"):
    """While on treatment: outcome before the intercurrent event."""
    tab = _table(procs)
    curves = [_wo_arm(a, transform)[0] for a in tab.arms]
    return _results(
        StrategyKind.WHILE_ON_TREATMENT, tab, curves, _grid(tab, grid), None, level, ci_transform
    )


def estimate_hp(
    procs, grid=None, scenario="I", *, level=0.95, transform="exp", ci_transform="plain"
):
    """Hypothetical strategy.

    Scenario I gives both arms the control arm's intercurrent hazard; the
    control curve is then the while-on-treatment curve. Scenario II removes
    the intercurrent hazard; the curves are ``1 - S_1(t; w)``.
    """
    tab = _table(procs)
    scenario = str(scenario).upper()
    if scenario in ("II", "2"):
        curves = [
            _one_minus_survival(a.d_out, a.y_comp, a.t_max_comp, transform) for a in tab.arms
        ]
        return _results(
            StrategyKind.HYPOTHETICAL_II, tab, curves, _grid(tab, grid), None, level, ci_transform
        )
    if scenario not in ("I", "1"):
        raise ValueError(f"unknown hypothetical scenario {scenario!r}")

    a0, a1 = tab.arms
    c0, _ = _wo_arm(a0, transform)
    weight1 = _mixed_survival_before(a1.d_out, a0.d_int, transform)
    F1, var1 = _subdistribution(weight1, a1.d_out, a0.d_int, a1.y_comp, a0.y_comp)
    c1 = _Curve(F1, var1, min(a1.t_max_comp, a0.t_max_comp))

    w0, _ = _survival(a0.d_comp, transform)
    D = F1 - c0.mu
    effect_var = (
        _sq_kernel(weight1 + F1, F1, _ratio(a1.d_out, a1.y_comp))
        + _sq_kernel(w0 + c0.mu, c0.mu, _ratio(a0.d_out, a0.y_comp))
        + _sq_kernel(D, D, _ratio(a0.d_int, a0.y_comp))
    )
    return _results(
        StrategyKind.HYPOTHETICAL_I, tab, [c0, c1], _grid(tab, grid), effect_var, level, ci_transform
    )


@dataclass(eq=False)
class PsVarianceTerms:
    """Kernels of the principal-stratum variance for one arm.

    ``surv_before`` is the composite survival factor just before each pooled
    grid time, ``wo`` the while-on-treatment curve and ``surv_end``/``wo_end``
    their values at ``t_star``.
    """

    grid: np.ndarray
    surv_before: np.ndarray
    wo: np.ndarray
    surv_end: float
    wo_end: float

    def _wo_at(self, t):
        return _step_lookup(self.grid, self.wo, t)

    def A1(self, s_idx, t):
        s = self.grid[s_idx]
        v = self.surv_before[s_idx] + self.wo[s_idx] - self._wo_at(t)
        return np.where(s <= t, v, 0.0)

    def A2(self, s_idx):
        return self.surv_before[s_idx] - self.surv_end + self.wo[s_idx] - self.wo_end

    def B1(self, s_idx, t):
        s = self.grid[s_idx]
        return np.where(s <= t, self._wo_at(t) - self.wo[s_idx], 0.0)

    def B2(self, s_idx):
        return self.surv_end + self.wo_end - self.wo[s_idx]


def _ps_arm(a: _ArmArrays, tab: HazardTable, transform, eps):
    wo, weight = _wo_arm(a, transform)
    in_window = tab.grid <= tab.t_star
    denom = 1.0 - float(np.sum((weight * a.d_int)[in_window]))
    if not denom > eps:
        raise DegenerateStratum(
            f"arm {a.arm}: estimated Pr(no intercurrent event by t*) = {denom:.3g} <= {eps:g}"
        )
    _, surv_after = _survival(a.d_comp, transform)
    end = np.searchsorted(tab.grid, tab.t_star, side="right") - 1
    surv_end = float(surv_after[end]) if end >= 0 else 1.0
    F = wo.mu
    wo_end = float(F[end]) if end >= 0 else 0.0
    terms = PsVarianceTerms(tab.grid, weight, F, surv_end, wo_end)

    m = F / denom
    a_c = np.where(in_window, _ratio(a.d_out, a.y_comp), 0.0)
    b_c = np.where(in_window, _ratio(a.d_int, a.y_comp), 0.0)
    g = weight + F
    A2 = g - surv_end - wo_end
    B2 = surv_end + wo_end - F
    cs = np.cumsum

    # sum_{s<=t} (g - F(t) - m A2)^2 a  +  m^2 sum_{s>t} A2^2 a
    part_a = (
        cs(g * g * a_c)
        + m * m * cs(A2 * A2 * a_c)
        + F * F * cs(a_c)
        - 2 * m * cs(g * A2 * a_c)
        - 2 * F * cs(g * a_c)
        + 2 * m * F * cs(A2 * a_c)
        + m * m * (np.sum(A2 * A2 * a_c) - cs(A2 * A2 * a_c))
    )
    # sum_{s<=t} (F(t) - F - m B2)^2 b  +  m^2 sum_{s>t} B2^2 b
    part_b = (
        F * F * cs(b_c)
        - 2 * F * cs(F * b_c)
        - 2 * F * m * cs(B2 * b_c)
        + cs(F * F * b_c)
        + 2 * m * cs(F * B2 * b_c)
        + m * m * cs(B2 * B2 * b_c)
        + m * m * (np.sum(B2 * B2 * b_c) - cs(B2 * B2 * b_c))
    )
    var = np.maximum(part_a, 0.0) / denom**2 + np.maximum(part_b, 0.0) / denom**2
    return _Curve(m, var, wo.t_max), denom, terms


def estimate_ps(
    procs,
    grid=None,
    t_star=None,
    *,
    level=0.95,
    transform="exp",
    ci_transform="plain",
    eps=DEGENERATE_EPS,
):
    """Principal stratum of subjects free of the intercurrent event by ``t_star``.

    The while-on-treatment curve divided by the estimated probability of no
    intercurrent event by ``t_star``; raises :class:`DegenerateStratum` when
    that probability is at most ``eps``.
    """
    tab = _table(procs)
    if t_star is not None and t_star != tab.t_star:
        tab = replace(tab, t_star=float(t_star))
    curves = [_ps_arm(a, tab, transform, eps)[0] for a in tab.arms]
    return _results(
        StrategyKind.PRINCIPAL_STRATUM, tab, curves, _grid(tab, grid), None, level, ci_transform
    )


def ps_terms(procs, arm: int, *, transform="exp") -> tuple[float, PsVarianceTerms]:
    """Denominator and variance kernels of the principal-stratum estimator."""
    tab = _table(procs)
    _, denom, terms = _ps_arm(tab.arms[arm], tab, transform, -np.inf)
    return denom, terms


_DISPATCH = {
    StrategyKind.TREATMENT_POLICY: estimate_tp,
    StrategyKind.COMPOSITE_VARIABLE: estimate_cv,
    StrategyKind.WHILE_ON_TREATMENT: estimate_wo,
    StrategyKind.PRINCIPAL_STRATUM: estimate_ps,
}


def estimate(procs, strategy, grid=None, **kw) -> StrategyEstimate:
    kind = StrategyKind.parse(strategy)
    if kind is StrategyKind.HYPOTHETICAL_I:
        return estimate_hp(procs, grid, "I", **kw)
    if kind is StrategyKind.HYPOTHETICAL_II:
        return estimate_hp(procs, grid, "II", **kw)
    return _DISPATCH[kind](procs, grid, **kw)


def estimate_all(procs, grid=None, strategies=ALL_STRATEGIES, **kw) -> dict:
    """Run several strategies on a shared hazard table."""
    tab = _table(procs)
    if grid is None:
        grid = tab.default_output_grid()
    return {StrategyKind.parse(k): estimate(tab, k, grid, **kw) for k in strategies}


# -------------------------------------------------------------- confidence band


def confidence_band(res, level: float = 0.95, transform: str = "plain"):
    """Attach normal-approximation pointwise bounds at ``level``.

    Incidence bounds are clipped to [0, 1] and effect bounds to [-1, 1];
    ``clipped`` marks the points where clipping happened. ``transform="cloglog"``
    builds incidence bounds on the ``log(-log(1 - mu))`` scale.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = norm_ppf((1.0 + level) / 2.0)
    se = np.sqrt(np.maximum(res.variance, 0.0))
    if isinstance(res, EffectResult):
        point, lo_cap, hi_cap = res.tau, -1.0, 1.0
        transform = "plain"
    else:
        point, lo_cap, hi_cap = res.mu, 0.0, 1.0

    if transform == "plain":
        lo, hi = point - z * se, point + z * se
    elif transform == "cloglog":
        with np.errstate(divide="ignore", invalid="ignore"):
            surv = 1.0 - point
            g = np.log(-np.log(surv))
            se_g = se / (surv * -np.log(surv))
            lo = 1.0 - np.exp(-np.exp(g - z * se_g))
            hi = 1.0 - np.exp(-np.exp(g + z * se_g))
        ok = np.isfinite(lo) & np.isfinite(hi) & (point > 0) & (point < 1)
        lo = np.where(ok, lo, point - z * se)
        hi = np.where(ok, hi, point + z * se)
    else:
        raise ValueError(f"unknown CI transform {transform!r}")
    clipped = (lo < lo_cap) | (hi > hi_cap)
    return replace(
        res,
        level=level,
        ci_lo=np.clip(lo, lo_cap, hi_cap),
        ci_hi=np.clip(hi, lo_cap, hi_cap),
        clipped=clipped,
        ci_transform=transform,
    )
