"""Per-arm counting and at-risk processes as step functions."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Form
from .errors import ZeroRisk

__all__ = [
    "StepFunction",
    "ArmProcesses",
    "RiskSet",
    "build_processes",
    "counting_process",
    "at_risk_process",
    "at_risk_fraction",
]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Piecewise-constant function with jumps at ``jump_times``.

    ``values[i]`` is the value after the ``i``-th jump and ``value_at_zero``
    the value before the first one. With ``left_continuous=False`` (counting
    processes, hazards) the value at a jump time is the post-jump value; with
    ``left_continuous=True`` (at-risk processes) it is the pre-jump value, so
    ``Y(t)`` counts subjects with observed time ``>= t``.
    """

    jump_times: np.ndarray
    values: np.ndarray
    value_at_zero: float = 0.0
    left_continuous: bool = False

    def __post_init__(self):
        jt = _readonly(self.jump_times)
        vals = _readonly(self.values)
        if jt.ndim != 1 or jt.shape != vals.shape:
            raise ValueError("jump_times and values must be 1-d with equal length")
        if jt.size > 1 and not (np.diff(jt) > 0).all():
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "value_at_zero", float(self.value_at_zero))

    def _lookup(self, t, side: str):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side=side) - 1
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def __call__(self, t):
        return self._lookup(t, "left" if self.left_continuous else "right")

    def left_limit(self, t):
        """Value just before ``t``."""
        return self._lookup(t, "left")

    def right_limit(self, t):
        return self._lookup(t, "right")

    def jumps(self) -> np.ndarray:
        """Jump sizes, aligned with ``jump_times``."""
        return np.diff(np.concatenate(([self.value_at_zero], self.values)))

    def map(self, func) -> "StepFunction":
        return StepFunction(
            self.jump_times, func(self.values), func(self.value_at_zero), self.left_continuous
        )

    @property
    def last_value(self) -> float:
        return float(self.values[-1]) if self.values.size else self.value_at_zero


def counting_process(times, mask=None) -> StepFunction:
    """``N(t) = #{i : times_i <= t, mask_i}`` as a right-continuous step function."""
    times = np.asarray(times, dtype=float)
    if mask is not None:
        times = times[np.asarray(mask, dtype=bool)]
    jt, counts = np.unique(times, return_counts=True)
    return StepFunction(jt, np.cumsum(counts), 0.0, left_continuous=False)


def at_risk_process(times) -> StepFunction:
    """``Y(t) = #{i : times_i >= t}``, left-continuous."""
    times = np.asarray(times, dtype=float)
    jt, counts = np.unique(times, return_counts=True)
    return StepFunction(jt, times.size - np.cumsum(counts), times.size, left_continuous=True)


class RiskSet(str, enum.Enum):
    OUTCOME = "outcome"
    COMPOSITE = "composite"


@dataclass(frozen=True, eq=False)
class ArmProcesses:
    """Event and at-risk processes for one arm.

    ``n_marginal``/``y_marginal`` are ``N(t;w)`` and ``Y(t;w)`` built from the
    outcome times alone (full form only). ``n_outcome``, ``n_intercurrent``
    and ``n_composite`` count first events of cause 1, cause 2 and either,
    all sharing the risk set ``y_composite``. Only events at or before
    ``t_star`` are counted.
    """

    arm: int
    n_subjects: int
    n_total: int
    t_star: float
    n_outcome: StepFunction
    n_intercurrent: StepFunction
    n_composite: StepFunction
    y_composite: StepFunction
    n_marginal: StepFunction | None = None
    y_marginal: StepFunction | None = None

    @property
    def has_marginal(self) -> bool:
        return self.n_marginal is not None


def _arm_processes(ds: Dataset, w: int, time: np.ndarray, cause: np.ndarray) -> ArmProcesses:
    sel = ds.arm == w
    t_w, j_w = time[sel], cause[sel]
    upto = t_w <= ds.t_star
    kw = {}
    if ds.form is Form.FULL:
        t_obs = ds.t_obs[sel]
        kw["n_marginal"] = counting_process(t_obs, (ds.delta_t[sel] == 1) & (t_obs <= ds.t_star))
        kw["y_marginal"] = at_risk_process(t_obs)
    return ArmProcesses(
        arm=w,
        n_subjects=int(sel.sum()),
        n_total=len(ds),
        t_star=ds.t_star,
        n_outcome=counting_process(t_w, upto & (j_w == 1)),
        n_intercurrent=counting_process(t_w, upto & (j_w == 2)),
        n_composite=counting_process(t_w, upto & (j_w != 0)),
        y_composite=at_risk_process(t_w),
        **kw,
    )


def build_processes(ds: Dataset) -> tuple[ArmProcesses, ArmProcesses]:
    """Return ``(control, active)`` processes, indexed by arm."""
    time, cause = ds.first_event()
    return _arm_processes(ds, 0, time, cause), _arm_processes(ds, 1, time, cause)


def at_risk_fraction(p: ArmProcesses, which: RiskSet | str, t):
    """Plug-in for ``Pr(X >= t, W = w)``: ``Y(t;w) / n``.

    ``n`` is the total sample size over both arms. Raises :class:`ZeroRisk`
    where the risk set is empty.
    """
    which = RiskSet(which)
    y = p.y_composite if which is RiskSet.COMPOSITE else p.y_marginal
    if y is None:
        raise ValueError("marginal risk set needs full-form data")
    count = np.asarray(y(t), dtype=float)
    if (count <= 0).any():
        raise ZeroRisk(f"empty {which.value} risk set in arm {p.arm} at t={t}")
    frac = count / p.n_total
    return frac if frac.ndim else float(frac)
