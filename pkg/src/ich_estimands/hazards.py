"""Nelson-Aalen cumulative hazards and the Stieltjes-sum calculus built on them."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import RiskSetEmptyAtEvent
from .processes import ArmProcesses, StepFunction

__all__ = [
    "HazardKind",
    "CumulativeHazard",
    "nelson_aalen",
    "arm_hazards",
    "exp_neg",
    "product_limit",
    "integrate_against",
    "integral_curve",
    "transform_gap",
]


class HazardKind(str, enum.Enum):
    MARGINAL = "marginal"  # Lambda, outcome with intercurrent events left as natural
    COMPOSITE = "composite"  # Lambda_12
    CAUSE_OUTCOME = "cause_outcome"  # Lambda_1
    CAUSE_INTERCURRENT = "cause_intercurrent"  # Lambda_2


@dataclass(frozen=True, eq=False)
class CumulativeHazard:
    """A Nelson-Aalen curve together with the risk-set sizes behind it.

    ``at_risk[i]`` is ``Y`` at ``curve.jump_times[i]``. ``t_max`` is the last
    time with a nonempty risk set; :meth:`evaluate` carries the last value
    forward past it and reports truncation.
    """

    kind: HazardKind | None
    arm: int | None
    curve: StepFunction
    at_risk: np.ndarray
    t_max: float
    exact_increments: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.curve.jump_times

    @property
    def increments(self) -> np.ndarray:
        # dN / Y as computed, not re-derived from the rounded cumulative sum
        if self.exact_increments is not None:
            return self.exact_increments
        return self.curve.jumps()

    def __call__(self, t):
        return self.curve(t)

    def evaluate(self, t):
        """Return ``(value, truncated)`` at ``t``."""
        t = np.asarray(t, dtype=float)
        return self.curve(t), t > self.t_max


def nelson_aalen(
    n_proc: StepFunction,
    y_proc: StepFunction,
    kind: HazardKind | None = None,
    arm: int | None = None,
) -> CumulativeHazard:
    """``Lambda(t) = sum_{s <= t} dN(s) / Y(s)``.

    ``n_proc`` is a right-continuous counting process and ``y_proc`` the
    matching left-continuous at-risk process.
    """
    times = n_proc.jump_times
    dn = n_proc.jumps()
    keep = dn != 0
    times, dn = times[keep], dn[keep]
    y = np.asarray(y_proc(times), dtype=float)
    if (y <= 0).any():
        bad = times[y <= 0][0]
        raise RiskSetEmptyAtEvent(f"event at t={bad} with an empty risk set")
    inc = dn / y
    inc.flags.writeable = False
    curve = StepFunction(times, np.cumsum(inc), 0.0)
    t_max = float(y_proc.jump_times[-1]) if y_proc.jump_times.size else 0.0
    return CumulativeHazard(kind, arm, curve, y, t_max, inc)


def arm_hazards(p: ArmProcesses) -> dict[HazardKind, CumulativeHazard]:
    """All Nelson-Aalen hazards available for one arm."""
    h1 = nelson_aalen(p.n_outcome, p.y_composite, HazardKind.CAUSE_OUTCOME, p.arm)
    h2 = nelson_aalen(p.n_intercurrent, p.y_composite, HazardKind.CAUSE_INTERCURRENT, p.arm)
    h12 = nelson_aalen(p.n_composite, p.y_composite, HazardKind.COMPOSITE, p.arm)
    # same estimator, but summed so that Lambda_1 + Lambda_2 == Lambda_12 bit for bit
    summed = StepFunction(h12.times, h1(h12.times) + h2(h12.times), 0.0)
    h12 = CumulativeHazard(h12.kind, p.arm, summed, h12.at_risk, h12.t_max, h12.increments)
    out = {
        HazardKind.COMPOSITE: h12,
        HazardKind.CAUSE_OUTCOME: h1,
        HazardKind.CAUSE_INTERCURRENT: h2,
    }
    if p.has_marginal:
        out[HazardKind.MARGINAL] = nelson_aalen(
            p.n_marginal, p.y_marginal, HazardKind.MARGINAL, p.arm
        )
    return out


def exp_neg(h: CumulativeHazard | StepFunction) -> StepFunction:
    """Survival factor ``exp(-Lambda(t))``."""
    curve = h.curve if isinstance(h, CumulativeHazard) else h
    return curve.map(lambda v: np.exp(-np.asarray(v, dtype=float)))


def product_limit(h: CumulativeHazard) -> StepFunction:
    """Product-integral ``prod_{s <= t} (1 - dLambda(s))``."""
    return StepFunction(h.times, np.cumprod(1.0 - h.increments), 1.0)


def transform_gap(h: CumulativeHazard) -> float:
    """Largest gap between ``exp(-Lambda)`` and ``prod(1 - dLambda)``; it is O(dLambda^2)."""
    if h.times.size == 0:
        return 0.0
    return float(np.max(np.abs(exp_neg(h).values - product_limit(h).values)))


def integral_curve(weight: StepFunction, h: CumulativeHazard) -> StepFunction:
    """``t -> sum_{s <= t} weight(s-) dLambda(s)`` as a step function.

    The integrand is taken as its left limit at each jump of ``h``.
    """
    inc = weight.left_limit(h.times) * h.increments
    return StepFunction(h.times, np.cumsum(inc), 0.0)


def integrate_against(weight: StepFunction, h: CumulativeHazard, t):
    return integral_curve(weight, h)(t)
