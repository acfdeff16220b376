"""Weighted two-sample log-rank tests on the hazard scale.

``TP`` compares the outcome-only hazards ``Lambda(t; w)`` (full form only),
``CV`` the composite hazards ``Lambda_12`` and ``HP`` the cause-specific
outcome hazards ``Lambda_1``. While-on-treatment and principal-stratum
estimands depend on more than one hazard and have no test here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoEvents, WrongForm
from .normal import two_sided_p
from .processes import ArmProcesses, StepFunction

__all__ = ["LogRankTest", "LogRankResult", "logrank", "TEST_FOR_STRATEGY"]


class LogRankTest(str, enum.Enum):
    TP = "tp"
    CV = "cv"
    HP = "hp"


# strategies sharing a test; wo and ps have none
TEST_FOR_STRATEGY = {"tp": LogRankTest.TP, "cv": LogRankTest.CV, "hp1": LogRankTest.HP, "hp2": LogRankTest.HP}


@dataclass(frozen=True)
class LogRankResult:
    test: LogRankTest
    weight: str
    u_stat: float
    s_var: float
    z: float
    p_two_sided: float
    n_event_times: int

    def to_dict(self) -> dict:
        return {
            "test": self.test.value,
            "weight": self.weight,
            "U": self.u_stat,
            "S": self.s_var,
            "z": self.z,
            "p": self.p_two_sided,
            "event_times": self.n_event_times,
        }


def _processes(p: ArmProcesses, test: LogRankTest):
    if test is LogRankTest.TP:
        if not p.has_marginal:
            raise WrongForm("treatment policy test needs full-form data")
        return p.n_marginal, p.y_marginal
    if test is LogRankTest.CV:
        return p.n_composite, p.y_composite
    return p.n_outcome, p.y_composite


def logrank(
    procs: tuple[ArmProcesses, ArmProcesses],
    test: LogRankTest | str = LogRankTest.CV,
    weight: float | StepFunction | Callable | None = None,
) -> LogRankResult:
    """Log-rank statistic ``U``, its null variance ``S`` and ``z = U / sqrt(S)``.

    ``U = sum w(s) [Y1 dN0 - Y0 dN1] / (Y1 + Y0)`` over event times up to
    ``t_star``, so a positive ``U`` means fewer events than expected in the
    active arm. ``weight`` is a constant, a step function (read as its left
    limit) or a callable of time; ``None`` means 1. Tied events enter one term.
    """
    test = LogRankTest(test)
    p0, p1 = procs
    n0, y0 = _processes(p0, test)
    n1, y1 = _processes(p1, test)
    t_star = min(p0.t_star, p1.t_star)

    times = np.union1d(n0.jump_times, n1.jump_times)
    times = times[times <= t_star]
    d0 = n0(times) - n0.left_limit(times)
    d1 = n1(times) - n1.left_limit(times)
    keep = (d0 + d1) > 0
    times, d0, d1 = times[keep], d0[keep], d1[keep]
    r0 = np.asarray(y0(times), dtype=float)
    r1 = np.asarray(y1(times), dtype=float)

    if weight is None:
        w, label = np.ones_like(times), "constant:1"
    elif isinstance(weight, StepFunction):
        w, label = weight.left_limit(times), "tabulated"
    elif callable(weight):
        w, label = np.asarray(weight(times), dtype=float), "callable"
    else:
        w, label = np.full_like(times, float(weight)), f"constant:{float(weight):g}"

    total = r0 + r1
    u = float(np.sum(w * (r1 * d0 - r0 * d1) / total))
    s = float(np.sum(w * w * r1 * r0 * (d1 + d0) / total**2))
    if s <= 0.0:
        if u == 0.0:
            raise NoEvents(f"{test.value} test: no informative events up to t*={t_star:g}")
        raise NoEvents(f"{test.value} test: zero null variance")
    z = u / np.sqrt(s)
    return LogRankResult(test, label, u, s, float(z), two_sided_p(z), int(times.size))
