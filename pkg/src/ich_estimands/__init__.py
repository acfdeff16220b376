"""Estimands for two-arm trials with a time-to-event outcome and one intercurrent event."""

from .data import (
    Dataset,
    Form,
    ReducedRecord,
    SubjectRecord,
    ValidationReport,
    parse_dataset,
    read_dataset,
    reduce,
    validate,
    write_dataset,
)
from .errors import (
    DegenerateStratum,
    EmptyArm,
    EstimandError,
    MalformedRow,
    MissingColumn,
    MixedForm,
    NoEvents,
    RiskSetEmptyAtEvent,
    WrongForm,
    ZeroRisk,
)
from .estimands import (
    EffectResult,
    HazardTable,
    IncidenceResult,
    StrategyEstimate,
    StrategyKind,
    confidence_band,
    estimate,
    estimate_all,
    estimate_cv,
    estimate_hp,
    estimate_ps,
    estimate_tp,
    estimate_wo,
)
from .hazards import (
    CumulativeHazard,
    HazardKind,
    exp_neg,
    integrate_against,
    nelson_aalen,
    product_limit,
    transform_gap,
)
from .logrank import LogRankResult, LogRankTest, logrank
from .processes import ArmProcesses, RiskSet, StepFunction, at_risk_fraction, build_processes
from .simulation import CalibrationReport, SimConfig, oracle_mu, run_calibration, simulate

__version__ = "0.1.0"
