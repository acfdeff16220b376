"""Trial data representation, CSV ingest, validation and reduction.

Two observed-data layouts are supported:

* ``Form.FULL``: ``(W, T~, Delta^T, R~, Delta^R)``, both event times observed
  separately (intercurrent events do not truncate the outcome).
* ``Form.REDUCED``: ``(W, T~ ^ R~, J)`` with ``J`` in {0, 1, 2} for censored,
  outcome first, intercurrent first.

A dataset is a bundle of read-only numpy columns. Row order is preserved.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyArm, MalformedRow, MissingColumn, MixedForm, WrongForm

__all__ = [
    "Form",
    "SubjectRecord",
    "ReducedRecord",
    "Dataset",
    "Flag",
    "ValidationReport",
    "DEFAULT_SCHEMA",
    "parse_dataset",
    "read_dataset",
    "write_dataset",
    "validate",
    "reduce",
]


class Form(str, enum.Enum):
    FULL = "full"
    REDUCED = "reduced"


DEFAULT_SCHEMA: dict[str, str] = {
    "id": "id",
    "arm": "arm",
    "t_obs": "t_obs",
    "delta_t": "delta_t",
    "r_obs": "r_obs",
    "delta_r": "delta_r",
    "time": "time",
    "cause": "cause",
}

_FULL_FIELDS = ("t_obs", "delta_t", "r_obs", "delta_r")
_REDUCED_FIELDS = ("time", "cause")


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    arm: int
    t_obs: float
    delta_t: int
    r_obs: float
    delta_r: int


@dataclass(frozen=True)
class ReducedRecord:
    id: str
    arm: int
    time: float
    cause: int


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable two-arm trial dataset.

    Full-form datasets carry ``t_obs``, ``delta_t``, ``r_obs``, ``delta_r``;
    reduced-form datasets carry ``time`` and ``cause``. Use
    :meth:`from_records` or :meth:`from_arrays` rather than the constructor.
    """

    form: Form
    t_star: float
    ids: tuple[str, ...]
    arm: np.ndarray
    t_obs: np.ndarray | None = None
    delta_t: np.ndarray | None = None
    r_obs: np.ndarray | None = None
    delta_r: np.ndarray | None = None
    time: np.ndarray | None = None
    cause: np.ndarray | None = None
    unit: str | None = field(default=None, compare=False)

    @classmethod
    def from_arrays(
        cls,
        arm,
        *,
        t_star: float,
        t_obs=None,
        delta_t=None,
        r_obs=None,
        delta_r=None,
        time=None,
        cause=None,
        ids: Sequence[str] | None = None,
        unit: str | None = None,
    ) -> "Dataset":
        arm = _frozen(arm, np.int8)
        n = arm.shape[0]
        if ids is None:
            ids = [str(i + 1) for i in range(n)]
        ids = tuple(str(i) for i in ids)
        if not (t_star > 0 and math.isfinite(t_star)):
            raise ValueError(f"t_star must be a positive finite number, got {t_star!r}")
        if time is not None or cause is not None:
            if t_obs is not None or r_obs is not None:
                raise MixedForm("both full and reduced columns supplied")
            form = Form.REDUCED
            cols = {"time": _frozen(time, float), "cause": _frozen(cause, np.int8)}
            if not np.isin(cols["cause"], (0, 1, 2)).all():
                raise ValueError("cause must be 0, 1 or 2")
        else:
            form = Form.FULL
            cols = {
                "t_obs": _frozen(t_obs, float),
                "delta_t": _frozen(delta_t, np.int8),
                "r_obs": _frozen(r_obs, float),
                "delta_r": _frozen(delta_r, np.int8),
            }
            for name in ("delta_t", "delta_r"):
                if not np.isin(cols[name], (0, 1)).all():
                    raise ValueError(f"{name} must be 0 or 1")
        for name, col in cols.items():
            if col.shape != (n,):
                raise ValueError(f"column {name} has length {col.shape[0]}, expected {n}")
        if len(ids) != n:
            raise ValueError("ids length does not match arm length")
        if not np.isin(arm, (0, 1)).all():
            raise ValueError("arm must be 0 or 1")
        for w in (0, 1):
            if not (arm == w).any():
                raise EmptyArm(f"arm {w} has no subjects")
        return cls(form=form, t_star=float(t_star), ids=ids, arm=arm, unit=unit, **cols)

    @classmethod
    def from_records(
        cls, records: Iterable[SubjectRecord | ReducedRecord], t_star: float
    ) -> "Dataset":
        records = list(records)
        if not records:
            raise EmptyArm("dataset is empty")
        kinds = {type(r) for r in records}
        if len(kinds) > 1:
            raise MixedForm("records mix full and reduced layouts")
        ids = [r.id for r in records]
        arm = [r.arm for r in records]
        if kinds == {ReducedRecord}:
            return cls.from_arrays(
                arm,
                t_star=t_star,
                ids=ids,
                time=[r.time for r in records],
                cause=[r.cause for r in records],
            )
        return cls.from_arrays(
            arm,
            t_star=t_star,
            ids=ids,
            t_obs=[r.t_obs for r in records],
            delta_t=[r.delta_t for r in records],
            r_obs=[r.r_obs for r in records],
            delta_r=[r.delta_r for r in records],
        )

    def __len__(self) -> int:
        return self.arm.shape[0]

    @property
    def records(self) -> list[SubjectRecord] | list[ReducedRecord]:
        if self.form is Form.FULL:
            return [
                SubjectRecord(i, int(w), float(t), int(dt), float(r), int(dr))
                for i, w, t, dt, r, dr in zip(
                    self.ids, self.arm, self.t_obs, self.delta_t, self.r_obs, self.delta_r
                )
            ]
        return [
            ReducedRecord(i, int(w), float(t), int(j))
            for i, w, t, j in zip(self.ids, self.arm, self.time, self.cause)
        ]

    def first_event(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(T~ ^ R~, J)`` for every subject, whatever the form."""
        if self.form is Form.REDUCED:
            return self.time, self.cause
        return _first_event(self.t_obs, self.delta_t, self.r_obs, self.delta_r)

    def arm_sizes(self) -> dict[int, int]:
        return {w: int((self.arm == w).sum()) for w in (0, 1)}


def _first_event(t_obs, delta_t, r_obs, delta_r):
    time = np.minimum(t_obs, r_obs)
    # outcome wins ties with the intercurrent event; an event wins ties with censoring
    outcome_first = (delta_t == 1) & (t_obs <= r_obs)
    intercurrent_first = ~outcome_first & (delta_r == 1) & (r_obs <= t_obs)
    cause = np.zeros(time.shape, dtype=np.int8)
    cause[outcome_first] = 1
    cause[intercurrent_first] = 2
    return time, cause


def reduce(ds: Dataset) -> Dataset:
    """Collapse a full-form dataset to ``(W, T~ ^ R~, J)``."""
    if ds.form is not Form.FULL:
        raise WrongForm("dataset is already in reduced form")
    time, cause = ds.first_event()
    return Dataset.from_arrays(
        ds.arm, t_star=ds.t_star, ids=ds.ids, time=time, cause=cause, unit=ds.unit
    )


# --------------------------------------------------------------------------- I/O


def _parse_time(raw: str, row: int, name: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(row, f"{name}={raw!r} is not a number") from None
    if not math.isfinite(value) or value < 0:
        raise MalformedRow(row, f"{name}={raw!r} must be finite and nonnegative")
    return value


def _parse_flag(raw: str, row: int, name: str, allowed: tuple[str, ...] = ("0", "1")) -> int:
    value = raw.strip()
    if value not in allowed:
        raise MalformedRow(row, f"{name}={raw!r} must be one of {', '.join(allowed)}")
    return int(value)


def parse_dataset(
    source: IO[str] | str,
    t_star: float,
    schema: Mapping[str, str] | None = None,
) -> Dataset:
    """Parse a CSV stream into a :class:`Dataset`.

    The layout is picked from the header. Full form needs the ``t_obs``,
    ``delta_t``, ``r_obs`` and ``delta_r`` columns; reduced form needs
    ``time`` and ``cause``. A file with only ``t_obs``/``delta_t`` is read as
    reduced form without intercurrent events. ``schema`` maps logical field
    names to column names and overrides :data:`DEFAULT_SCHEMA` per key.

    Row numbers in :class:`MalformedRow` count data rows from 1.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    names = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(names)
        if unknown:
            raise ValueError(f"unknown schema fields: {sorted(unknown)}")
        names.update(schema)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("input has no header row") from None
    index = {h: i for i, h in enumerate(header)}
    present = {f for f, col in names.items() if col in index}

    if "arm" not in present:
        raise MissingColumn(f"missing column {names['arm']!r}")
    full = [f for f in _FULL_FIELDS if f in present]
    red = [f for f in _REDUCED_FIELDS if f in present]
    if full and red:
        raise MixedForm(f"columns for both layouts present: {full + red}")
    if red:
        if len(red) < 2:
            missing = [names[f] for f in _REDUCED_FIELDS if f not in present]
            raise MissingColumn(f"missing column(s) {missing}")
        form, fields = Form.REDUCED, _REDUCED_FIELDS
    elif {"t_obs", "delta_t"} <= present and not ({"r_obs", "delta_r"} & present):
        form, fields = Form.REDUCED, ("t_obs", "delta_t")
    elif full:
        missing = [names[f] for f in _FULL_FIELDS if f not in present]
        if missing:
            raise MissingColumn(f"missing column(s) {missing}")
        form, fields = Form.FULL, _FULL_FIELDS
    else:
        raise MissingColumn("no event-time columns found")

    id_col = index.get(names["id"])
    arm_col = index[names["arm"]]
    cols = [index[names[f]] for f in fields]
    ids: list[str] = []
    arm: list[int] = []
    values: list[list[float]] = [[] for _ in fields]
    width = len(header)
    for row, line in enumerate(reader, start=1):
        if not line or all(not c.strip() for c in line):
            continue
        if len(line) != width:
            raise MalformedRow(row, f"expected {width} fields, got {len(line)}")
        ids.append(line[id_col].strip() if id_col is not None else str(row))
        arm.append(_parse_flag(line[arm_col], row, "arm"))
        for k, (f, c) in enumerate(zip(fields, cols)):
            if f in ("t_obs", "r_obs", "time"):
                values[k].append(_parse_time(line[c], row, f))
            elif f == "cause":
                values[k].append(_parse_flag(line[c], row, f, ("0", "1", "2")))
            else:
                values[k].append(_parse_flag(line[c], row, f))

    for w in (0, 1):
        if w not in arm:
            raise EmptyArm(f"arm {w} has no rows")
    if form is Form.FULL:
        kw = dict(zip(fields, values))
    else:
        kw = {"time": values[0], "cause": values[1]}
    return Dataset.from_arrays(arm, t_star=t_star, ids=ids, **kw)


def read_dataset(path, t_star: float, schema: Mapping[str, str] | None = None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dataset(fh, t_star, schema)


def _fmt_time(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(ds: Dataset, stream: IO[str]) -> None:
    """Write ``ds`` in the CSV layout that :func:`parse_dataset` reads back."""
    writer = csv.writer(stream, lineterminator="\n")
    if ds.form is Form.FULL:
        writer.writerow(["id", "arm", "t_obs", "delta_t", "r_obs", "delta_r"])
        for i, w, t, dt, r, dr in zip(
            ds.ids, ds.arm, ds.t_obs, ds.delta_t, ds.r_obs, ds.delta_r
        ):
            writer.writerow([i, int(w), _fmt_time(t), int(dt), _fmt_time(r), int(dr)])
    else:
        writer.writerow(["id", "arm", "time", "cause"])
        for i, w, t, j in zip(ds.ids, ds.arm, ds.time, ds.cause):
            writer.writerow([i, int(w), _fmt_time(t), int(j)])


# -------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Flag:
    code: str
    message: str
    rows: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "rows": list(self.rows)}


@dataclass
class ValidationReport:
    form: Form
    t_star: float
    n_subjects: dict[int, int]
    events: dict[int, dict[str, int]]
    max_time: dict[int, float]
    flags: list[Flag]

    @property
    def ok(self) -> bool:
        return not self.flags

    def codes(self) -> set[str]:
        return {f.code for f in self.flags}

    def to_dict(self) -> dict:
        return {
            "form": self.form.value,
            "t_star": self.t_star,
            "n_subjects": {str(k): v for k, v in self.n_subjects.items()},
            "events": {str(k): v for k, v in self.events.items()},
            "max_time": {str(k): v for k, v in self.max_time.items()},
            "flags": [f.to_dict() for f in self.flags],
        }


def _rows(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) + 1 for i in np.flatnonzero(mask))


def validate(ds: Dataset) -> ValidationReport:
    """Summarise ``ds`` and flag what can be checked from data.

    Flags never reject the data: independent censoring and randomization are
    untestable, so only positivity, ties and malformed times are reported.
    """
    flags: list[Flag] = []
    time, cause = ds.first_event()
    if ds.form is Form.FULL:
        all_times = np.concatenate([ds.t_obs, ds.r_obs])
        last = np.maximum(ds.t_obs, ds.r_obs)
    else:
        all_times = ds.time
        last = ds.time

    bad = ~np.isfinite(all_times) | (all_times < 0)
    if bad.any():
        n = len(ds)
        flags.append(
            Flag(
                "invalid_time",
                "negative or non-finite observed times",
                _rows(bad[:n] | bad[n:]) if ds.form is Form.FULL else _rows(bad),
            )
        )

    n_subjects = ds.arm_sizes()
    events: dict[int, dict[str, int]] = {}
    max_time: dict[int, float] = {}
    for w in (0, 1):
        in_arm = ds.arm == w
        events[w] = {
            "censored": int((in_arm & (cause == 0)).sum()),
            "outcome_first": int((in_arm & (cause == 1)).sum()),
            "intercurrent_first": int((in_arm & (cause == 2)).sum()),
        }
        if ds.form is Form.FULL:
            events[w]["outcome"] = int((in_arm & (ds.delta_t == 1)).sum())
            events[w]["intercurrent"] = int((in_arm & (ds.delta_r == 1)).sum())
        finite = last[in_arm][np.isfinite(last[in_arm])]
        max_time[w] = float(finite.max()) if finite.size else float("nan")
        if not max_time[w] >= ds.t_star:
            flags.append(
                Flag(
                    "positivity",
                    f"t_star={ds.t_star:g} exceeds the last observed time "
                    f"{max_time[w]:g} in arm {w}",
                )
            )

    if ds.form is Form.FULL:
        tie = (ds.delta_t == 1) & (ds.delta_r == 1) & (ds.t_obs == ds.r_obs)
        if tie.any():
            flags.append(
                Flag(
                    "tie",
                    "outcome and intercurrent event at the same time; "
                    "recorded as outcome first",
                    _rows(tie),
                )
            )
        after = (ds.delta_r == 1) & (ds.delta_t == 1) & (ds.t_obs > ds.r_obs)
        if after.any():
            flags.append(
                Flag(
                    "outcome_after_intercurrent",
                    "outcome observed after the intercurrent event; legal when the "
                    "intercurrent event does not truncate the outcome, review if it does",
                    _rows(after),
                )
            )

    return ValidationReport(
        form=ds.form,
        t_star=ds.t_star,
        n_subjects=n_subjects,
        events=events,
        max_time=max_time,
        flags=flags,
    )
