"""Multi-seed sweeps of the neural estimator against exact ground truth.

An experiment is a list of sweep points (n, k) run for a number of
replicas.  Replica ``r`` trains with a seed derived from
``(master_seed, r)`` only, so a record's value does not depend on which
worker ran it or in what order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .bounds import SCHEDULE_MODES, schedule
from .distributions import DistributionPair, pair_from_dict, pair_to_dict
from .divergences import DivergenceKind, ground_truth
from .errors import ConfigError, DegenerateFit
from .network import NetworkClassSpec, Star, TruncatedStar, class_spec_from_dict
from .training import TrainAudit, TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_NS = (1_000, 3_000, 10_000, 30_000, 100_000)
TRAIN_FIELDS = {"epochs", "lr_initial", "lr_late", "lr_switch_epoch", "batch_size", "class", "m"}
CONFIG_FIELDS = {"name", "kind", "pair", "sweep", "schedule_mode", "replicas", "master_seed", "train"}


def replica_seed(master_seed: int, replica: int) -> int:
    """Training seed of replica ``replica``; a pure function of its two arguments."""
    state = np.random.SeedSequence([master_seed, replica]).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


@dataclass(frozen=True)
class SweepPoint:
    n: int
    k: int
    class_spec: NetworkClassSpec


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep over sample sizes (``ns``) or over widths (``ks`` at one ``n``).

    ``schedule_mode`` picks k from n for an ``ns`` sweep; ``"explicit"`` uses
    ``explicit_ks`` point by point.  ``train`` holds overrides forwarded to
    :class:`TrainConfig` (``epochs``, learning rates, ``batch_size``) plus an
    optional network ``class`` and class parameter ``m``.
    """

    name: str
    kind: DivergenceKind
    pair: DistributionPair
    ns: tuple[int, ...] = DEFAULT_NS
    ks: Optional[tuple[int, ...]] = None
    schedule_mode: str = "experiment"
    explicit_ks: Optional[tuple[int, ...]] = None
    replicas: int = 10
    master_seed: int = 0
    train: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind.parse(self.kind))
        if not self.ns:
            raise ConfigError("sweep needs at least one n")
        if self.ks is not None:
            if len(self.ns) != 1 or not self.ks:
                raise ConfigError("a k sweep needs a non-empty ks list and exactly one n")
        if self.schedule_mode not in SCHEDULE_MODES + ("explicit",):
            raise ConfigError(f"unknown schedule_mode {self.schedule_mode!r}")
        if self.schedule_mode == "explicit" and (
            self.explicit_ks is None or len(self.explicit_ks) != len(self.ns)
        ):
            raise ConfigError("explicit schedule needs one k per n")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        extra = set(self.train) - TRAIN_FIELDS
        if extra:
            raise ConfigError(f"unknown train fields: {sorted(extra)}")

    @property
    def sweep_kind(self) -> str:
        return "k" if self.ks is not None else "n"

    def points(self) -> list[SweepPoint]:
        m = self.train.get("m")
        override = self.train.get("class")
        out = []
        if self.ks is not None:
            n = self.ns[0]
            pairs = [(n, k) for k in self.ks]
        elif self.schedule_mode == "explicit":
            pairs = list(zip(self.ns, self.explicit_ks))
        else:
            pairs = [(n, schedule(self.kind, n, self.schedule_mode, m).k) for n in self.ns]
        for n, k in pairs:
            if override is not None:
                spec = class_spec_from_dict(override)
            else:
                spec = _scheduled_spec(self.kind, k, m)
            out.append(SweepPoint(int(n), int(k), spec))
        return out

    def train_config(self, point: SweepPoint, seed: int) -> TrainConfig:
        opts = {key: self.train[key] for key in
                ("epochs", "lr_initial", "lr_late", "lr_switch_epoch", "batch_size") if key in self.train}
        return TrainConfig(self.kind, point.k, point.n, point.class_spec, seed=seed, **opts)

    def to_dict(self) -> dict:
        sweep = {"ns": list(self.ns)} if self.ks is None else {"n": self.ns[0], "ks": list(self.ks)}
        mode = {"explicit": list(self.explicit_ks)} if self.schedule_mode == "explicit" else self.schedule_mode
        return {
            "name": self.name, "kind": self.kind.value, "pair": pair_to_dict(self.pair),
            "sweep": sweep, "schedule_mode": mode, "replicas": self.replicas,
            "master_seed": self.master_seed, "train": dict(self.train),
        }


def _scheduled_spec(kind: DivergenceKind, k: int, m: Optional[float]) -> NetworkClassSpec:
    if kind is DivergenceKind.HELLINGER:
        if k < 3:
            raise ConfigError("squared Hellinger needs k >= 3 so that t = 1/log k < 1")
        return TruncatedStar(m)
    if k < 2:
        raise ConfigError("star network classes need k >= 2")
    return Star(m)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Parse the JSON config object; unknown fields are rejected."""
    try:
        return _config_from_dict(data)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - CONFIG_FIELDS
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    for req in ("kind", "pair"):
        if req not in data:
            raise ConfigError(f"config missing required field {req!r}")
    sweep = data.get("sweep", {"ns": list(DEFAULT_NS)})
    if not isinstance(sweep, dict) or set(sweep) not in ({"ns"}, {"n", "ks"}):
        raise ConfigError("sweep must be {'ns': [...]} or {'n': N, 'ks': [...]}")
    if "ks" in sweep:
        ns, ks = (int(sweep["n"]),), tuple(int(k) for k in sweep["ks"])
    else:
        ns, ks = tuple(int(n) for n in sweep["ns"]), None
    mode = data.get("schedule_mode", "experiment")
    explicit = None
    if isinstance(mode, dict):
        if set(mode) != {"explicit"}:
            raise ConfigError("schedule_mode object must be {'explicit': [k, ...]}")
        explicit = tuple(int(k) for k in mode["explicit"])
        mode = "explicit"
    train_opts = dict(data.get("train", {}))
    if "class" in train_opts:
        class_spec_from_dict(train_opts["class"])  # validate early
    return ExperimentConfig(
        name=str(data.get("name", "experiment")),
        kind=DivergenceKind.parse(data["kind"]),
        pair=pair_from_dict(data["pair"]),
        ns=ns, ks=ks, schedule_mode=mode, explicit_ks=explicit,
        replicas=int(data.get("replicas", 10)),
        master_seed=int(data.get("master_seed", 0)),
        train=train_opts,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_dict(data)


# Records ------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    name: str
    kind: str
    n: int
    k: int
    seed: int
    estimate: float
    ground_truth: float
    abs_error: float
    wall_time_s: float
    error_msg: str = ""

    @property
    def ok(self) -> bool:
        return not self.error_msg

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.n, self.k, self.seed)


RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))


def _run_one(task) -> tuple[RunRecord, Optional[TrainAudit]]:
    config, point, seed, truth = task
    try:
        result = train(config.train_config(point, seed), config.pair)
    except Exception as exc:  # noqa: BLE001 - a failed record is reported in its row
        log.warning("record n=%d k=%d seed=%d failed: %s", point.n, point.k, seed, exc)
        return RunRecord(config.name, config.kind.value, point.n, point.k, seed,
                         math.nan, truth, math.nan, 0.0, f"{type(exc).__name__}: {exc}"), None
    return RunRecord(config.name, config.kind.value, point.n, point.k, seed,
                     result.estimate, truth, abs(result.estimate - truth), result.wall_time), result.audit


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    existing: Sequence[RunRecord] = (),
    sink=None,
    on_audit=None,
) -> list[RunRecord]:
    """Run every (sweep point, replica) pair and return records in that order.

    Successful records in ``existing`` with a matching ``(n, k, seed)`` are
    reused instead of retrained.  ``sink(record)`` is called as each new
    record completes (in completion order), and ``on_audit(record, audit)``
    receives the training audit of every newly trained record (``None`` for
    failures).
    """
    truth = ground_truth(config.kind, config.pair).value
    done = {rec.key: rec for rec in existing if rec.ok}
    slots: list[Optional[RunRecord]] = []
    tasks = []
    for point in config.points():
        for r in range(config.replicas):
            seed = replica_seed(config.master_seed, r)
            prev = done.get((point.n, point.k, seed))
            if prev is not None:
                slots.append(prev)
            else:
                tasks.append((len(slots), (config, point, seed, truth)))
                slots.append(None)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = zip((idx for idx, _ in tasks), pool.map(_run_one, [t for _, t in tasks]))
            for idx, (rec, audit) in results:
                _deliver(slots, idx, rec, audit, sink, on_audit)
    else:
        for idx, task in tasks:
            _deliver(slots, idx, *_run_one(task), sink, on_audit)
    return list(slots)


def _deliver(slots, idx, rec, audit, sink, on_audit):
    slots[idx] = rec
    if sink is not None:
        sink(rec)
    if on_audit is not None:
        on_audit(rec, audit)


@dataclass(frozen=True)
class SweepSummary:
    name: str
    kind: str
    n: int
    k: int
    replicas: int
    mean_estimate: float
    std_estimate: float
    mean_abs_error: float
    ground_truth: float


SUMMARY_FIELDS = tuple(f.name for f in fields(SweepSummary))


def aggregate(records: Iterable[RunRecord]) -> list[SweepSummary]:
    """Mean / sample std of the estimate and mean absolute error per ``(n, k)``.

    Failed records are excluded.  Rows are sorted by ``(n, k)``.
    """
    groups: dict[tuple[int, int], list[RunRecord]] = {}
    for rec in records:
        if rec.ok:
            groups.setdefault((rec.n, rec.k), []).append(rec)
    if not groups:
        raise ValueError("no successful records to aggregate")
    out = []
    for (n, k), recs in sorted(groups.items()):
        est = np.array([r.estimate for r in recs])
        err = np.array([r.abs_error for r in recs])
        std = float(est.std(ddof=1)) if len(est) > 1 else 0.0
        out.append(SweepSummary(recs[0].name, recs[0].kind, n, k, len(recs), float(est.mean()), std,
                                float(err.mean()), recs[0].ground_truth))
    return out


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int


def fit_rate(summaries: Sequence[SweepSummary]) -> RateFit:
    """Least-squares line through ``(log n, log mean_abs_error)``."""
    if len(summaries) < 2:
        raise DegenerateFit("need at least two sweep points")
    n = np.array([s.n for s in summaries], dtype=float)
    err = np.array([s.mean_abs_error for s in summaries], dtype=float)
    if np.any(~(err > 0)) or not np.all(np.isfinite(err)):
        raise DegenerateFit("every mean absolute error must be positive and finite")
    if np.unique(n).size < 2:
        raise DegenerateFit("need at least two distinct sample sizes")
    x, y = np.log(n), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), min(1.0, max(0.0, r2)), len(summaries))


# CSV --------------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: Sequence[RunRecord] | Sequence[SweepSummary], path, kind: str = "records",
             timing: bool = True) -> Path:
    """Write records or summaries as CSV with round-trip-exact floats.

    Summaries also get a gnuplot script next to the CSV.  ``timing=False``
    writes ``wall_time_s`` as 0.0 so that output is byte-reproducible.
    """
    path = Path(path)
    header = RECORD_FIELDS if kind == "records" else SUMMARY_FIELDS
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                values = asdict(row)
                if not timing and "wall_time_s" in values:
                    values["wall_time_s"] = 0.0
                writer.writerow([_fmt(values[h]) for h in header])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    if kind == "summaries":
        write_plot_script(path)
    return path


def append_record(path, record: RunRecord, timing: bool = True) -> None:
    """Append one record, writing the header if the file is new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    values = asdict(record)
    if not timing:
        values["wall_time_s"] = 0.0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(RECORD_FIELDS)
        writer.writerow([_fmt(values[h]) for h in RECORD_FIELDS])
        fh.flush()
        os.fsync(fh.fileno())


_CASTS = {"int": int, "float": float, "str": str}


def _parse_row(cls, row: dict):
    return cls(**{f.name: _CASTS[f.type](row[f.name]) for f in fields(cls)})


def read_csv(path, kind: str = "records") -> list:
    cls = RunRecord if kind == "records" else SweepSummary
    header = RECORD_FIELDS if kind == "records" else SUMMARY_FIELDS
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != header:
            raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [_parse_row(cls, row) for row in reader]


def write_plot_script(summary_csv) -> Path:
    """Gnuplot script plotting estimate vs n and log-log error vs n."""
    summary_csv = Path(summary_csv)
    script = summary_csv.with_suffix(".gp")
    name = summary_csv.name
    script.write_text(
        f"""set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 1000,420
set output '{summary_csv.stem}.png'
set multiplot layout 1,2
set logscale x
set xlabel 'n'
set ylabel 'estimate'
plot '{name}' using 3:6:7 with yerrorlines title 'mean estimate', \\
     '{name}' using 3:9 with lines dashtype 2 title 'ground truth'
set logscale y
set ylabel 'mean |error|'
plot '{name}' using 3:8 with linespoints title 'mean abs error'
unset multiplot
"""
    )
    return script
