"""Condition matrix, seeded batch execution and consolidation into the analysis dataset."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .engine import RunLog, RunResult, mix_seed, run
from .hallucination import CONFIGURATIONS, PROBABILITIES, HIConfig, HIConfigError, Persistence
from .world import ScenarioConfig

log = logging.getLogger(__name__)

DEFAULT_BASE_SEED = 2024
BASE_SEED_ENV = "HALLUFAULT_BASE_SEED"
DATASET_HEADER = (
    "run_id,condition_id,module_activation,hallucination_type,affected_domain,configuration,"
    "probability,persistence,outcome,accident,min_distance_m,seed,valid"
).split(",")


def default_base_seed() -> int:
    raw = os.environ.get(BASE_SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_BASE_SEED
    try:
        return int(raw, 0)
    except ValueError:
        raise ValueError(f"{BASE_SEED_ENV} must be an integer, got {raw!r}") from None


class BatchError(RuntimeError):
    def __init__(self, condition_id: int, run_index: int, attempts: int, last_error: str):
        super().__init__(
            f"condition {condition_id} run {run_index}: simulator failed {attempts} times in a row "
            f"(last error: {last_error})"
        )
        self.condition_id = condition_id
        self.run_index = run_index


@dataclass(frozen=True)
class Condition:
    condition_id: int
    hi: HIConfig

    def to_dict(self) -> dict:
        return {"condition_id": self.condition_id, "hi": self.hi.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "Condition":
        return cls(int(data["condition_id"]), HIConfig.from_dict(data["hi"]))


def condition_matrix() -> list[Condition]:
    """Baseline (id 0) followed by every configuration x probability x persistence."""
    out = [Condition(0, HIConfig.off())]
    cid = 1
    for htype, labels in CONFIGURATIONS.items():
        for label in labels:
            for p in PROBABILITIES:
                for pers in (Persistence.Intermittent, Persistence.Permanent):
                    out.append(Condition(cid, HIConfig.make(htype.value, label, p, pers.value)))
                    cid += 1
    return out


def _fmt_float(x: float | None) -> str:
    if x is None or not math.isfinite(x):
        return ""
    return repr(float(x))


@dataclass(frozen=True)
class RunRecord:
    run_id: int
    condition_id: int
    module_activation: str
    hallucination_type: str | None
    affected_domain: str | None
    configuration: str | None
    probability: float | None
    persistence: str
    outcome: str | None
    accident: bool
    min_distance: float
    seed: int
    valid: bool

    @classmethod
    def from_result(cls, run_id: int, condition_id: int, hi: HIConfig, result: RunResult) -> "RunRecord":
        outcome = result.outcome.value if result.outcome is not None else None
        return cls(
            run_id=run_id,
            condition_id=condition_id,
            module_activation=hi.module_activation,
            hallucination_type=hi.type.value if hi.type else None,
            affected_domain=hi.domain.value if hi.domain else None,
            configuration=hi.configuration.label if hi.configuration else None,
            probability=hi.probability,
            persistence=hi.persistence.value,
            outcome=outcome,
            accident=outcome == "Collision",
            min_distance=result.min_distance,
            seed=result.log.seed,
            valid=result.valid,
        )

    def to_row(self) -> list[str]:
        return [
            str(self.run_id),
            str(self.condition_id),
            self.module_activation,
            self.hallucination_type or "",
            self.affected_domain or "",
            self.configuration or "",
            _fmt_float(self.probability),
            self.persistence,
            self.outcome or "",
            "true" if self.accident else "false",
            _fmt_float(self.min_distance),
            str(self.seed),
            "true" if self.valid else "false",
        ]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "RunRecord":
        def opt(key):
            return row[key] or None

        def flag(key):
            v = row[key].strip().lower()
            if v not in ("true", "false"):
                raise ValueError(f"{key} must be true/false, got {row[key]!r}")
            return v == "true"

        prob = row["probability"]
        md = row["min_distance_m"]
        return cls(
            run_id=int(row["run_id"]),
            condition_id=int(row["condition_id"]),
            module_activation=row["module_activation"],
            hallucination_type=opt("hallucination_type"),
            affected_domain=opt("affected_domain"),
            configuration=opt("configuration"),
            probability=float(prob) if prob else None,
            persistence=row["persistence"],
            outcome=opt("outcome"),
            accident=flag("accident"),
            min_distance=float(md) if md else math.inf,
            seed=int(row["seed"]),
            valid=flag("valid"),
        )


def dataset_to_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r in records:
        w.writerow(r.to_row())
    return buf.getvalue()


def write_dataset(records: Iterable[RunRecord], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dataset_to_csv(records), encoding="utf-8")
    return path


def read_dataset(path: str | Path) -> list[RunRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DATASET_HEADER:
            raise ValueError(f"{path}: unexpected dataset header {reader.fieldnames}")
        return [RunRecord.from_row(row) for row in reader]


@dataclass
class BatchParams:
    runs_per_condition: int = 50
    baseline_runs: int = 1000
    base_seed: int = field(default_factory=default_base_seed)
    # attempts allowed per run before giving up is 10x this
    retry_budget: int = 3
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def validate(self) -> None:
        if self.runs_per_condition < 1 or self.baseline_runs < 1:
            raise ValueError("runs_per_condition and baseline_runs must be >= 1")
        if self.retry_budget < 1:
            raise ValueError("retry_budget must be >= 1")

    def to_json(self, matrix: Sequence[Condition] | None = None) -> str:
        data = asdict(self)
        data["scenario"] = self.scenario.to_dict()
        if matrix is not None:
            data["matrix"] = [c.to_dict() for c in matrix]
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> tuple["BatchParams", list[Condition] | None]:
        data = json.loads(text)
        matrix = data.pop("matrix", None)
        scenario = ScenarioConfig.from_dict(data.pop("scenario", {}))
        known = {"runs_per_condition", "baseline_runs", "base_seed", "retry_budget"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown batch parameter(s): {', '.join(sorted(unknown))}")
        params = cls(scenario=scenario, **data)
        params.validate()
        conds = [Condition.from_dict(c) for c in matrix] if matrix is not None else None
        return params, conds


@dataclass(frozen=True)
class _Task:
    run_id: int
    condition: Condition
    run_index: int
    base_seed: int
    max_attempts: int
    scenario: ScenarioConfig
    log_dir: str | None
    keep_log: bool


def log_prefix(log_dir: str | Path, condition_id: int, run_index: int) -> Path:
    return Path(log_dir) / f"c{condition_id:03d}_r{run_index:04d}"


def _execute(task: _Task) -> tuple[RunRecord, RunLog | None, int]:
    cond = task.condition
    last = ""
    for attempt in range(task.max_attempts):
        seed = mix_seed(task.base_seed, cond.condition_id, task.run_index, attempt)
        result = run(task.scenario, cond.hi, seed)
        extra = {"condition_id": cond.condition_id, "run_index": task.run_index,
                 "run_id": task.run_id, "attempt": attempt}
        if result.valid:
            record = RunRecord.from_result(task.run_id, cond.condition_id, cond.hi, result)
            if task.log_dir is not None:
                result.write(log_prefix(task.log_dir, cond.condition_id, task.run_index), **extra)
            return record, (result.log if task.keep_log else None), attempt
        last = result.error
        if task.log_dir is not None:
            # kept for the audit trail; consolidation drops invalid sidecars
            prefix = log_prefix(task.log_dir, cond.condition_id, task.run_index)
            result.write(prefix.with_name(prefix.name + f"_invalid{attempt}"), **extra)
    raise BatchError(cond.condition_id, task.run_index, task.max_attempts, last)


@dataclass
class BatchOutput:
    records: list[RunRecord]
    logs: list[RunLog | None]
    retries: int = 0

    def pairs(self) -> list[tuple[RunLog | None, RunRecord]]:
        return list(zip(self.logs, self.records))


def run_batch(
    matrix: Sequence[Condition],
    runs_per_condition: int,
    baseline_runs: int,
    base_seed: int | None = None,
    parallelism: int = 1,
    scenario: ScenarioConfig | None = None,
    log_dir: str | Path | None = None,
    keep_logs: bool = False,
    retry_budget: int = 3,
) -> BatchOutput:
    """Execute every condition; output order is (condition_id, run_index) whatever ``parallelism`` is.

    Invalid executions are re-run with a fresh seed derived from the attempt
    number until a valid one is obtained.
    """
    if runs_per_condition < 1 or baseline_runs < 1:
        raise ValueError("runs_per_condition and baseline_runs must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    ids = [c.condition_id for c in matrix]
    if len(set(ids)) != len(ids):
        raise ValueError("condition ids must be unique")
    base_seed = default_base_seed() if base_seed is None else base_seed
    scenario = scenario or ScenarioConfig()
    scenario.validate()
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    tasks = []
    for cond in sorted(matrix, key=lambda c: c.condition_id):
        n = baseline_runs if cond.condition_id == 0 else runs_per_condition
        for i in range(n):
            tasks.append(_Task(len(tasks), cond, i, base_seed, 10 * retry_budget, scenario,
                               None if log_dir is None else str(log_dir), keep_logs))
    if parallelism == 1:
        results = [_execute(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (parallelism * 8))
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_execute, tasks, chunksize=chunk))
    return BatchOutput(
        records=[r for r, _, _ in results],
        logs=[lg for _, lg, _ in results],
        retries=sum(a for _, _, a in results),
    )


@dataclass
class Consolidation:
    records: list[RunRecord]
    skipped: list[tuple[str, str]]
    invalid: int

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(r.module_activation for r in self.records)
        return {"OFF": c.get("OFF", 0), "ON": c.get("ON", 0)}


def _record_from_sidecar(data: dict) -> RunRecord:
    for key in ("condition_id", "run_id", "seed", "hi", "outcome", "valid"):
        if key not in data:
            raise ValueError(f"missing key {key!r}")
    hi = HIConfig.from_dict(data["hi"])
    md = data.get("min_distance")
    outcome = data["outcome"]
    if outcome not in ("Crossed", "Collision", "Halted", None):
        raise ValueError(f"unknown outcome {outcome!r}")
    return RunRecord(
        run_id=int(data["run_id"]),
        condition_id=int(data["condition_id"]),
        module_activation=hi.module_activation,
        hallucination_type=hi.type.value if hi.type else None,
        affected_domain=hi.domain.value if hi.domain else None,
        configuration=hi.configuration.label if hi.configuration else None,
        probability=hi.probability,
        persistence=hi.persistence.value,
        outcome=outcome,
        accident=outcome == "Collision",
        min_distance=math.inf if md is None else float(md),
        seed=int(data["seed"]),
        valid=bool(data["valid"]),
    )


def consolidate(log_dir: str | Path) -> Consolidation:
    """One record per valid run found in ``log_dir``, ordered by run_id."""
    log_dir = Path(log_dir)
    if not log_dir.is_dir():
        raise FileNotFoundError(f"log directory not found: {log_dir}")
    records, skipped, invalid = [], [], 0
    sidecars = sorted(log_dir.glob("*.json"))
    if not sidecars:
        log.warning("no run sidecars in %s; dataset is empty", log_dir)
    for path in sidecars:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise ValueError("sidecar is not a JSON object")
            rec = _record_from_sidecar(data)
        except (ValueError, KeyError, TypeError, HIConfigError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            skipped.append((path.name, str(exc)))
            continue
        if not rec.valid:
            invalid += 1
            continue
        records.append(rec)
    records.sort(key=lambda r: r.run_id)
    seen = Counter(r.run_id for r in records)
    dup = [k for k, v in seen.items() if v > 1]
    if dup:
        raise ValueError(f"duplicate run_id(s) in {log_dir}: {dup[:5]}")
    return Consolidation(records, skipped, invalid)
