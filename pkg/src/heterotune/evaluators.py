"""Evaluation backends: surrogate model, replay, synthetic oracles, commands.

Every evaluator maps a configuration to its energy efficiency in MB/J and
keeps an atomic count of evaluate() calls. Deduplication of repeated
configurations is the searcher's job, not the evaluator's.

The synthetic oracles produce full raw measurements from closed-form cost
models, so generated datasets replay to exactly the same efficiencies.
"""
from __future__ import annotations

import hashlib
import math
import re
import shlex
import subprocess
import threading
from typing import Any, Mapping

from . import metrics
from .metrics import (
    MeasurementLogError,
    RawMeasurement,
    append_measurement,
    parse_measurement_row,
    read_measurement_log,
)
from .space import Configuration, ParameterSpace
from .surrogate import BoostedModel, load_model, predict_boosted

ELEMENT_BYTES = 4
MB = 1e6


class NotRecordedError(LookupError):
    """Replay was asked for a configuration missing from its log."""


class AmbiguousLogError(ValueError):
    """A replay log records the same configuration more than once."""


class CommandExecutionError(RuntimeError):
    """An external measurement command failed.

    Attributes:
        command: the substituted command line.
        returncode: process exit status, or None for timeouts.
        stdout, stderr: captured output.
    """

    def __init__(
        self,
        message: str,
        command: str,
        returncode: int | None = None,
        stdout: str = "",
        stderr: str = "",
    ):
        super().__init__(message)
        self.command = command
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr


class Evaluator:
    """Base class: counted, optionally serialized evaluation."""

    def __init__(self, serialize: bool = False):
        self._count = 0
        self._count_lock = threading.Lock()
        self._exec_lock = threading.Lock() if serialize else None

    @property
    def evaluation_count(self) -> int:
        """Number of evaluate() calls so far."""
        with self._count_lock:
            return self._count

    def evaluate(self, config: Configuration) -> float:
        """Energy efficiency of `config` in MB/J."""
        with self._count_lock:
            self._count += 1
        if self._exec_lock is not None:
            with self._exec_lock:
                return self._evaluate(config)
        return self._evaluate(config)

    def _evaluate(self, config: Configuration) -> float:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class ModelEvaluator(Evaluator):
    """Predicts efficiency with a trained boosted regression tree model."""

    def __init__(self, model: BoostedModel, space: ParameterSpace, source: str | None = None):
        super().__init__()
        if tuple(model.feature_names) != space.names:
            raise ValueError(
                f"model features {model.feature_names!r} do not match space "
                f"parameters {space.names!r}"
            )
        self.model = model
        self.space = space
        self.source = source

    @classmethod
    def from_file(cls, path: str, space: ParameterSpace) -> "ModelEvaluator":
        return cls(load_model(path), space, source=path)

    def _evaluate(self, config: Configuration) -> float:
        return predict_boosted(self.model, self.space.encode(config))

    def describe(self) -> str:
        origin = self.source or "in-memory"
        return f"model:{origin}({len(self.model.stages)} stages)"


class ReplayEvaluator(Evaluator):
    """Replays efficiencies from previously recorded measurements."""

    def __init__(
        self,
        space: ParameterSpace,
        measurements: list[RawMeasurement],
        source: str | None = None,
    ):
        super().__init__()
        self.space = space
        self.source = source
        self._by_key: dict[tuple[Any, ...], RawMeasurement] = {}
        for m in measurements:
            key = space.config_key(m.config)
            if key in self._by_key:
                raise AmbiguousLogError(
                    f"duplicate measurement for configuration {m.config!r}"
                )
            self._by_key[key] = m

    @classmethod
    def from_log(cls, path: str, space: ParameterSpace) -> "ReplayEvaluator":
        return cls(space, read_measurement_log(path, space), source=path)

    def __len__(self) -> int:
        return len(self._by_key)

    def measurement_for(self, config: Configuration) -> RawMeasurement:
        key = self.space.config_key(config)
        try:
            return self._by_key[key]
        except KeyError:
            raise NotRecordedError(
                f"configuration {config!r} is not recorded"
            ) from None

    def _evaluate(self, config: Configuration) -> float:
        return metrics.energy_efficiency(self.measurement_for(config))

    def describe(self) -> str:
        origin = self.source or "in-memory"
        return f"replay:{origin}({len(self._by_key)} rows)"


# ----- synthetic oracles ------------------------------------------------------


def _rugged_factor(seed: int, config: Mapping[str, Any], unit: str, amplitude: float) -> float:
    """Deterministic multiplicative jitter in [1 - amplitude, 1 + amplitude)."""
    if amplitude == 0:
        return 1.0
    key = "|".join(f"{k}={config[k]}" for k in sorted(config)) + f"|{unit}|{seed}"
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    unit_noise = int.from_bytes(digest, "big") / 2**63 - 1.0
    return 1.0 + amplitude * unit_noise


def _require_split(config: Mapping[str, Any], name: str) -> int:
    value = config.get(name)
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 100:
        raise ValueError(f"{name} must be an integer in [0, 100], got {value!r}")
    return value


class PccOracle(Evaluator):
    """Cost model of a row-partitioned all-pairs correlation on CPU + GPU.

    Row i is compared against every later row, so early rows carry more
    work: the CPU takes the first ceil(CPU-W * rows / 100) rows and the GPU
    the rest, plus a host-to-device transfer of the whole matrix whenever it
    participates. Unit energies are a constant draw times the unit's busy
    time.
    """

    name = "ida-pcc"

    def __init__(
        self,
        rows: int = 1024,
        cols: int = 8192,
        cpu_op_cost_s: float = 2e-9,
        acc_op_cost_s: float | None = None,
        transfer_bandwidth_b_s: float = 1e9,
        cpu_power_w: float = 105.0,
        acc_power_w: float = 250.0,
        rugged_amplitude: float = 0.0,
        seed: int = 0,
    ):
        super().__init__()
        if rows < 2 or cols < 1:
            raise ValueError("need at least 2 rows and 1 column")
        if cpu_op_cost_s <= 0 or transfer_bandwidth_b_s <= 0:
            raise ValueError("costs and bandwidth must be positive")
        if cpu_power_w <= 0 or acc_power_w <= 0:
            raise ValueError("power draws must be positive")
        if not 0 <= rugged_amplitude < 1:
            raise ValueError("rugged_amplitude must be in [0, 1)")
        self.rows = rows
        self.cols = cols
        self.cpu_op_cost_s = cpu_op_cost_s
        self.acc_op_cost_s = (
            acc_op_cost_s if acc_op_cost_s is not None else cpu_op_cost_s / 20.0
        )
        self.transfer_bandwidth_b_s = transfer_bandwidth_b_s
        self.cpu_power_w = cpu_power_w
        self.acc_power_w = acc_power_w
        self.rugged_amplitude = rugged_amplitude
        self.seed = seed

    def comparison_split(self, cpu_share_percent: int) -> tuple[int, int]:
        """Pair comparisons done by (cpu, acc) for a CPU row share."""
        rows = self.rows
        cpu_rows = -(-cpu_share_percent * rows // 100)  # ceil
        cpu = cpu_rows * (rows - 1) - cpu_rows * (cpu_rows - 1) // 2
        total = rows * (rows - 1) // 2
        return cpu, total - cpu

    def measure(self, config: Configuration) -> RawMeasurement:
        split = _require_split(config, "CPU-W")
        cpu_comparisons, acc_comparisons = self.comparison_split(split)
        total_comparisons = cpu_comparisons + acc_comparisons
        workload_mb = self.rows * self.cols * ELEMENT_BYTES / MB

        cpu_time = cpu_comparisons * self.cols * self.cpu_op_cost_s
        acc_time = acc_comparisons * self.cols * self.acc_op_cost_s
        if acc_comparisons > 0:
            acc_time += self.rows * self.cols * ELEMENT_BYTES / self.transfer_bandwidth_b_s
        if self.rugged_amplitude > 0:
            if cpu_time > 0:
                cpu_time *= _rugged_factor(self.seed, config, "cpu", self.rugged_amplitude)
            if acc_time > 0:
                acc_time *= _rugged_factor(self.seed, config, "acc", self.rugged_amplitude)

        if cpu_comparisons == 0:
            cpu_workload = 0.0
        elif acc_comparisons == 0:
            cpu_workload = workload_mb
        else:
            cpu_workload = workload_mb * (cpu_comparisons / total_comparisons)
        acc_workload = workload_mb - cpu_workload

        return RawMeasurement(
            config=dict(config),
            workload_mb=workload_mb,
            cpu_time_s=cpu_time,
            acc_time_s=acc_time,
            cpu_energy_j=self.cpu_power_w * cpu_time,
            acc_energy_j=self.acc_power_w * acc_time,
            cpu_workload_mb=cpu_workload,
            acc_workload_mb=acc_workload,
        )

    def _evaluate(self, config: Configuration) -> float:
        return metrics.energy_efficiency(self.measure(config))

    def describe(self) -> str:
        return f"oracle:{self.name}(rows={self.rows},cols={self.cols})"


class PatternMatchOracle(Evaluator):
    """Cost model of a linearly partitioned pattern-matching scan on
    CPU + many-core accelerator.

    Each unit streams its workload share at a rate set by its thread count
    and affinity; both units report the wall duration of the hybrid run as
    their time, while energy accrues only over a unit's own busy interval.
    A seeded hash jitters the busy times, which roughens the efficiency
    landscape without breaking determinism.
    """

    name = "emil-pm"

    def __init__(
        self,
        input_mb: float = 3170.0,
        cpu_base_rate_mb_s: float = 5200.0,
        acc_base_rate_mb_s: float = 11500.0,
        cpu_thread_scale: Mapping[int, float] | None = None,
        acc_thread_scale: Mapping[int, float] | None = None,
        cpu_affinity_scale: Mapping[str, float] | None = None,
        acc_affinity_scale: Mapping[str, float] | None = None,
        cpu_power_w: float = 115.0,
        acc_power_w: float = 300.0,
        rugged_amplitude: float = 0.03,
        seed: int = 0,
    ):
        super().__init__()
        if input_mb <= 0 or cpu_base_rate_mb_s <= 0 or acc_base_rate_mb_s <= 0:
            raise ValueError("workload and base rates must be positive")
        if cpu_power_w <= 0 or acc_power_w <= 0:
            raise ValueError("power draws must be positive")
        if not 0 <= rugged_amplitude < 1:
            raise ValueError("rugged_amplitude must be in [0, 1)")
        self.input_mb = input_mb
        self.cpu_base_rate_mb_s = cpu_base_rate_mb_s
        self.acc_base_rate_mb_s = acc_base_rate_mb_s
        self.cpu_thread_scale = dict(
            cpu_thread_scale if cpu_thread_scale is not None
            else {12: 0.55, 24: 1.00, 36: 0.88, 48: 0.78}
        )
        self.acc_thread_scale = dict(
            acc_thread_scale if acc_thread_scale is not None
            else {60: 0.40, 120: 0.72, 180: 0.92, 240: 1.00}
        )
        self.cpu_affinity_scale = dict(
            cpu_affinity_scale if cpu_affinity_scale is not None
            else {"none": 0.90, "scatter": 1.00, "compact": 0.80}
        )
        self.acc_affinity_scale = dict(
            acc_affinity_scale if acc_affinity_scale is not None
            else {"balanced": 1.00, "scatter": 0.93, "compact": 0.85}
        )
        for table_name in ("cpu_thread_scale", "acc_thread_scale",
                           "cpu_affinity_scale", "acc_affinity_scale"):
            table = getattr(self, table_name)
            if not table or any(v <= 0 for v in table.values()):
                raise ValueError(f"{table_name} must map to positive factors")
        self.cpu_power_w = cpu_power_w
        self.acc_power_w = acc_power_w
        self.rugged_amplitude = rugged_amplitude
        self.seed = seed

    def _lookup(self, table: Mapping[Any, float], value: Any, label: str) -> float:
        try:
            return table[value]
        except (KeyError, TypeError):
            raise ValueError(
                f"{label} {value!r} outside the modeled domain "
                f"{sorted(table, key=str)}"
            ) from None

    def unit_rates(self, config: Configuration) -> tuple[float, float]:
        """Effective (cpu, acc) scan rates in MB/s for a configuration."""
        cpu_rate = (
            self.cpu_base_rate_mb_s
            * self._lookup(self.cpu_thread_scale, config.get("CPU-T"), "CPU-T")
            * self._lookup(self.cpu_affinity_scale, config.get("CPU-A"), "CPU-A")
        )
        acc_rate = (
            self.acc_base_rate_mb_s
            * self._lookup(self.acc_thread_scale, config.get("ACC-T"), "ACC-T")
            * self._lookup(self.acc_affinity_scale, config.get("ACC-A"), "ACC-A")
        )
        return cpu_rate, acc_rate

    def measure(self, config: Configuration) -> RawMeasurement:
        split = _require_split(config, "CPU-W")
        cpu_rate, acc_rate = self.unit_rates(config)
        cpu_workload = self.input_mb * split / 100.0
        acc_workload = self.input_mb - cpu_workload

        cpu_busy = 0.0
        if split > 0:
            cpu_busy = (cpu_workload / cpu_rate) * _rugged_factor(
                self.seed, config, "cpu", self.rugged_amplitude
            )
        acc_busy = 0.0
        if split < 100:
            acc_busy = (acc_workload / acc_rate) * _rugged_factor(
                self.seed, config, "acc", self.rugged_amplitude
            )
        duration = max(cpu_busy, acc_busy)

        return RawMeasurement(
            config=dict(config),
            workload_mb=self.input_mb,
            cpu_time_s=duration if split > 0 else 0.0,
            acc_time_s=duration if split < 100 else 0.0,
            cpu_energy_j=self.cpu_power_w * cpu_busy,
            acc_energy_j=self.acc_power_w * acc_busy,
            cpu_workload_mb=cpu_workload,
            acc_workload_mb=acc_workload,
        )

    def _evaluate(self, config: Configuration) -> float:
        return metrics.energy_efficiency(self.measure(config))

    def describe(self) -> str:
        return f"oracle:{self.name}(input_mb={self.input_mb})"


ORACLE_FAMILIES = {
    PccOracle.name: PccOracle,
    PatternMatchOracle.name: PatternMatchOracle,
}


def make_oracle(name: str, **overrides: Any) -> Evaluator:
    """Instantiate a synthetic oracle by family name."""
    try:
        family = ORACLE_FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown oracle {name!r}; available: {', '.join(sorted(ORACLE_FAMILIES))}"
        ) from None
    return family(**overrides)


# ----- external commands ------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")


class CommandEvaluator(Evaluator):
    """Runs an external measurement command per configuration.

    Parameter values are substituted for "{PARAM-NAME}" placeholders. The
    command must print a measurement row (measurement-log columns, comma
    separated) on stdout; the last parsable row for the requested
    configuration wins. Rows can be appended to a log for later training.
    Invocations are serialized unless `parallel` is set.
    """

    def __init__(
        self,
        template: str,
        space: ParameterSpace,
        log_path: str | None = None,
        timeout_s: float = 60.0,
        parallel: bool = False,
    ):
        super().__init__(serialize=not parallel)
        names = set(space.names)
        unknown = [p for p in _PLACEHOLDER.findall(template) if p not in names]
        if unknown:
            raise ValueError(
                f"template references unknown parameter(s): {', '.join(unknown)}"
            )
        if timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        self.template = template
        self.space = space
        self.log_path = log_path
        self.timeout_s = timeout_s

    def substitute(self, config: Configuration) -> str:
        def fill(match: re.Match) -> str:
            value = config[match.group(1)]
            return value if isinstance(value, str) else str(value)

        return _PLACEHOLDER.sub(fill, self.template)

    def _parse_output(self, stdout: str, config: Configuration) -> RawMeasurement | None:
        wanted = self.space.config_key(config)
        found = None
        for line in stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                m = parse_measurement_row(line.split(","), self.space)
            except MeasurementLogError:
                continue
            if self.space.config_key(m.config) == wanted:
                found = m  # last matching line wins
        return found

    def _evaluate(self, config: Configuration) -> float:
        command = self.substitute(config)
        try:
            proc = subprocess.run(
                shlex.split(command),
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise CommandExecutionError(
                f"command timed out after {self.timeout_s}s: {command}",
                command,
                stdout=(exc.stdout or b"").decode() if isinstance(exc.stdout, bytes)
                else (exc.stdout or ""),
                stderr=(exc.stderr or b"").decode() if isinstance(exc.stderr, bytes)
                else (exc.stderr or ""),
            ) from exc
        except OSError as exc:
            raise CommandExecutionError(
                f"cannot run command: {exc}", command
            ) from exc
        if proc.returncode != 0:
            raise CommandExecutionError(
                f"command exited with status {proc.returncode}: {command}",
                command,
                returncode=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        m = self._parse_output(proc.stdout, config)
        if m is None:
            raise CommandExecutionError(
                f"no measurement row for the requested configuration on stdout: {command}",
                command,
                returncode=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        if self.log_path:
            append_measurement(self.log_path, self.space, m)
        return metrics.energy_efficiency(m)

    def describe(self) -> str:
        return f"cmd:{self.template}"


# ----- CLI-style evaluator specs ----------------------------------------------


def make_evaluator(
    spec: str,
    space: ParameterSpace,
    command_log: str | None = None,
    command_timeout_s: float = 60.0,
) -> Evaluator:
    """Build an evaluator from a spec string.

    Accepted forms: "model:PATH", "replay:PATH", "oracle:NAME",
    "cmd:TEMPLATE".
    """
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ValueError(
            f"evaluator spec {spec!r} must look like kind:argument"
        )
    if kind == "model":
        return ModelEvaluator.from_file(rest, space)
    if kind == "replay":
        return ReplayEvaluator.from_log(rest, space)
    if kind == "oracle":
        return make_oracle(rest)
    if kind == "cmd":
        return CommandEvaluator(
            rest, space, log_path=command_log, timeout_s=command_timeout_s
        )
    raise ValueError(
        f"unknown evaluator kind {kind!r}; expected model, replay, oracle or cmd"
    )
