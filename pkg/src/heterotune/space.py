"""Discrete configuration spaces for heterogeneous-system tuning.

A space is an ordered list of named parameters. Numeric parameters carry an
ordered integer domain, categorical parameters carry an ordered label list
whose integer codes are the label positions. A parameter may be derived as
the complement-to-100 of another parameter (workload split percentages),
in which case it contributes no free dimension to the search.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator, Mapping

import yaml

KIND_RANGE = "range"
KIND_LEVELS = "levels"
KIND_CATEGORICAL = "categorical"
_NUMERIC_KINDS = (KIND_RANGE, KIND_LEVELS)
_ALL_KINDS = (KIND_RANGE, KIND_LEVELS, KIND_CATEGORICAL)

COMPLEMENT_TOTAL = 100

# Probability that a numeric move steps to an adjacent level instead of a
# uniformly drawn one.
ADJACENT_MOVE_PROBABILITY = 0.5

#: A configuration is a plain mapping from parameter name to value. Numeric
#: parameters hold ints, categorical parameters hold their labels.
Configuration = dict[str, Any]

#: Encoded configuration: one float per parameter, in space order.
FeatureVector = tuple[float, ...]


class SpaceDefinitionError(ValueError):
    """A space definition file or parameter set is malformed."""


class EncodingError(ValueError):
    """A configuration cannot be encoded or decoded against its space."""


class NoNeighborError(RuntimeError):
    """No single-parameter move is possible in this space."""


@dataclass(frozen=True)
class Parameter:
    """One tunable dimension of a configuration space.

    Attributes:
        name: unique identifier within the space.
        kind: "range", "levels" or "categorical".
        domain: admissible values in order. Integers for numeric kinds,
            labels for categorical (code of a label = its position).
        derived_from: name of the source parameter when this parameter is
            the complement-to-100 of another one, else None.
    """

    name: str
    kind: str
    domain: tuple[Any, ...]
    derived_from: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SpaceDefinitionError("parameter name must be non-empty")
        if self.kind not in _ALL_KINDS:
            raise SpaceDefinitionError(
                f"parameter {self.name!r}: unknown kind {self.kind!r}"
            )
        if len(self.domain) == 0:
            raise SpaceDefinitionError(f"parameter {self.name!r}: empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise SpaceDefinitionError(
                f"parameter {self.name!r}: duplicate domain values"
            )
        if self.kind in _NUMERIC_KINDS:
            if not all(isinstance(v, int) for v in self.domain):
                raise SpaceDefinitionError(
                    f"parameter {self.name!r}: numeric domains must be integers"
                )
            if any(a >= b for a, b in zip(self.domain, self.domain[1:])):
                raise SpaceDefinitionError(
                    f"parameter {self.name!r}: numeric domain must be strictly increasing"
                )
        else:
            if not all(isinstance(v, str) for v in self.domain):
                raise SpaceDefinitionError(
                    f"parameter {self.name!r}: categorical domain must be labels"
                )

    @property
    def is_derived(self) -> bool:
        return self.derived_from is not None

    @property
    def is_numeric(self) -> bool:
        return self.kind in _NUMERIC_KINDS

    @property
    def size(self) -> int:
        return len(self.domain)

    def code_of(self, value: Any) -> float:
        """Map a value to its numeric feature encoding."""
        if self.is_numeric:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise EncodingError(
                    f"parameter {self.name!r}: expected a number, got {value!r}"
                )
            return float(value)
        if isinstance(value, str):
            try:
                return float(self.domain.index(value))
            except ValueError:
                raise EncodingError(
                    f"parameter {self.name!r}: unknown label {value!r}"
                ) from None
        if isinstance(value, int) and 0 <= value < len(self.domain):
            return float(value)
        raise EncodingError(
            f"parameter {self.name!r}: unknown label {value!r}"
        )

    def value_of_code(self, code: float) -> Any:
        """Inverse of :meth:`code_of` for values produced by encoding."""
        if self.is_numeric:
            if not math.isfinite(code) or code != int(code):
                raise EncodingError(
                    f"parameter {self.name!r}: non-integer code {code!r}"
                )
            return int(code)
        idx = int(code)
        if code != idx or not 0 <= idx < len(self.domain):
            raise EncodingError(
                f"parameter {self.name!r}: code {code!r} out of range"
            )
        return self.domain[idx]

    def canonical_value(self, value: Any) -> Any:
        """Normalize a raw input value to its domain representation.

        Categorical parameters accept either the label or its integer code
        and normalize to the label. Numeric values pass through unchanged.
        """
        if (
            not self.is_numeric
            and isinstance(value, int)
            and not isinstance(value, bool)
            and 0 <= value < len(self.domain)
        ):
            return self.domain[value]
        return value


@dataclass(frozen=True)
class ParameterSpace:
    """An ordered, validated set of parameters."""

    name: str
    parameters: tuple[Parameter, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise SpaceDefinitionError(f"space {self.name!r}: duplicate parameter names")
        by_name = {p.name: p for p in self.parameters}
        for p in self.parameters:
            if not p.is_derived:
                continue
            source = by_name.get(p.derived_from)
            if source is None:
                raise SpaceDefinitionError(
                    f"space {self.name!r}: {p.name!r} derives from unknown "
                    f"parameter {p.derived_from!r}"
                )
            if source.is_derived:
                raise SpaceDefinitionError(
                    f"space {self.name!r}: {p.name!r} derives from derived "
                    f"parameter {source.name!r}"
                )
            if not source.is_numeric or not p.is_numeric:
                raise SpaceDefinitionError(
                    f"space {self.name!r}: complement parameters must be numeric"
                )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def free_parameters(self) -> tuple[Parameter, ...]:
        return tuple(p for p in self.parameters if not p.is_derived)

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def complement_sources(self) -> tuple[str, ...]:
        """Names of parameters that some derived parameter complements."""
        return tuple(
            dict.fromkeys(p.derived_from for p in self.parameters if p.is_derived)
        )

    # ----- enumeration ---------------------------------------------------

    def cardinality(self) -> int:
        """Number of distinct configurations (product of free domain sizes)."""
        return math.prod(p.size for p in self.free_parameters)

    def enumerate_all(self) -> Iterator[Configuration]:
        """Yield every configuration in lexicographic domain order."""
        free = self.free_parameters
        for combo in itertools.product(*(p.domain for p in free)):
            config = dict(zip((p.name for p in free), combo))
            self._fill_derived(config)
            yield config

    def _fill_derived(self, config: Configuration) -> None:
        for p in self.parameters:
            if p.is_derived and p.name not in config:
                config[p.name] = COMPLEMENT_TOTAL - config[p.derived_from]

    def make_config(self, assignment: Mapping[str, Any]) -> Configuration:
        """Build a configuration from a (possibly partial) assignment.

        Missing derived parameters are filled from their sources, and
        categorical codes are normalized to labels. The result is not
        validated; call :meth:`validate` for that.
        """
        config: Configuration = {}
        for name, value in assignment.items():
            try:
                param = self.parameter(name)
            except KeyError:
                config[name] = value
                continue
            config[name] = param.canonical_value(value)
        missing_sources = [
            p for p in self.parameters
            if p.is_derived and p.name not in config and p.derived_from not in config
        ]
        if missing_sources:
            names = ", ".join(p.name for p in missing_sources)
            raise SpaceDefinitionError(f"cannot fill derived parameter(s): {names}")
        self._fill_derived(config)
        return config

    # ----- validation ----------------------------------------------------

    def validate(self, config: Mapping[str, Any]) -> list[str]:
        """Return a list of violations; an empty list means valid."""
        violations: list[str] = []
        for p in self.parameters:
            if p.name not in config:
                violations.append(f"missing parameter {p.name!r}")
                continue
            value = config[p.name]
            if value not in p.domain:
                violations.append(
                    f"parameter {p.name!r}: value {value!r} not in domain"
                )
                continue
            if p.is_derived and p.derived_from in config:
                source_value = config[p.derived_from]
                if isinstance(source_value, int) and value != COMPLEMENT_TOTAL - source_value:
                    violations.append(
                        f"parameter {p.name!r}: expected "
                        f"{COMPLEMENT_TOTAL} - {p.derived_from} = "
                        f"{COMPLEMENT_TOTAL - source_value}, got {value!r}"
                    )
        known = set(self.names)
        for name in config:
            if name not in known:
                violations.append(f"unknown parameter {name!r}")
        return violations

    def is_valid(self, config: Mapping[str, Any]) -> bool:
        return not self.validate(config)

    # ----- sampling and moves ---------------------------------------------

    def random_config(self, rng: random.Random) -> Configuration:
        """Draw each free parameter uniformly from its domain."""
        config = {p.name: rng.choice(p.domain) for p in self.free_parameters}
        self._fill_derived(config)
        return config

    def neighbor(self, config: Mapping[str, Any], rng: random.Random) -> Configuration:
        """Return a copy of config with exactly one free parameter changed.

        The modified parameter is chosen uniformly among free parameters
        with more than one admissible value. Ordered numeric domains move
        to an adjacent level with probability 0.5 and to a uniformly drawn
        different level otherwise; categorical parameters draw uniformly
        among the other labels.
        """
        mutable = [p for p in self.free_parameters if p.size > 1]
        if not mutable:
            raise NoNeighborError(
                f"space {self.name!r} has no free parameter with more than one value"
            )
        param = rng.choice(mutable)
        current = config[param.name]
        idx = param.domain.index(current)
        if param.is_numeric and rng.random() < ADJACENT_MOVE_PROBABILITY:
            if idx == 0:
                new_idx = 1
            elif idx == param.size - 1:
                new_idx = param.size - 2
            else:
                new_idx = idx + rng.choice((-1, 1))
        else:
            new_idx = rng.randrange(param.size - 1)
            if new_idx >= idx:
                new_idx += 1
        moved = {k: v for k, v in config.items() if k in self.names}
        moved[param.name] = param.domain[new_idx]
        for p in self.parameters:
            if p.is_derived:
                moved[p.name] = COMPLEMENT_TOTAL - moved[p.derived_from]
        return moved

    # ----- encoding --------------------------------------------------------

    def encode(self, config: Mapping[str, Any]) -> FeatureVector:
        """Encode a configuration as one float per parameter, in space order.

        Numeric values pass through; categorical labels map to their codes.
        """
        values = []
        for p in self.parameters:
            if p.name not in config:
                raise EncodingError(f"missing parameter {p.name!r}")
            values.append(p.code_of(config[p.name]))
        return tuple(values)

    def decode(self, vector: FeatureVector) -> Configuration:
        """Inverse of :meth:`encode`."""
        if len(vector) != len(self.parameters):
            raise EncodingError(
                f"expected {len(self.parameters)} features, got {len(vector)}"
            )
        return {
            p.name: p.value_of_code(code)
            for p, code in zip(self.parameters, vector)
        }

    def config_key(self, config: Mapping[str, Any]) -> tuple[Any, ...]:
        """Hashable identity of a configuration (values in space order)."""
        try:
            return tuple(config[name] for name in self.names)
        except KeyError as exc:
            raise EncodingError(f"missing parameter {exc.args[0]!r}") from None


# ----- definition files -----------------------------------------------------


def space_from_dict(doc: Mapping[str, Any]) -> ParameterSpace:
    """Build a space from a parsed definition document."""
    if not isinstance(doc, Mapping):
        raise SpaceDefinitionError("space definition must be a mapping")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SpaceDefinitionError("space definition needs a non-empty 'name'")
    raw_params = doc.get("parameters")
    if not isinstance(raw_params, list) or not raw_params:
        raise SpaceDefinitionError("space definition needs a 'parameters' list")

    parsed: list[Parameter] = []
    pending: list[tuple[str, str]] = []  # (name, derived_from)
    for entry in raw_params:
        if not isinstance(entry, Mapping):
            raise SpaceDefinitionError("each parameter must be a mapping")
        pname = entry.get("name")
        if not isinstance(pname, str) or not pname:
            raise SpaceDefinitionError("each parameter needs a non-empty 'name'")
        derived_from = entry.get("derived_from")
        if derived_from is not None:
            if not isinstance(derived_from, str):
                raise SpaceDefinitionError(
                    f"parameter {pname!r}: 'derived_from' must be a parameter name"
                )
            pending.append((pname, derived_from))
            continue
        kind = entry.get("kind")
        if kind == KIND_RANGE:
            lo, hi = entry.get("min"), entry.get("max")
            if not isinstance(lo, int) or not isinstance(hi, int) or lo > hi:
                raise SpaceDefinitionError(
                    f"parameter {pname!r}: range needs integer min <= max"
                )
            domain: tuple[Any, ...] = tuple(range(lo, hi + 1))
        elif kind == KIND_LEVELS:
            values = entry.get("values")
            if not isinstance(values, list) or not values:
                raise SpaceDefinitionError(
                    f"parameter {pname!r}: levels need a 'values' list"
                )
            domain = tuple(values)
        elif kind == KIND_CATEGORICAL:
            labels = entry.get("labels")
            if not isinstance(labels, list) or not labels:
                raise SpaceDefinitionError(
                    f"parameter {pname!r}: categorical needs a 'labels' list"
                )
            domain = tuple(labels)
        else:
            raise SpaceDefinitionError(
                f"parameter {pname!r}: unknown kind {kind!r}"
            )
        parsed.append(Parameter(pname, kind, domain))

    by_name = {p.name: p for p in parsed}
    derived: dict[str, Parameter] = {}
    for pname, source_name in pending:
        source = by_name.get(source_name)
        if source is None:
            raise SpaceDefinitionError(
                f"parameter {pname!r} derives from unknown parameter {source_name!r}"
            )
        if not source.is_numeric:
            raise SpaceDefinitionError(
                f"parameter {pname!r}: complement source must be numeric"
            )
        domain = tuple(sorted(COMPLEMENT_TOTAL - v for v in source.domain))
        derived[pname] = Parameter(pname, source.kind, domain, derived_from=source_name)

    ordered: list[Parameter] = []
    for entry in raw_params:
        pname = entry["name"]
        ordered.append(derived[pname] if pname in derived else by_name[pname])
    return ParameterSpace(name, tuple(ordered))


def load_space(path: str) -> ParameterSpace:
    """Load a space definition from a YAML file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = yaml.safe_load(handle)
    except OSError as exc:
        raise SpaceDefinitionError(f"cannot read space definition: {exc}") from exc
    except yaml.YAMLError as exc:
        raise SpaceDefinitionError(f"malformed space definition {path}: {exc}") from exc
    return space_from_dict(doc)


def _data_dir():
    return resources.files("heterotune").joinpath("data")


def bundled_space_names() -> list[str]:
    """Names of the space definitions shipped with the package."""
    out = []
    for item in _data_dir().iterdir():
        if item.name.endswith(".yaml"):
            out.append(item.name[: -len(".yaml")])
    return sorted(out)


def bundled_space(name: str) -> ParameterSpace:
    """Load one of the space definitions shipped with the package."""
    ref = _data_dir().joinpath(f"{name}.yaml")
    if not ref.is_file():
        raise SpaceDefinitionError(
            f"no bundled space {name!r}; available: {', '.join(bundled_space_names())}"
        )
    doc = yaml.safe_load(ref.read_text(encoding="utf-8"))
    return space_from_dict(doc)


def bundled_data_path(name: str) -> str:
    """Filesystem path of a CSV fixture shipped with the package."""
    ref = _data_dir().joinpath(f"{name}.csv")
    if not ref.is_file():
        available = sorted(
            item.name[: -len(".csv")]
            for item in _data_dir().iterdir()
            if item.name.endswith(".csv")
        )
        raise FileNotFoundError(
            f"no bundled data file {name!r}; available: {', '.join(available)}"
        )
    return str(ref)
