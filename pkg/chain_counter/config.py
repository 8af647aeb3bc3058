# Loads the built-in defaults.ini and layers a JSON config file and command-line flags on top
import json
import logging
from configparser import ConfigParser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .exceptions import PreconditionError

logger = logging.getLogger(__name__)

DEFAULTS_FILE = Path(__file__).with_name("defaults.ini")


@dataclass(frozen=True)
class DedupSection:
    distance_threshold: Optional[float] = None
    confidence_threshold: float = 0.26


@dataclass(frozen=True)
class PartitionSection:
    gap_threshold: Optional[float] = None
    padding: float = 0.0
    merge_distance: float = 1.0
    counter: str = "oracle"
    counter_file: Optional[str] = None


@dataclass(frozen=True)
class RefineSection:
    steps: int = 500
    learning_rate: float = 0.05
    decay_steps: float = 0.0
    rematch_every: int = 25
    lambda_cls: float = 1.0
    lambda_loc: float = 10.0
    lambda_neigh: float = 100.0
    alpha: float = 0.25
    gamma: float = 2.0
    n_points: int = 20
    spacing: float = 30.0
    jitter: float = 2.0
    seed: int = 0


@dataclass(frozen=True)
class MetricsSection:
    levels: Tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class SynthSection:
    records: int = 10
    width: float = 1200.0
    height: float = 400.0
    n_clusters: int = 2
    min_handles: int = 8
    max_handles: int = 12
    spacing: float = 30.0
    spacing_jitter: float = 0.0
    inter_cluster_gap: float = 200.0
    handle_w: float = 20.0
    handle_h: float = 20.0
    cross_jitter: float = 0.0
    axis: str = "x"
    center_jitter_sigma: float = 0.0
    dropout_rate: float = 0.0
    duplicate_rate: float = 0.0
    false_positive_rate: float = 0.0
    duplicate_offset: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class GradcheckSection:
    instances: int = 100
    tolerance: float = 1e-4
    step: float = 1e-5
    min_points: int = 3
    max_points: int = 20
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one command-line run."""

    seed: int = 0
    n_jobs: int = 1
    strict: bool = False
    dedup: DedupSection = field(default_factory=DedupSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    refine: RefineSection = field(default_factory=RefineSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    synth: SynthSection = field(default_factory=SynthSection)
    gradcheck: GradcheckSection = field(default_factory=GradcheckSection)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


SECTIONS = {
    "dedup": DedupSection,
    "partition": PartitionSection,
    "refine": RefineSection,
    "metrics": MetricsSection,
    "synth": SynthSection,
    "gradcheck": GradcheckSection,
}
TOP_LEVEL_KEYS = ("seed", "n_jobs", "strict")

# Types of fields whose default is None.
OPTIONAL_TYPES = {"distance_threshold": float, "gap_threshold": float, "counter_file": str}


class Config:
    """Typed access to the ini defaults."""

    def __init__(self, config_file: Union[str, Path] = DEFAULTS_FILE):
        self.config = ConfigParser()
        if not self.config.read(config_file, encoding="utf-8"):
            raise PreconditionError(f"config file {config_file} could not be read")
        self.config_file = Path(config_file)

    def get_seed(self) -> int:
        return self.config["DEFAULT"].getint("SEED", 0)

    def get_n_jobs(self) -> int:
        return self.config["DEFAULT"].getint("N_JOBS", 1)

    def get_section(self, name: str) -> Any:
        """Build the section dataclass from the ini, leaving absent keys at their defaults."""
        cls = SECTIONS[name]
        values = {}
        if self.config.has_section(name):
            section = self.config[name]
            for f in fields(cls):
                # ConfigParser keys are case-insensitive; DEFAULT keys show up in every section.
                if f.name in section:
                    values[f.name] = _coerce(f.name, section[f.name], getattr(cls(), f.name))
        return cls(**values)

    def get_run_config(self) -> RunConfig:
        return RunConfig(
            seed=self.get_seed(),
            n_jobs=self.get_n_jobs(),
            **{name: self.get_section(name) for name in SECTIONS},
        )


def _coerce(key: str, value: Any, current: Any) -> Any:
    """Convert value to the type of the field it replaces."""
    try:
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            return tuple(int(v) for v in value)
        if isinstance(current, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if value is None:
            return None
        target = type(current) if current is not None else OPTIONAL_TYPES.get(key, str)
        if target is int:
            number = float(value)
            if not number.is_integer():
                raise ValueError("not an integer")
            return int(number)
        return target(value)
    except (TypeError, ValueError) as e:
        raise PreconditionError(f"config key {key!r}: cannot use {value!r} ({e})") from e


def _unknown(where: str, names, strict: bool) -> None:
    if not names:
        return
    if strict:
        raise PreconditionError(f"unknown {where} {sorted(names)}")
    logger.warning(f"[WARNING] Ignoring unknown {where} {sorted(names)}")


def apply_overrides(
    run: RunConfig, overrides: Mapping[str, Any], strict: bool = False, source: str = "overrides"
) -> RunConfig:
    """
    Layer a nested mapping {"seed": .., "refine": {"steps": ..}, ..} over run.
    None values leave the current value alone.
    """
    _unknown(f"{source} sections", set(overrides) - set(SECTIONS) - set(TOP_LEVEL_KEYS), strict)
    top = {
        k: _coerce(k, overrides[k], getattr(run, k))
        for k in TOP_LEVEL_KEYS
        if overrides.get(k) is not None
    }
    run = replace(run, **top)
    for name, cls in SECTIONS.items():
        section_values = overrides.get(name)
        if not section_values:
            continue
        if not isinstance(section_values, Mapping):
            raise PreconditionError(f"{source} section {name!r} must be an object")
        current = getattr(run, name)
        known = {f.name for f in fields(cls)}
        _unknown(f"{source} keys in [{name}]", set(section_values) - known, strict)
        updates = {
            k: _coerce(k, v, getattr(current, k))
            for k, v in section_values.items()
            if k in known and v is not None
        }
        run = replace(run, **{name: replace(current, **updates)})
    return run


def with_seed(run: RunConfig, seed: int) -> RunConfig:
    """Set the global seed and every per-section seed."""
    return replace(
        run,
        seed=seed,
        refine=replace(run.refine, seed=seed),
        synth=replace(run.synth, seed=seed),
        gradcheck=replace(run.gradcheck, seed=seed),
    )


def load_run_config(
    config_file: Union[str, Path, None] = None,
    flags: Optional[Mapping[str, Any]] = None,
    strict: bool = False,
    defaults_file: Union[str, Path] = DEFAULTS_FILE,
) -> RunConfig:
    """
    Resolve the run configuration: ini defaults, then the JSON config file,
    then command-line flags. A seed from the file or flags applies to every
    section that has one.
    """
    run = Config(defaults_file).get_run_config()
    layers = []
    if config_file is not None:
        path = Path(config_file)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise PreconditionError(f"cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise PreconditionError(f"config file {path} must hold a JSON object")
        layers.append((str(path), data))
    if flags:
        layers.append(("command line", flags))

    for source, layer in layers:
        if layer.get("seed") is not None:
            run = with_seed(run, _coerce("seed", layer["seed"], run.seed))
        run = apply_overrides(run, layer, strict=strict, source=source)
    return replace(run, strict=strict or run.strict)
