"""Configuration schema: nested dataclasses with strict JSON loading.

Every section rejects unknown keys — a misspelled knob fails loudly
instead of silently running the defaults.  ``apply_overrides`` supports
the CLI's ``--override section.key=value`` flags; values parse as JSON
literals where possible and fall back to strings.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass
import json

from .errors import ConfigError


@dataclass
class GridConfig:
    num_packets: int = 250
    num_subcarriers: int = 16
    num_antennas: int = 4
    packet_interval: float = 1e-3
    subcarrier_spacing: float = 3.125e6
    carrier_freq: float = 5.825e9
    antenna_spacing: float = None  # seconds; None = half wavelength


@dataclass
class ScenarioConfig:
    num_receivers: int = 8
    num_labeled: int = 6
    num_clusters: int = 2
    noise_std: float = 0.1
    phase_error_model: str = "iid-uniform"
    seed: int = 0
    jitter_scale: float = 1.0
    tof_jitter: float = 2e-10
    aoa_jitter: float = 0.01
    dfs_jitter: float = 0.4
    amp_jitter: float = 0.02
    cluster_tof_offset: float = 2e-8  # static-path ToF shift between clusters
    environment_id: int = 0
    environment_jitter: float = 5e-9
    twin_unlabeled_of: str = None  # copy this receiver's semantics onto the
    #                               last unlabeled receiver, exactly
    grid: GridConfig = field(default_factory=GridConfig)


@dataclass
class DatasetConfig:
    samples_per_class: int = 60
    test_per_class: int = 40
    num_classes: int = 6
    coupling: float = 1.5
    class_sep: float = None  # signature-axis lift; None = 3.0
    feature_noise: float = 0.25


@dataclass
class EstimatorSettings:
    num_dynamic_paths: int = 2
    num_static_paths: int = 2
    tof_max: float = 150e-9
    tof_step: float = 10e-9
    aoa_step: float = 0.05
    dfs_max: float = 100.0
    dfs_step: float = 4.0
    threshold: float = 0.5
    step_size: float = 1.0
    max_sweeps: int = 30
    split_cutoff_hz: float = 2.0


@dataclass
class TrainSettings:
    lam: float = 0.3
    penalty_scale: float = 1.0
    eta: float = 0.025
    local_steps: int = 5
    batch_size: int = 32
    rounds: int = 60
    objective_target: float = None
    allow_large_rate: bool = False
    lambda_sweep: list = field(default_factory=list)
    eb_sweep: list = field(default_factory=list)  # [[local_steps, batch], ...]


@dataclass
class MapperSettings:
    embed_dim: int = 8
    hidden: int = 16
    corr_hidden: int = 8
    epochs: int = 200
    lr: float = 0.05
    max_paths: int = 5


@dataclass
class TransferSettings:
    kl_values: list = field(default_factory=lambda: [1, 2, 3, 4])
    bound_constant: float = 10.0
    sweep_seeds: list = field(default_factory=list)  # [] = just the run seed


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    mapper: MapperSettings = field(default_factory=MapperSettings)
    transfer: TransferSettings = field(default_factory=TransferSettings)


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"section {path or '<root>'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {unknown} in section {path or '<root>'}"
        )
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        if is_dataclass(f.type):
            kwargs[name] = _build(f.type, value, f"{path}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply dotted-path overrides like ``train.lam=2`` to a config."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown override section {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown override key {key!r}")
        node[parts[-1]] = _parse_override_value(raw.strip())
    return config_from_dict(data)
