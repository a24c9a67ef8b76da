"""Experiment configuration: flat typed key-value sections, strict keys.

The on-disk format is INI-style so configs stay diff-able and hand-editable.
Every key is typed, unknown sections or keys are rejected, and
parse -> serialize -> parse is the identity (floats round-trip via repr).
"""

from dataclasses import dataclass, field
import configparser

from .byzantine import AttackSpec
from .core import ConfigError
from .privacy import PrivacySpec

SCHEMES = ("probit_plus", "fedavg", "fed_gm", "signsgd_mv", "rsa")
BIT_SCHEMES = ("probit_plus", "signsgd_mv", "rsa")


@dataclass
class TrainSchedule:
    rounds: int = 100
    local_epochs: int = 5
    batch_size: int = 10
    lr: float = 0.01
    momentum: float = 0.5
    lam: float = 0.2          # proximal pull toward the broadcast model
    gamma: float = 0.5        # inexactness diagnostic threshold (logged only)
    server_lr: float = 1.0
    agg_coef: float = 0.01    # majority-vote step / sign-accumulation coefficient
    rsa_lambda: float = 0.01  # l1 penalty weight of the RSA client objective

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigError("schedule.rounds must be >= 0")
        if self.local_epochs < 0:
            raise ConfigError("schedule.local_epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("schedule.batch_size must be >= 1")
        # zero rates are allowed: they freeze one side, useful as a probe
        if self.lr < 0 or self.server_lr < 0:
            raise ConfigError("learning rates must be nonnegative")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("schedule.momentum must be in [0, 1)")
        if self.lam < 0 or self.rsa_lambda < 0:
            raise ConfigError("penalty weights must be nonnegative")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("schedule.gamma must be in [0, 1]")


@dataclass
class QuantSpec:
    b_init: float = 0.01
    dynamic_b: bool = True
    # The range schedule relies on honest loss signals, so it is frozen at
    # b_init whenever an attack is active; set this to keep it on anyway.
    dynamic_b_under_attack: bool = False

    def __post_init__(self):
        if self.b_init <= 0:
            raise ConfigError("quant.b_init must be positive")


@dataclass
class DataSpec:
    classes: int = 4
    per_class: int = 500
    features: int = 16
    # Center separation 2.0 leaves the class blobs overlapping: hard enough
    # that Byzantine pressure costs real accuracy instead of vanishing into
    # an easily separable problem.
    spread: float = 2.0
    classes_per_client: int = 2
    test_per_class: int = 250
    learner: str = "logistic"
    hidden: int = 16
    csv_path: str = ""  # optional: load training data from CSV instead

    def __post_init__(self):
        if self.learner not in ("logistic", "mlp"):
            raise ConfigError(f"data.learner must be logistic or mlp, got '{self.learner}'")
        if self.classes < 2:
            raise ConfigError("data.classes must be >= 2")
        if not (1 <= self.classes_per_client <= self.classes):
            raise ConfigError("data.classes_per_client must be in [1, classes]")
        if self.per_class < 1 or self.test_per_class < 1:
            raise ConfigError("per-class sample counts must be >= 1")
        if self.features < 1 or self.hidden < 1:
            raise ConfigError("data.features and data.hidden must be >= 1")


@dataclass
class ExperimentConfig:
    scheme: str = "probit_plus"
    seed: int = 1
    out: str = ""
    m_clients: int = 50
    attack: AttackSpec = field(default_factory=AttackSpec)
    privacy: PrivacySpec = field(default_factory=lambda: PrivacySpec(0.1, 0.0002, enabled=False))
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    quant: QuantSpec = field(default_factory=QuantSpec)
    data: DataSpec = field(default_factory=DataSpec)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"run.scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.m_clients < 1:
            raise ConfigError("topology.clients must be >= 1")
        if self.attack.kind == "worst_case_bits" and self.scheme not in BIT_SCHEMES:
            raise ConfigError("worst_case_bits attacks need a one-bit scheme")
        if self.privacy.enabled:
            if self.scheme != "probit_plus":
                raise ConfigError("privacy calibration applies only to the probit_plus channel")
            if self.quant.b_init <= self.privacy.margin:
                raise ConfigError(
                    f"quant.b_init = {self.quant.b_init:.6g} must exceed the privacy "
                    f"margin {self.privacy.margin:.6g}"
                )


# section -> key -> (type tag, attribute path)
_SCHEMA = {
    "run": {
        "scheme": ("str", ("scheme",)),
        "seed": ("int", ("seed",)),
        "out": ("str", ("out",)),
    },
    "topology": {
        "clients": ("int", ("m_clients",)),
        "byzantine_fraction": ("float", ("attack", "beta")),
    },
    "attack": {
        "kind": ("str", ("attack", "kind")),
        "gaussian_variance": ("float", ("attack", "gaussian_variance")),
        "flip_factor": ("float", ("attack", "flip_factor")),
        "bit_mode": ("str", ("attack", "bit_mode")),
        "honest_loss_signal": ("bool", ("attack", "honest_loss_signal")),
    },
    "privacy": {
        "enabled": ("bool", ("privacy", "enabled")),
        "epsilon": ("float", ("privacy", "epsilon")),
        "delta1": ("float", ("privacy", "delta1")),
    },
    "schedule": {
        "rounds": ("int", ("schedule", "rounds")),
        "local_epochs": ("int", ("schedule", "local_epochs")),
        "batch_size": ("int", ("schedule", "batch_size")),
        "lr": ("float", ("schedule", "lr")),
        "momentum": ("float", ("schedule", "momentum")),
        "lambda": ("float", ("schedule", "lam")),
        "gamma": ("float", ("schedule", "gamma")),
        "server_lr": ("float", ("schedule", "server_lr")),
        "agg_coef": ("float", ("schedule", "agg_coef")),
        "rsa_lambda": ("float", ("schedule", "rsa_lambda")),
    },
    "quant": {
        "b_init": ("float", ("quant", "b_init")),
        "dynamic_b": ("bool", ("quant", "dynamic_b")),
        "dynamic_b_under_attack": ("bool", ("quant", "dynamic_b_under_attack")),
    },
    "data": {
        "classes": ("int", ("data", "classes")),
        "per_class": ("int", ("data", "per_class")),
        "features": ("int", ("data", "features")),
        "spread": ("float", ("data", "spread")),
        "classes_per_client": ("int", ("data", "classes_per_client")),
        "test_per_class": ("int", ("data", "test_per_class")),
        "learner": ("str", ("data", "learner")),
        "hidden": ("int", ("data", "hidden")),
        "csv_path": ("str", ("data", "csv_path")),
    },
}

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _convert(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[raw.lower()]
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse '{raw}' as {kind}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; unknown sections/keys and bad types are hard errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None

    if "run" not in parser or "scheme" not in parser["run"]:
        raise ConfigError("missing required field run.scheme")

    values = {}  # attribute path -> parsed value
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            kind, path = _SCHEMA[section][key]
            values[path] = _convert(raw, kind, f"{section}.{key}")

    def take(*path, default):
        return values.pop(tuple(path), default)

    try:
        attack = AttackSpec(
            kind=take("attack", "kind", default="none"),
            beta=take("attack", "beta", default=0.0),
            gaussian_variance=take("attack", "gaussian_variance", default=100.0),
            flip_factor=take("attack", "flip_factor", default=-5.0),
            bit_mode=take("attack", "bit_mode", default="all_plus"),
            honest_loss_signal=take("attack", "honest_loss_signal", default=True),
        )
        privacy = PrivacySpec(
            epsilon=take("privacy", "epsilon", default=0.1),
            delta1=take("privacy", "delta1", default=0.0002),
            enabled=take("privacy", "enabled", default=False),
        )
        schedule = TrainSchedule(
            rounds=take("schedule", "rounds", default=100),
            local_epochs=take("schedule", "local_epochs", default=5),
            batch_size=take("schedule", "batch_size", default=10),
            lr=take("schedule", "lr", default=0.01),
            momentum=take("schedule", "momentum", default=0.5),
            lam=take("schedule", "lam", default=0.2),
            gamma=take("schedule", "gamma", default=0.5),
            server_lr=take("schedule", "server_lr", default=1.0),
            agg_coef=take("schedule", "agg_coef", default=0.01),
            rsa_lambda=take("schedule", "rsa_lambda", default=0.01),
        )
        quant = QuantSpec(
            b_init=take("quant", "b_init", default=0.01),
            dynamic_b=take("quant", "dynamic_b", default=True),
            dynamic_b_under_attack=take("quant", "dynamic_b_under_attack", default=False),
        )
        data = DataSpec(
            classes=take("data", "classes", default=4),
            per_class=take("data", "per_class", default=500),
            features=take("data", "features", default=16),
            spread=take("data", "spread", default=10.0),
            classes_per_client=take("data", "classes_per_client", default=2),
            test_per_class=take("data", "test_per_class", default=250),
            learner=take("data", "learner", default="logistic"),
            hidden=take("data", "hidden", default=16),
            csv_path=take("data", "csv_path", default=""),
        )
        return ExperimentConfig(
            scheme=take("scheme", default="probit_plus"),
            seed=take("seed", default=1),
            out=take("out", default=""),
            m_clients=take("m_clients", default=50),
            attack=attack,
            privacy=privacy,
            schedule=schedule,
            quant=quant,
            data=data,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) reproduces cfg exactly."""
    def resolve(path):
        obj = cfg
        for name in path[:-1]:
            obj = getattr(obj, name)
        # attribute name is the last path element unless it is the direct field
        return getattr(obj, path[-1]) if len(path) > 1 else getattr(cfg, path[0])

    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, path) in keys.items():
            lines.append(f"{key} = {_fmt(resolve(path))}")
        lines.append("")
    return "\n".join(lines)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Nested plain-type mapping mirroring the config sections (for manifests)."""
    out: dict = {}
    for section, keys in _SCHEMA.items():
        out[section] = {}
        for key, (_, path) in keys.items():
            obj = cfg
            for name in path[:-1]:
                obj = getattr(obj, name)
            value = getattr(obj, path[-1]) if len(path) > 1 else getattr(cfg, path[0])
            out[section][key] = value
    return out
