"""
Módulo de Modelo de Configuración
=================================

Este módulo define las configuraciones de entrenamiento y la configuración
de ejecución en texto plano ``clave = valor``.

Clases:
    RbmTrainConfig: Hiperparámetros de divergencia contrastiva
    TripletSamplerConfig: Umbrales del muestreo de tripletas
    FinetuneConfig: Hiperparámetros del ajuste fino por tripletas
    RunConfig: Configuración completa de un comando de la CLI
"""

from dataclasses import dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..utils.errors import ConfigError
from .hashers import METHODS


def _raise_if(errors: List[str], owner: str) -> None:
    if errors:
        raise ConfigError(f"Invalid {owner}: " + "; ".join(errors))


@dataclass(frozen=True)
class RbmTrainConfig:
    """
    Contrastive divergence hyper-parameters.

    Attributes:
        learning_rate (float): Step size, default 0.005
        momentum (float): Velocity decay in [0, 1), default 0.9
        epochs (int): Sweeps over the training data, default 150
        batch_size (int): Rows per minibatch, default 100
        cd_steps (int): Gibbs steps k of CD-k, default 1
        seed (int): Seed for initialisation, shuffling and sampling
    """

    learning_rate: float = 0.005
    momentum: float = 0.9
    epochs: int = 150
    batch_size: int = 100
    cd_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        _raise_if(self.validate(), "RbmTrainConfig")

    def validate(self) -> List[str]:
        """
        Check the configuration invariants.

        Returns:
            List[str]: Violations, empty when valid
        """
        errors = []
        if not self.learning_rate > 0:
            errors.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            errors.append(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.cd_steps < 1:
            errors.append(f"cd_steps must be >= 1, got {self.cd_steps}")
        return errors


@dataclass(frozen=True)
class TripletSamplerConfig:
    """
    Threshold sampling targets, in original-space Euclidean distance units.

    Attributes:
        t_p (float): Positive distance target T_p
        t_n (float): Negative distance target T_n
        tolerance (float): Half-width of the acceptance window around each target
        triplets_per_epoch (int): Triplets drawn per fine-tuning epoch
    """

    t_p: float
    t_n: float
    tolerance: float
    triplets_per_epoch: int = 128_000

    def __post_init__(self):
        _raise_if(self.validate(), "TripletSamplerConfig")

    def validate(self) -> List[str]:
        errors = []
        if not 0 <= self.t_p < self.t_n:
            errors.append(f"need 0 <= t_p < t_n, got t_p={self.t_p}, t_n={self.t_n}")
        if not self.tolerance > 0:
            errors.append(f"tolerance must be > 0, got {self.tolerance}")
        if self.triplets_per_epoch < 1:
            errors.append(f"triplets_per_epoch must be >= 1, got {self.triplets_per_epoch}")
        return errors


@dataclass(frozen=True)
class FinetuneConfig:
    """
    Triplet fine-tuning hyper-parameters.

    Attributes:
        margin (float): Hinge margin g, fixed at 1 after softmax normalisation
        learning_rate (float): SGD step size
        momentum (float): Velocity decay in [0, 1)
        epochs (int): Fine-tuning epochs
        batch_size (int): Triplets per minibatch, default 128
        seed (int): Seed for sampling
        update_layers (str): 'all' for full backpropagation, 'top' for the last layer only
    """

    margin: float = 1.0
    learning_rate: float = 0.005
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    update_layers: str = "all"

    def __post_init__(self):
        _raise_if(self.validate(), "FinetuneConfig")

    def validate(self) -> List[str]:
        errors = []
        if not self.margin > 0:
            errors.append(f"margin must be > 0, got {self.margin}")
        if not self.learning_rate > 0:
            errors.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            errors.append(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.update_layers not in ("all", "top"):
            errors.append(f"update_layers must be 'all' or 'top', got {self.update_layers!r}")
        return errors


# Tamaños de capa de los cuatro puntos de operación publicados
PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-256": {"layer_sizes": [4096, 2048, 256]},
    "paper-128": {"layer_sizes": [4096, 2048, 128]},
    "paper-64": {"layer_sizes": [4096, 1024, 64]},
    "paper-32": {"layer_sizes": [4096, 2048, 32]},
}
PRESET_DEFAULTS: Dict[str, Any] = {
    "rbm_learning_rate": 0.005,
    "rbm_momentum": 0.9,
    "rbm_epochs": 150,
    "rbm_batch_size": 100,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> List[int]:
    text = text.replace("-", ",") if "," not in text else text
    return [int(part) for part in text.split(",") if part.strip()]


def _parse_str_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _parse_optional_shape(text: str) -> Optional[Tuple[int, int]]:
    if text.strip().lower() in ("", "auto", "none"):
        return None
    parts = [int(p) for p in text.lower().replace("x", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected d1xd2, got {text!r}")
    return parts[0], parts[1]


def _format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    """
    Fully resolved configuration of one CLI run.

    Parsed from plain ``key = value`` lines with ``#`` comments; unknown keys
    are rejected. ``to_text()`` produces the echo written next to every output.
    """

    train_path: str = ""
    database_path: str = ""
    query_path: str = ""
    ground_truth_path: str = ""
    distractor_path: str = ""
    output_dir: str = "output"
    layer_sizes: List[int] = field(default_factory=list)
    normalize: bool = True
    rbm_learning_rate: float = 0.01
    rbm_momentum: float = 0.9
    rbm_epochs: int = 150
    rbm_batch_size: int = 10
    rbm_cd_steps: int = 1
    init: str = "srbm"
    finetune: str = "off"
    ft_margin: float = 1.0
    ft_learning_rate: float = 0.05
    ft_momentum: float = 0.9
    ft_epochs: int = 10
    ft_batch_size: int = 128
    ft_update_layers: str = "all"
    sampler_p_percentile: float = 5.0
    sampler_n_percentile: float = 50.0
    sampler_t_p: Optional[float] = None
    sampler_t_n: Optional[float] = None
    sampler_tolerance: Optional[float] = None
    triplets_per_epoch: int = 128_000
    max_train_size: int = 20_000
    windowed_table: bool = False
    methods: List[str] = field(default_factory=lambda: ["itq"])
    bits: List[int] = field(default_factory=lambda: [32, 64, 128, 256])
    recall_at: List[int] = field(default_factory=lambda: [10, 100, 1000])
    recall_mode: str = "hit"
    exclude_self: bool = False
    itq_iterations: int = 50
    bpbc_shape: Optional[Tuple[int, int]] = None
    sklsh_pairs: int = 1000
    seed: int = 0
    threads: int = 0
    progress: bool = False

    _CHOICES = {
        "init": ("srbm", "uniw"),
        "finetune": ("off", "threshold", "uniform"),
        "ft_update_layers": ("all", "top"),
        "recall_mode": ("hit", "fraction"),
    }

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def _parser_for(cls, name: str) -> Callable[[str], Any]:
        default = getattr(cls(), name)
        if name in ("sampler_t_p", "sampler_t_n", "sampler_tolerance"):
            return _parse_optional_float
        if name == "bpbc_shape":
            return _parse_optional_shape
        if name in ("layer_sizes", "bits", "recall_at"):
            return _parse_int_list
        if name == "methods":
            return _parse_str_list
        if isinstance(default, bool):
            return _parse_bool
        if isinstance(default, int):
            return int
        if isinstance(default, float):
            return float
        return str

    def set_value(self, key: str, raw: Any) -> None:
        """
        Set one key, parsing strings to the key's type.

        Args:
            key (str): Configuration key
            raw (Any): Raw text or an already typed value

        Raises:
            ConfigError: Unknown key or unparsable value
        """
        if key not in self.keys():
            raise ConfigError(f"Unknown configuration key: {key}")
        if isinstance(raw, str):
            try:
                value = self._parser_for(key)(raw)
            except ValueError as e:
                raise ConfigError(f"Bad value for {key}: {e}") from e
        else:
            value = raw
        if key in self._CHOICES and value not in self._CHOICES[key]:
            raise ConfigError(f"{key} must be one of {self._CHOICES[key]}, got {value!r}")
        if key == "methods" and not set(value) <= set(METHODS):
            raise ConfigError(f"methods must be drawn from {METHODS}, got {value!r}")
        if key in ("sampler_p_percentile", "sampler_n_percentile") and not 0 <= value <= 100:
            raise ConfigError(f"{key} must lie in [0, 100], got {value!r}")
        setattr(self, key, value)

    def get_values(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in self.keys()}

    def apply_preset(self, name: str) -> None:
        """
        Pin layer sizes and training defaults of a published operating point.

        Args:
            name (str): One of ``paper-256``, ``paper-128``, ``paper-64``, ``paper-32``
        """
        if name not in PRESETS:
            raise ConfigError(f"Unknown preset {name!r}; choose from {sorted(PRESETS)}")
        for key, value in {**PRESET_DEFAULTS, **PRESETS[name]}.items():
            self.set_value(key, value)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """
        Parse ``key = value`` lines.

        Args:
            text (str): Configuration text

        Returns:
            RunConfig: Parsed configuration

        Raises:
            ConfigError: Unknown keys, malformed lines or bad values
        """
        config = cls()
        for number, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"Line {number}: expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            config.set_value(key, value)
        return config

    def to_text(self) -> str:
        lines = ["# resolved configuration"]
        lines += [f"{key} = {_format_value(value)}" for key, value in self.get_values().items()]
        return "\n".join(lines) + "\n"

    def rbm_config(self) -> RbmTrainConfig:
        return RbmTrainConfig(
            learning_rate=self.rbm_learning_rate,
            momentum=self.rbm_momentum,
            epochs=self.rbm_epochs,
            batch_size=self.rbm_batch_size,
            cd_steps=self.rbm_cd_steps,
            seed=self.seed,
        )

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(
            margin=self.ft_margin,
            learning_rate=self.ft_learning_rate,
            momentum=self.ft_momentum,
            epochs=self.ft_epochs,
            batch_size=self.ft_batch_size,
            seed=self.seed,
            update_layers=self.ft_update_layers,
        )
