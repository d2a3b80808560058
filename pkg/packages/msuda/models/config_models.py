"""
Pydantic configuration models
Model, training, pseudo-labeling and synthetic-benchmark settings, plus the
layered RunConfig the CLI resolves from file, environment and flags.
"""

from contextvars import ContextVar
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from pydantic_settings import BaseSettings, JsonConfigSettingsSource, SettingsConfigDict

from utils.errors import ConfigurationError


class Framework(str, Enum):
    """Training framework"""
    WS = "ws"
    TWO_STAGE = "2st"


class WeightMode(str, Enum):
    """Which features feed D when weighting source classifiers"""
    SHARED = "shared"
    PRIVATE = "private"


class ValidationMode(str, Enum):
    """Where early-stopping accuracy is measured"""
    TARGET = "target"
    SOURCE = "source"


class ModelConfig(BaseModel):
    """Shared-private architecture sizes"""
    input_dim: int = Field(5000, ge=1)
    hidden_dim: int = Field(1000, ge=1)
    feature_dim: int = Field(128, ge=1)
    num_sources: int = Field(3, ge=1)
    num_classes: int = Field(2, ge=2)
    head_hidden_dim: int = Field(0, ge=0)  # 0 = single affine head
    target_extractor: bool = False

    @computed_field
    @property
    def num_domains(self) -> int:
        return self.num_sources + 1


class TrainConfig(BaseModel):
    """WS-UDA adversarial training hyperparameters"""
    model_config = ConfigDict(populate_by_name=True)

    batch_size: int = Field(8, ge=1)
    lr: float = Field(1e-4, gt=0)
    lambda_: float = Field(1.0, gt=0, alias="lambda")
    n_critic: int = Field(5, ge=1)
    max_epochs: int = Field(30, ge=0)
    patience: int = Field(5, ge=1)
    seed: int = Field(0, ge=0)
    include_private_coop_term: bool = False
    prefetch: int = Field(0, ge=0)  # bounded queue depth; 0 = densify inline
    freeze_checks: bool = False  # bit-compare frozen blocks every step
    metrics_sample: int = Field(500, ge=1)  # instances per domain for D accuracies


class PseudoLabelConfig(BaseModel):
    """2ST-UDA curriculum settings"""
    delta: float = Field(0.98, gt=0.5, le=1.0)
    eta: float = Field(0.02, gt=0.0)
    min_new: int = Field(10, ge=0)
    bootstrap: bool = True
    iter_min_steps: int = Field(50, ge=1)
    finetune_classifier: bool = False
    finetune_max_epochs: int = Field(20, ge=0)


class SynthSpec(BaseModel):
    """Synthetic multi-domain polarity benchmark"""
    vocab_size: int = Field(200, ge=1)
    shared_size: int = Field(50, ge=2)
    private_size: int = Field(30, ge=0)
    num_sources: int = Field(3, ge=1)
    source_signs: Optional[List[int]] = None
    target_sign: int = 1
    docs_per_domain: int = Field(1000, ge=1)
    mean_tokens: float = Field(30.0, gt=0)
    noise_rate: float = Field(0.2, ge=0.0, le=1.0)
    private_weight: float = Field(0.5, ge=0.0, le=1.0)
    shared_purity: float = Field(0.7, ge=0.5, le=1.0)
    target_affinity: float = Field(0.6, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0)

    @field_validator("target_sign")
    @classmethod
    def _check_target_sign(cls, value: int) -> int:
        if value not in (1, -1):
            raise ValueError(f"target_sign must be +1 or -1, got {value}")
        return value

    @model_validator(mode="after")
    def _check_blocks(self) -> "SynthSpec":
        if self.source_signs is None:
            # exactly one source agrees with the target
            self.source_signs = [self.target_sign] + [-self.target_sign] * (self.num_sources - 1)
        if len(self.source_signs) != self.num_sources:
            raise ValueError(f"source_signs has {len(self.source_signs)} entries for {self.num_sources} sources")
        if any(sign not in (1, -1) for sign in self.source_signs):
            raise ValueError(f"source_signs must be ±1, got {self.source_signs}")
        used = self.shared_size + self.num_domains * self.private_size
        if used > self.vocab_size:
            raise ValueError(f"blocks need {used} ids but vocab_size is {self.vocab_size}")
        return self

    @property
    def num_domains(self) -> int:
        return self.num_sources + 1

    @property
    def signs(self) -> List[int]:
        """Per-domain private polarity signs, sources first then the target"""
        return list(self.source_signs) + [self.target_sign]

    def shared_block(self) -> range:
        return range(0, self.shared_size)

    def private_block(self, domain: int) -> range:
        start = self.shared_size + domain * self.private_size
        return range(start, start + self.private_size)


class DomainSource(BaseModel):
    """Corpus files for one domain"""
    labeled: List[Path] = []
    unlabeled: List[Path] = []
    labels: Optional[Path] = None  # sidecar labels for the unlabeled files, in order


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# Config file handed to the settings sources while RunConfig.load runs
_CONFIG_FILE: ContextVar[Optional[Path]] = ContextVar("msuda_config_file", default=None)


class RunConfig(BaseSettings):
    """
    Full run configuration.
    Precedence: explicit kwargs (CLI flags) > MSUDA_* environment > .env > JSON config file > defaults
    """
    model_config = SettingsConfigDict(
        env_prefix="MSUDA_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore",
        populate_by_name=True,
    )

    domains: Dict[str, DomainSource] = {}
    target: Optional[str] = None
    framework: Framework = Framework.WS
    weight_mode: WeightMode = WeightMode.SHARED
    validation: ValidationMode = ValidationMode.TARGET
    target_fractions: Tuple[float, float] = (0.1, 0.9)  # (validation, test) of labeled target data
    source_holdout: float = Field(0.1, ge=0.0, lt=1.0)
    vocab_size: int = Field(5000, ge=1)
    out_dir: Path = Path("runs/latest")
    wsuda_checkpoint: Optional[Path] = None
    seed: Optional[int] = None
    workers: int = Field(4, ge=1)
    log_level: str = "INFO"
    json_logs: bool = False

    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    pseudo_label: PseudoLabelConfig = PseudoLabelConfig()

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings,
                                   file_secret_settings):
        sources = [init_settings, env_settings, dotenv_settings]
        config_file = _CONFIG_FILE.get()
        if config_file is not None:
            sources.append(JsonConfigSettingsSource(settings_cls, json_file=config_file))
        return tuple(sources)

    @classmethod
    def load(cls, config_file: Optional[Path] = None, **overrides) -> "RunConfig":
        """Resolve a configuration; `None` overrides are ignored so unset flags never win"""
        if config_file is not None and not Path(config_file).is_file():
            raise ConfigurationError(f"Config file not found: {config_file}")
        token = _CONFIG_FILE.set(Path(config_file) if config_file is not None else None)
        try:
            return cls(**{key: value for key, value in overrides.items() if value is not None})
        finally:
            _CONFIG_FILE.reset(token)

    @model_validator(mode="after")
    def _sync_seed(self) -> "RunConfig":
        if self.seed is None:
            self.seed = self.train.seed
        elif self.train.seed != self.seed:
            self.train = self.train.model_copy(update={"seed": self.seed})
        return self

    @field_validator("log_level")
    @classmethod
    def _check_log_level(cls, value: str) -> str:
        level = value.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {list(LOG_LEVELS)}, got {value!r}")
        return level

    @field_validator("target_fractions")
    @classmethod
    def _check_fractions(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if min(value) < 0 or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"target_fractions must be non-negative and sum to 1, got {value}")
        return value

    @property
    def source_names(self) -> List[str]:
        """Source domains in corpus order (config order without the target)"""
        return [name for name in self.domains if name != self.target]

    def validate_for_training(self, require_sources: bool = True):
        """Check the invariants a training run needs: one target, ≥ 1 source, existing paths"""
        if not self.target:
            raise ConfigurationError("No target domain configured (set --target or 'target')")
        if self.target not in self.domains:
            raise ConfigurationError(f"Target domain '{self.target}' is not among configured domains {list(self.domains)}")
        if require_sources and not self.source_names:
            raise ConfigurationError("At least one source domain is required (or a prior WS-UDA checkpoint for 2st)")

        for name, source in self.domains.items():
            files = list(source.labeled) + list(source.unlabeled) + ([source.labels] if source.labels else [])
            if not files:
                raise ConfigurationError(f"Domain '{name}' lists no corpus files")
            missing = [str(path) for path in files if not Path(path).is_file()]
            if missing:
                raise ConfigurationError(f"Domain '{name}' references missing files: {missing}")

        for name in self.source_names:
            if not self.domains[name].labeled and self.domains[name].labels is None:
                raise ConfigurationError(f"Source domain '{name}' has no labeled data")

    def resolved_dump(self) -> dict:
        """Every field materialised, JSON-ready"""
        return self.model_dump(mode="json", by_alias=True)
