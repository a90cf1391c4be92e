"""Run configuration: descriptor geometry, classifier and fusion settings.

Config files are JSON or TOML. Grammar (TOML subset is enough)::

    seed = 7
    workers = 1

    [descriptor]
    working_size = 320
    lbp_radius = 1

    [classifiers]
    svm_c = 1.0
    srkda_sigma = "median"   # or a positive number

    [fusion]
    bootstrap_replicates = 100

Unknown sections or keys are rejected.
"""

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DescriptorConfig:
    working_size: int = 320
    center_crop: float = 1.0
    pyramid_levels: int = 3
    lbp_points: int = 8
    lbp_radius: int = 1
    hog_cell: int = 8
    hog_bins: int = 9
    hog_block: int = 2
    bsif_size: int = 11
    bsif_bits: int = 8
    color_convention: str = "hsv-hexcone+ycbcr-bt601-full"

    def validate(self):
        if self.lbp_points != 8:
            raise ConfigError("only lbp_points = 8 is supported")
        if self.lbp_radius < 1:
            raise ConfigError("lbp_radius must be >= 1")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not 0.0 < self.center_crop <= 1.0:
            raise ConfigError("center_crop must be in (0, 1]")
        if self.hog_cell < 2 or self.hog_bins < 2 or self.hog_block < 1:
            raise ConfigError("invalid HoG geometry")
        if (self.bsif_size, self.bsif_bits) != (11, 8):
            raise ConfigError("the shipped BSIF bank is 11x11 with 8 filters")
        smallest = -(-self.working_size // 2 ** (self.pyramid_levels - 1))
        if self.working_size < 2 ** self.pyramid_levels or smallest < self.hog_cell * self.hog_block:
            raise ConfigError(
                f"working_size {self.working_size} too small for {self.pyramid_levels} levels "
                f"and {self.hog_block}x{self.hog_block} blocks of {self.hog_cell}px cells"
            )
        if self.color_convention != DescriptorConfig.color_convention:
            raise ConfigError(f"unsupported color_convention {self.color_convention!r}")

    def digest(self):
        from .features import default_filterbank

        payload = json.dumps(asdict(self), sort_keys=True).encode()
        bank = default_filterbank().tobytes()
        return hashlib.sha256(payload + hashlib.sha256(bank).digest()).hexdigest()


@dataclass(frozen=True)
class ClassifierConfig:
    svm_c: float = 1.0
    svm_gap_tol: float = 1e-6
    srkda_sigma: object = "median"
    srkda_delta: float = 0.01
    pcrc_lambda: float = 0.01
    pcrc_bias: float = 1.0

    def validate(self):
        if not self.svm_c > 0 or not self.svm_gap_tol > 0:
            raise ConfigError("svm_c and svm_gap_tol must be positive")
        if self.srkda_sigma != "median" and not (isinstance(self.srkda_sigma, (int, float)) and self.srkda_sigma > 0):
            raise ConfigError("srkda_sigma must be 'median' or a positive number")
        if not self.srkda_delta > 0:
            raise ConfigError("srkda_delta must be > 0")
        if not self.pcrc_lambda > 0:
            raise ConfigError("pcrc_lambda must be > 0")
        if not self.pcrc_bias >= 0:
            raise ConfigError("pcrc_bias must be >= 0")


@dataclass(frozen=True)
class FusionConfig:
    bootstrap_replicates: int = 100
    dev_fraction: float = 0.2
    weighting: str = "one_minus_eer"

    def validate(self):
        if self.bootstrap_replicates < 1:
            raise ConfigError("bootstrap_replicates must be >= 1")
        if not 0.0 < self.dev_fraction < 1.0:
            raise ConfigError("dev_fraction must be in (0, 1)")
        if self.weighting not in ("one_minus_eer", "inverse_eer"):
            raise ConfigError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class Config:
    seed: int = 0
    workers: int = 1
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def validate(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.descriptor.validate()
        self.classifiers.validate()
        self.fusion.validate()
        return self

    def to_dict(self):
        return asdict(self)

    def with_overrides(self, seed=None, workers=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        return cfg.validate()


_SECTIONS = {"descriptor": DescriptorConfig, "classifiers": ClassifierConfig, "fusion": FusionConfig}


def _coerce(cls, name, value, default):
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{cls.__name__}.{name}: booleans are not accepted")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) and name != "srkda_sigma":
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for k, v in data.items():
        if k in _SECTIONS:
            kwargs[k] = _build(_SECTIONS[k], v, k)
        else:
            kwargs[k] = _coerce(cls, k, v, getattr(defaults, k))
    return cls(**kwargs)


def config_from_dict(data):
    return _build(Config, data, "config").validate()


def load_config(path=None):
    if path is None:
        return Config().validate()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    return config_from_dict(data)
