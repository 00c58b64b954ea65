"""Model/run configuration: defaults, validation, and the flat
`key = value` config-file format. CLI flags override file values; unknown
keys are errors.
"""

import dataclasses
from dataclasses import dataclass

ARCHS = ("baseline", "aam", "saam")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    arch: str = "saam"
    d_model: int = 300
    d_hidden: int = 2048
    n_head: int = 5
    n_layer: int = 6
    rnn_layers: int = 2
    rnn_hidden: int = 300
    batch: int = 128
    lr: float = 1e-3
    smoothing: float = 0.1
    use_sememes: bool = True
    use_position: bool = True
    use_adaptive: bool = True
    use_char_cnn: bool = False
    max_sememes: int = 32
    max_def_len: int = 50
    seed: int = 0
    # training/artifact knobs
    epochs: int = 10
    patience: int = 20
    grad_clip: float = 5.0
    min_count: int = 1
    char_dim: int = 50
    char_widths: tuple = (2, 3, 4)
    char_filters: int = 100

    def validate(self) -> "ModelConfig":
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.d_model % self.n_head != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        if self.rnn_hidden % 2 != 0:
            raise ConfigError("rnn_hidden must be even (split across encoder directions)")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"smoothing {self.smoothing} outside [0,1)")
        if self.arch != "saam":
            for flag, value in (("use_sememes", self.use_sememes),
                                ("use_position", self.use_position),
                                ("use_adaptive", self.use_adaptive)):
                if not value:
                    raise ConfigError(f"{flag}=False is a saam ablation, arch is {self.arch}")
        if self.use_char_cnn and self.arch != "baseline":
            raise ConfigError("use_char_cnn applies to the baseline only")
        for field in ("d_model", "d_hidden", "n_head", "n_layer", "rnn_layers",
                      "rnn_hidden", "batch", "max_sememes", "max_def_len", "epochs"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["char_widths"] = list(self.char_widths)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}


def _coerce(name: str, raw):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELDS[name].type
    if isinstance(raw, str):
        raw = raw.strip()
        if kind == "bool" or kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        if kind == "int" or kind is int:
            return int(raw)
        if kind == "float" or kind is float:
            return float(raw)
        if kind == "tuple" or kind is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    if (kind == "tuple" or kind is tuple) and isinstance(raw, list):
        return tuple(raw)
    return raw


def config_from_dict(values: dict) -> ModelConfig:
    coerced = {name: _coerce(name, value) for name, value in values.items()}
    return ModelConfig(**coerced).validate()


def parse_config_file(path) -> dict:
    """Read `key = value` lines; '#' starts a comment, blanks are skipped.
    Returns the raw key/value mapping (validated against known keys)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value)
    return values


def load_config(path=None, overrides: dict | None = None) -> ModelConfig:
    values = parse_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    return config_from_dict(values)
