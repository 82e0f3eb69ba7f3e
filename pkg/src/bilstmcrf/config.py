"""Run configuration.  Defaults are the published hyper-parameters.

Config files are UTF-8 ``key = value`` lines; ``#`` starts a comment.  Keys
are the field names below or the hyper-parameter names as printed in the
results table, lower-cased with spaces turned into underscores
(``hidden_size_char = 30``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

ALIASES = {
    "character_dimension": "char_dim",
    "word_dimension": "word_dim",
    "hidden_size_char": "hidden_char",
    "hidden_size_word": "hidden_word",
    "dropout_character_embedding": "dropout_char",
    "dropout_two_bi-lstm_layers": "dropout_bilstm",
    "learning_rate_first_20_epoch": "lr_phase1",
    "learning_rate_last_20_epoch": "lr_phase2",
}


@dataclass
class Config:
    char_dim: int = 60
    word_dim: int = 300
    hidden_char: int = 30
    hidden_word: int = 64
    dropout_char: float = 0.3
    dropout_bilstm: float = 0.5
    batch_size: int = 64
    epochs: int = 40
    lr_phase1: float = 0.004
    lr_phase2: float = 0.0004
    phase1_epochs: int = 20
    seed: int = 1
    freeze_embeddings: bool = True
    clip_norm: float = 0.0
    dtype: str = "float32"
    train: str = ""
    validation: str = ""
    test: str = ""
    embeddings: str = ""
    checkpoint: str = "model.ckpt"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        cfg = cls()
        cfg.update(d)
        return cfg

    def update(self, values: dict) -> None:
        types = {f.name: f.type for f in fields(self)}
        for key, raw in values.items():
            name = ALIASES.get(key, key)
            if name not in types:
                raise KeyError(f"unknown config key {key!r}")
            setattr(self, name, _coerce(raw, types[name], name))

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())


def _coerce(value, kind: str, name: str):
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
    except ValueError:
        raise ValueError(f"config key {name}: cannot read {value!r} as {kind}") from None
    return value


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().lower().replace(" ", "_")] = value.strip()
    return values


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return Config.from_dict(parse_config_text(fh.read()))
