# -*- coding: utf-8 -*-

"""
Run configuration files.

Format: one `key = value` per line, `#` starts a comment. Nested fields use
dotted keys (`encoder.hidden = 128`, `loss.lambda = 2`), comma-separated
values become lists (`generator.down_channels = 64,96,128,128,128`).
A `preset` key (desk | full | tiny) selects the defaults the other keys override,
wherever it appears in the file.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from loguru import logger
from pydantic import ValidationError

from cma_inpaint.exceptions import ConfigError, format_validation_errors
from cma_inpaint.models import TrainConfig

# Full-scale optimizer and width settings; image size and patch size stay at desk scale
PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {},
    "full": {
        "batch_size": 128,
        "max_epochs": 200,
        "warmup_steps": 2000,
        "encoder": {"hidden": 768, "heads": 12, "layers": 12, "ffn": 3072},
    },
    # Smallest consistent model: full-graph gradient checks and fast end-to-end runs
    "tiny": {
        "batch_size": 2,
        "steps": 20,
        "warmup_steps": 5,
        "checkpoint_every": 10,
        "synth": {"image_size": 32, "max_seq_len": 8, "n_samples": 32, "val_samples": 4},
        "encoder": {"hidden": 16, "heads": 2, "layers": 2, "ffn": 32, "max_text_len": 8, "num_patches": 16},
        "generator": {
            "down_channels": (8, 8, 16, 16, 16),
            "up_channels": (16, 16, 16, 8, 8),
            "skip_channels": 4,
        },
        "discriminator": {"channels": (8, 16, 16, 16, 16)},
    },
}


def _merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """
    Parses config-file text into a nested dict of raw string values.

    Args:
        text: File content
        source: Name used in error messages

    Returns:
        Nested dict (dotted keys expanded), values are strings or lists of strings

    Raises:
        ConfigError: On a line without '=', an empty key or a duplicate key
    """
    tree: Dict[str, Any] = {}
    seen = set()
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw_line.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"{source}:{number}: empty key in {raw_line.strip()!r}")
        if key in seen:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'")
        seen.add(key)
        parsed: Any = [item.strip() for item in value.split(",")] if "," in value else value
        node = tree
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{source}:{number}: '{part}' is a value, not a section")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"{source}:{number}: '{key}' is a section, not a value")
        node[leaf] = parsed
    return tree


def build_config(values: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """
    Validates raw values on top of the selected preset.

    Raises:
        ConfigError: On an unknown preset, unknown key or invalid value
    """
    values = dict(values or {})
    preset = values.get("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r} (expected one of {', '.join(PRESETS)})")
    try:
        return TrainConfig.model_validate(_merge(PRESETS[preset], values))
    except ValidationError as exc:
        raise ConfigError(format_validation_errors(exc.errors())) from None


def load_config_file(path: Union[str, Path]) -> TrainConfig:
    """
    Reads and validates a run configuration file.

    Args:
        path: Config file path

    Returns:
        Validated TrainConfig

    Raises:
        ConfigError: If the file is unreadable or invalid
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    cfg = build_config(parse_config_text(text, source=str(path)))
    logger.info(f"[Config] Loaded {path} (preset={cfg.preset}, steps={cfg.total_steps})")
    return cfg


def dump_config(cfg: TrainConfig) -> str:
    """Renders a config back into the file format (every field, dotted keys)."""
    lines = []

    def walk(prefix: str, data: Mapping[str, Any]) -> None:
        for key, value in data.items():
            if isinstance(value, Mapping):
                walk(f"{prefix}{key}.", value)
            elif isinstance(value, (list, tuple)):
                lines.append(f"{prefix}{key} = {','.join(str(v) for v in value)}")
            elif value is not None:
                lines.append(f"{prefix}{key} = {value}")

    walk("", cfg.model_dump(by_alias=True))
    return "\n".join(lines) + "\n"
