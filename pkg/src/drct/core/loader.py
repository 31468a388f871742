"""Configuration, image and table loading utilities for drct."""

import copy
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import cv2
import numpy as np
import torch
import yaml
from pydantic import ValidationError as PydanticValidationError

from .config import RunConfig
from .exceptions import ConfigError, DataLoadError
from .image import ImageTensor, ValueRange

logger = logging.getLogger(__name__)

DEFAULTS_DIR = Path(__file__).parent.parent / 'defaults'


def _set_dotted(target: Dict[str, Any], dotted_key: str, value: Any) -> None:
    """Set ``a.b.c`` inside a nested dict, creating levels as needed."""
    node = target
    parts = dotted_key.split('.')
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def apply_overrides(
    config_dict: Dict[str, Any],
    overrides: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Merge dotted-key overrides over a raw configuration dictionary.

    Args:
        config_dict: Configuration as parsed from YAML.
        overrides: Mapping like ``{'model.scale': 2, 'seed': 3}``. Keys
            whose value is None are ignored so unset CLI flags do not clobber
            the file.

    Returns:
        A new dictionary with the overrides applied.
    """
    merged = copy.deepcopy(config_dict or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        _set_dotted(merged, key, value)
    return merged


def load_config_from_file(
    config_path: str,
    overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    Load a run configuration from a YAML file.

    Args:
        config_path: Path to the YAML configuration file.
        overrides: Optional dotted-key overrides applied before validation.

    Returns:
        RunConfig: Validated configuration model.

    Raises:
        ConfigError: If the file cannot be read, parsed or validated. The
            message names the violated key.
    """
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config_dict = yaml.safe_load(f) or {}
    except (IOError, yaml.YAMLError) as e:
        raise ConfigError(
            f"Failed to load configuration from {config_path}: {e}"
        )
    return build_run_config(config_dict, overrides, source=config_path)


def build_run_config(
    config_dict: Dict[str, Any],
    overrides: Optional[Dict[str, Any]] = None,
    source: str = "<dict>"
) -> RunConfig:
    """Validate a raw dictionary (plus overrides) into a RunConfig."""
    merged = apply_overrides(config_dict, overrides)
    try:
        return RunConfig(**merged)
    except PydanticValidationError as e:
        problems = '; '.join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"Invalid configuration in {source}: {problems}")


def load_default_config(
    overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """Load the bundled desk-scale configuration."""
    config_path = DEFAULTS_DIR / 'config.yaml'
    print(f"✓ Using default configuration from {DEFAULTS_DIR}")
    return load_config_from_file(str(config_path), overrides)


def write_effective_config(config: RunConfig, run_dir: str) -> Path:
    """Echo the fully resolved configuration into the run directory."""
    path = Path(run_dir) / 'effective_config.yaml'
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(
            config.model_dump(mode='json'), f, sort_keys=False
        )
    return path


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def read_image(path: str) -> ImageTensor:
    """
    Read an 8-bit PNG as a unit-range RGB ImageTensor of shape [1, 3, H, W].

    Grayscale files are expanded to three channels and alpha is dropped.

    Raises:
        DataLoadError: If the file is missing, unreadable or not 8-bit.
    """
    if not Path(path).is_file():
        raise DataLoadError(f"Image not found: {path}", path=str(path))
    array = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if array is None:
        raise DataLoadError(f"Could not decode image: {path}", path=str(path))
    if array.dtype != np.uint8:
        raise DataLoadError(
            f"Only 8-bit images are supported, {path} is {array.dtype}",
            path=str(path)
        )
    if array.ndim == 2:
        array = np.stack([array] * 3, axis=-1)
    elif array.shape[2] == 4:
        array = array[:, :, :3]
    array = cv2.cvtColor(array, cv2.COLOR_BGR2RGB)
    tensor = torch.from_numpy(np.ascontiguousarray(array)).permute(2, 0, 1)
    tensor = tensor.unsqueeze(0).float() / 255.0
    return ImageTensor(tensor, ValueRange.UNIT)


def write_image(path: str, image: ImageTensor) -> Path:
    """Write the first batch element of an RGB ImageTensor as an 8-bit PNG."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    levels = image.to_eight_bit().data[0]
    array = levels.permute(1, 2, 0).cpu().numpy().astype(np.uint8)
    array = cv2.cvtColor(array, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(out_path), array):
        raise DataLoadError(f"Could not write image: {out_path}",
                            path=str(out_path))
    return out_path
