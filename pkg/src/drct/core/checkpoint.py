"""
Checkpoint envelope.

A checkpoint is a single zip archive holding:

    config.yaml      ModelConfig as YAML
    metadata.yaml    iteration, stage, seed, format_version, optimizer step
    parameters.tsv   index of records (name, shape, offset, count)
    parameters.bin   every record as little-endian float32, in index order

Records are the network parameters followed, when an optimizer is saved, by
its Adam moments under ``exp_avg.<name>`` and ``exp_avg_sq.<name>``.
"""

import io
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import torch
import yaml
from pandera.errors import SchemaError, SchemaErrors
from pydantic import ValidationError as PydanticValidationError

from .config import ModelConfig
from .exceptions import CheckpointError
from .schemas import ParameterIndexSchema

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
SUPPORTED_FORMAT_VERSIONS = (1,)

_MEMBERS = ('config.yaml', 'metadata.yaml', 'parameters.tsv',
            'parameters.bin')
_MOMENT_PREFIXES = ('exp_avg', 'exp_avg_sq')
_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    """In-memory view of a loaded checkpoint envelope."""

    config: ModelConfig
    parameters: Dict[str, torch.Tensor]
    metadata: Dict[str, Any]
    moments: Dict[str, Dict[str, torch.Tensor]] = field(default_factory=dict)

    @property
    def iteration(self) -> int:
        return int(self.metadata.get('iteration', 0))

    @property
    def stage(self) -> Optional[str]:
        return self.metadata.get('stage')

    @property
    def has_optimizer_state(self) -> bool:
        return bool(self.moments)


def _shape_to_text(shape) -> str:
    return ','.join(str(d) for d in shape)


def _text_to_shape(text: str) -> List[int]:
    return [int(d) for d in str(text).split(',') if d != '']


def _adam_moments(net: torch.nn.Module,
                  optimizer: torch.optim.Optimizer) -> Dict[str, Dict[str, torch.Tensor]]:
    moments: Dict[str, Dict[str, torch.Tensor]] = {}
    for name, param in net.named_parameters():
        state = optimizer.state.get(param)
        if not state:
            continue
        moments[name] = {key: state[key] for key in _MOMENT_PREFIXES}
    return moments


def _optimizer_step(net: torch.nn.Module,
                    optimizer: torch.optim.Optimizer) -> int:
    for param in net.parameters():
        state = optimizer.state.get(param)
        if state and 'step' in state:
            return int(state['step'])
    return 0


def save_checkpoint(
    path: str,
    net: torch.nn.Module,
    config: ModelConfig,
    iteration: int = 0,
    stage: Optional[str] = None,
    seed: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write a checkpoint envelope.

    Args:
        path: Destination archive path; parent directories are created.
        net: Network whose parameters are stored.
        config: The ModelConfig the network was built from.
        iteration: Training iteration reached.
        stage: Active training stage id.
        seed: Run seed.
        optimizer: When given, its Adam moments and step are stored too.
        extra: Additional metadata entries (e.g. stage_index, best_val_psnr).

    Returns:
        Path to the written archive.
    """
    records: List[tuple] = [
        (name, param.detach()) for name, param in net.named_parameters()
    ]
    metadata: Dict[str, Any] = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'iteration': int(iteration),
        'stage': stage,
        'seed': int(seed),
    }
    if optimizer is not None:
        moments = _adam_moments(net, optimizer)
        for prefix in _MOMENT_PREFIXES:
            for name, state in moments.items():
                records.append((f"{prefix}.{name}", state[prefix].detach()))
        metadata['optimizer_step'] = _optimizer_step(net, optimizer)
    metadata.update(extra or {})

    index_rows = []
    blobs = []
    offset = 0
    for name, tensor in records:
        array = tensor.cpu().numpy().astype(_DTYPE, copy=False).ravel()
        index_rows.append({
            'name': name,
            'shape': _shape_to_text(tensor.shape),
            'offset': offset,
            'count': int(array.size),
        })
        blobs.append(array.tobytes())
        offset += int(array.size)
    index = pd.DataFrame(index_rows, columns=['name', 'shape', 'offset', 'count'])

    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with zipfile.ZipFile(out_path, 'w', zipfile.ZIP_DEFLATED) as archive:
            archive.writestr('config.yaml', yaml.safe_dump(
                config.model_dump(mode='json'), sort_keys=False
            ))
            archive.writestr('metadata.yaml', yaml.safe_dump(
                metadata, sort_keys=False
            ))
            archive.writestr('parameters.tsv',
                             index.to_csv(sep='\t', index=False))
            archive.writestr('parameters.bin', b''.join(blobs))
    except OSError as e:
        raise CheckpointError(f"Could not write checkpoint {out_path}: {e}",
                              path=str(out_path))
    logger.debug(f"Saved checkpoint {out_path} at iteration {iteration}")
    return out_path


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint envelope.

    Raises:
        CheckpointError: If the archive is missing, malformed, or carries an
            unknown format version.
    """
    ckpt_path = Path(path)
    if not ckpt_path.is_file():
        raise CheckpointError(f"Checkpoint not found: {ckpt_path}",
                              path=str(ckpt_path))
    try:
        with zipfile.ZipFile(ckpt_path, 'r') as archive:
            missing = [m for m in _MEMBERS if m not in archive.namelist()]
            if missing:
                raise CheckpointError(
                    f"Checkpoint {ckpt_path} is missing {missing}",
                    path=str(ckpt_path)
                )
            metadata = yaml.safe_load(archive.read('metadata.yaml')) or {}
            config_dict = yaml.safe_load(archive.read('config.yaml')) or {}
            index_text = archive.read('parameters.tsv').decode('utf-8')
            payload = archive.read('parameters.bin')
    except (zipfile.BadZipFile, yaml.YAMLError) as e:
        raise CheckpointError(f"Malformed checkpoint {ckpt_path}: {e}",
                              path=str(ckpt_path))

    version = metadata.get('format_version')
    if version not in SUPPORTED_FORMAT_VERSIONS:
        raise CheckpointError(
            f"Unsupported checkpoint format_version {version!r} in "
            f"{ckpt_path}; supported: {list(SUPPORTED_FORMAT_VERSIONS)}",
            path=str(ckpt_path)
        )

    try:
        config = ModelConfig(**config_dict)
    except PydanticValidationError as e:
        raise CheckpointError(
            f"Checkpoint {ckpt_path} holds an invalid model config: {e}",
            path=str(ckpt_path)
        )

    try:
        index = pd.read_csv(io.StringIO(index_text), sep='\t',
                            keep_default_na=False, dtype={'shape': str})
        index = ParameterIndexSchema.validate(index)
    except (SchemaError, SchemaErrors, pd.errors.ParserError) as e:
        raise CheckpointError(
            f"Checkpoint {ckpt_path} has an invalid parameter index: {e}",
            path=str(ckpt_path)
        )

    values = np.frombuffer(payload, dtype=_DTYPE)
    parameters: Dict[str, torch.Tensor] = {}
    moments: Dict[str, Dict[str, torch.Tensor]] = {}
    for row in index.itertuples(index=False):
        end = row.offset + row.count
        if end > values.size:
            raise CheckpointError(
                f"Record '{row.name}' runs past the end of parameters.bin",
                path=str(ckpt_path)
            )
        tensor = torch.from_numpy(
            values[row.offset:end].copy()
        ).reshape(_text_to_shape(row.shape))
        prefix, _, name = row.name.partition('.')
        if prefix in _MOMENT_PREFIXES and name:
            moments.setdefault(name, {})[prefix] = tensor
        else:
            parameters[row.name] = tensor

    return Checkpoint(config, parameters, metadata, moments)


def restore_parameters(net: torch.nn.Module, checkpoint: Checkpoint) -> None:
    """Copy checkpoint parameters into ``net``; names and shapes must match."""
    expected = dict(net.named_parameters())
    missing = sorted(set(expected) - set(checkpoint.parameters))
    unexpected = sorted(set(checkpoint.parameters) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"Checkpoint parameters do not match the network "
            f"(missing: {missing[:5]}, unexpected: {unexpected[:5]})"
        )
    with torch.no_grad():
        for name, param in expected.items():
            stored = checkpoint.parameters[name]
            if tuple(stored.shape) != tuple(param.shape):
                raise CheckpointError(
                    f"Shape mismatch for '{name}': checkpoint "
                    f"{tuple(stored.shape)} vs network {tuple(param.shape)}"
                )
            param.copy_(stored.to(dtype=param.dtype, device=param.device))


def restore_optimizer(optimizer: torch.optim.Optimizer, net: torch.nn.Module,
                      checkpoint: Checkpoint) -> None:
    """Load stored Adam moments and step into ``optimizer`` for ``net``."""
    if not checkpoint.has_optimizer_state:
        return
    step = float(checkpoint.metadata.get('optimizer_step', 0))
    for name, param in net.named_parameters():
        stored = checkpoint.moments.get(name)
        if stored is None:
            continue
        optimizer.state[param] = {
            'step': torch.tensor(step),
            'exp_avg': stored['exp_avg'].to(dtype=param.dtype,
                                            device=param.device).clone(),
            'exp_avg_sq': stored['exp_avg_sq'].to(dtype=param.dtype,
                                                  device=param.device).clone(),
        }
