"""
Same-task progressive training: pretrain -> L1 fine-tune -> L2 polish.

Each stage restarts Adam and the multistep schedule while carrying the
network parameters over unchanged.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn as nn

from drct.core.checkpoint import (
    load_checkpoint,
    restore_optimizer,
    restore_parameters,
    save_checkpoint,
)
from drct.core.config import RunConfig, StageConfig, StagePlan
from drct.core.exceptions import DataLoadError, TrainingDivergedError
from drct.core.image import ImageTensor
from drct.core.logging import MetricLog
from drct.core.seeding import seed_everything
from drct.data.dataset import (
    ImagePair,
    PatchSpec,
    SRPatchDataset,
    load_pair,
    make_loader,
    make_synthetic_corpus,
    scan_manifest,
)
from drct.model.network import DRCT, build_model

from .losses import get_loss, l2_loss
from .metrics import psnr
from .schedule import lr_at

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

Batch = Tuple[torch.Tensor, torch.Tensor]


@dataclass
class TrainState:
    """
    Mutable training state.

    ``iteration`` counts optimizer steps over the whole run and never
    decreases; ``stage_iteration`` restarts at zero with every stage and
    drives the learning-rate schedule.
    """

    optimizer: torch.optim.Optimizer
    iteration: int = 0
    stage_index: int = 0
    stage_iteration: int = 0
    best_val_psnr: float = float('-inf')
    completed: bool = False
    history: List[float] = field(default_factory=list)


def make_optimizer(net: nn.Module, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(
        net.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS,
        weight_decay=0.0,
    )


def optimizer_moments(state: TrainState, net: nn.Module
                      ) -> Dict[str, Tuple[torch.Tensor, torch.Tensor]]:
    """(exp_avg, exp_avg_sq) per parameter name; zeros before the first step."""
    moments = {}
    for name, param in net.named_parameters():
        entry = state.optimizer.state.get(param) or {}
        moments[name] = (
            entry.get('exp_avg', torch.zeros_like(param)),
            entry.get('exp_avg_sq', torch.zeros_like(param)),
        )
    return moments


def train_step(state: TrainState, net: nn.Module, batch: Batch,
               stage: StageConfig, loss_kind: Optional[str] = None,
               grad_clip: Optional[float] = None) -> Tuple[TrainState, float]:
    """
    One Adam update at ``lr_at(stage_iteration)``.

    Args:
        state: Training state; its optimizer is stepped in place.
        net: Network being trained.
        batch: (lr, hr) tensors.
        stage: Active stage; supplies the schedule and default loss.
        loss_kind: Overrides ``stage.loss``.
        grad_clip: Optional max gradient norm.

    Returns:
        (state, loss) with both iteration counters advanced.

    Raises:
        TrainingDivergedError: If the loss is not finite; no update is made.
    """
    lr_value = lr_at(state.stage_iteration, stage.base_lr, stage.total_iters,
                     stage.milestones)
    for group in state.optimizer.param_groups:
        group['lr'] = lr_value

    lr_batch, hr_batch = batch
    loss_fn = get_loss(loss_kind or stage.loss)
    net.train()
    state.optimizer.zero_grad()
    loss = loss_fn(net(lr_batch), hr_batch)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"Non-finite loss ({loss.item()}) at iteration {state.iteration}",
            iteration=state.iteration,
        )
    loss.backward()
    if grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(net.parameters(), grad_clip)
    state.optimizer.step()

    state.iteration += 1
    state.stage_iteration += 1
    value = float(loss.item())
    state.history.append(value)
    return state, value


def advance_stage(plan: StagePlan, state: TrainState,
                  net: nn.Module) -> TrainState:
    """
    Move to the next stage with fresh Adam moments and a restarted schedule.

    Past the final stage the state is marked ``completed``; this is not an
    error. Parameters are never touched.
    """
    state.stage_index += 1
    state.stage_iteration = 0
    if state.stage_index >= len(plan.stages):
        state.completed = True
        return state
    stage = plan.stages[state.stage_index]
    state.optimizer = make_optimizer(net, stage.base_lr)
    logger.info(f"✓ Entering stage '{stage.id}' ({stage.loss.upper()} loss, "
                f"{stage.total_iters} iterations)")
    return state


class Trainer:
    """
    Runs every stage of a RunConfig's plan with periodic validation and
    checkpointing under ``run_dir``.

    Checkpoints written: ``latest.ckpt`` every ``checkpoint_every`` steps,
    ``best.ckpt`` on a new best validation PSNR and ``<stage id>.ckpt`` at the
    end of each stage. Metrics go to ``metrics.tsv``.

    Raises:
        ConfigError: If the stage list is empty or training.patch does not
            divide by model.scale.
    """

    def __init__(self, config: RunConfig, run_dir: Optional[str] = None,
                 net: Optional[DRCT] = None, device: str = 'cpu'):
        config.check_trainable()
        self.config = config
        self.plan = config.training.plan()
        self.run_dir = Path(run_dir or config.output_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.device = torch.device(device)
        seed_everything(config.seed, config.deterministic)

        self.net = (net or build_model(config.model, seed=config.seed)).to(
            self.device
        )
        first = self.plan.stages[0]
        self.state = TrainState(make_optimizer(self.net, first.base_lr))
        self.metric_log = MetricLog(str(self.run_dir / 'metrics.tsv'))
        self._val_pairs: Optional[List[ImagePair]] = None
        self.stage_entry_val: Dict[str, Dict[str, float]] = {}
        self.stage_exit_val: Dict[str, Dict[str, float]] = {}

    # -- data -------------------------------------------------------------

    def _corpus_root(self, corpus: str, name: str, count: int,
                     seed_offset: int) -> str:
        if corpus == 'synthetic':
            root = self.run_dir / 'synthetic' / name
            if not (root / 'HR').is_dir():
                make_synthetic_corpus(
                    str(root), count=count,
                    size=self.config.data.synthetic_size,
                    seed=self.config.seed + seed_offset,
                )
            return str(root)
        if corpus == 'train':
            if not self.config.data.train_root:
                raise DataLoadError(
                    "stage corpus 'train' needs data.train_root"
                )
            return self.config.data.train_root
        return corpus

    def stage_dataset(self, stage_index: int) -> SRPatchDataset:
        stage = self.plan.stages[stage_index]
        root = self._corpus_root(stage.corpus, 'train',
                                 self.config.data.synthetic_images, 0)
        scale = self.config.model.scale
        manifest = scan_manifest(root, scale, 'train')
        dataset = SRPatchDataset.from_manifest(
            manifest,
            PatchSpec(self.config.training.patch, scale),
            batch_size=self.config.training.batch_size,
            seed=self.config.seed,
            augmentation=self.config.training.augmentation,
        )
        dataset.stage_index = stage_index
        return dataset

    def validation_pairs(self) -> List[ImagePair]:
        if self._val_pairs is None:
            data = self.config.data
            root = data.val_root or self._corpus_root(
                'synthetic', 'val', max(2, data.synthetic_images // 5), 10_000
            )
            manifest = scan_manifest(root, self.config.model.scale, 'val')
            pairs = [load_pair(e, self.config.model.scale)
                     for e in manifest.entries()]
            self._val_pairs = pairs[:data.val_limit] if data.val_limit else pairs
        return self._val_pairs

    # -- evaluation -------------------------------------------------------

    def validate(self) -> Dict[str, float]:
        """Mean PSNR (2*scale border crop) and mean L2 loss on the val set."""
        crop = 2 * self.config.model.scale
        psnrs, l2s = [], []
        self.net.eval()
        with torch.no_grad():
            for hr, lr in self.validation_pairs():
                sr = self.net(lr.data.to(self.device)).cpu()
                l2s.append(float(l2_loss(sr, hr.data).item()))
                sr_image = ImageTensor(sr.clamp(0, 1), hr.value_range)
                psnrs.append(psnr(sr_image, hr, crop=crop))
        return {
            'psnr': sum(psnrs) / len(psnrs),
            'l2': sum(l2s) / len(l2s),
        }

    # -- checkpoints ------------------------------------------------------

    def save(self, name: str) -> Path:
        stage = self.plan.stages[min(self.state.stage_index,
                                     len(self.plan.stages) - 1)]
        best = self.state.best_val_psnr
        return save_checkpoint(
            str(self.run_dir / name), self.net, self.config.model,
            iteration=self.state.iteration, stage=stage.id,
            seed=self.config.seed, optimizer=self.state.optimizer,
            extra={
                'stage_index': self.state.stage_index,
                'stage_iteration': self.state.stage_iteration,
                'best_val_psnr': None if math.isinf(best) else best,
            },
        )

    def resume(self, path: str) -> None:
        """Restore parameters, Adam moments and counters from a checkpoint."""
        checkpoint = load_checkpoint(path)
        restore_parameters(self.net, checkpoint)
        meta = checkpoint.metadata
        self.state.stage_index = int(meta.get('stage_index', 0))
        self.state.stage_iteration = int(meta.get('stage_iteration', 0))
        self.state.iteration = checkpoint.iteration
        best = meta.get('best_val_psnr')
        self.state.best_val_psnr = float('-inf') if best is None else best
        if self.state.stage_index >= len(self.plan.stages):
            self.state.completed = True
        stage = self.plan.stages[
            min(self.state.stage_index, len(self.plan.stages) - 1)
        ]
        self.state.optimizer = make_optimizer(self.net, stage.base_lr)
        restore_optimizer(self.state.optimizer, self.net, checkpoint)
        logger.info(f"✓ Resumed from {path} at iteration "
                    f"{self.state.iteration} (stage '{stage.id}')")

    # -- loop -------------------------------------------------------------

    def _batches(self, dataset: SRPatchDataset, stage: StageConfig):
        start = self.state.stage_iteration
        workers = self.config.training.num_workers
        if workers > 0:
            yield from make_loader(dataset, start, stage.total_iters, workers)
        else:
            for iteration in range(start, stage.total_iters):
                yield dataset.batch(iteration)

    def run_stage(self) -> None:
        training = self.config.training
        index = self.state.stage_index
        stage = self.plan.stages[index]
        if stage.init_checkpoint and self.state.stage_iteration == 0:
            restore_parameters(self.net, load_checkpoint(stage.init_checkpoint))
            logger.info(f"✓ Stage '{stage.id}' initialised from "
                        f"{stage.init_checkpoint}")
        if self.state.stage_iteration == 0:
            self.stage_entry_val[stage.id] = self.validate()

        dataset = self.stage_dataset(index)
        for lr_batch, hr_batch in self._batches(dataset, stage):
            batch = (lr_batch.to(self.device), hr_batch.to(self.device))
            _, loss = train_step(self.state, self.net, batch, stage,
                                 grad_clip=training.grad_clip)
            step = self.state.stage_iteration
            record = None
            if step % training.log_every == 0 or step == stage.total_iters:
                record = {
                    'iteration': self.state.iteration, 'stage': stage.id,
                    'lr': self.state.optimizer.param_groups[0]['lr'],
                    'loss': loss, 'val_psnr': None,
                }
            if step % training.val_every == 0 or step == stage.total_iters:
                val_psnr = self.validate()['psnr']
                record = record or {
                    'iteration': self.state.iteration, 'stage': stage.id,
                    'lr': self.state.optimizer.param_groups[0]['lr'],
                    'loss': loss,
                }
                record['val_psnr'] = val_psnr
                if val_psnr > self.state.best_val_psnr:
                    self.state.best_val_psnr = val_psnr
                    self.save('best.ckpt')
            if record is not None:
                self.metric_log.write(record)
                logger.info(
                    f"[{stage.id}] iter {step}/{stage.total_iters} "
                    f"loss {loss:.6f} lr {record['lr']:.3e}"
                    + (f" val_psnr {record['val_psnr']:.2f}"
                       if record.get('val_psnr') is not None else "")
                )
            if step % training.checkpoint_every == 0:
                self.save('latest.ckpt')

        self.stage_exit_val[stage.id] = self.validate()
        self.save(f'{stage.id}.ckpt')
        logger.info(f"✓ Stage '{stage.id}' finished at iteration "
                    f"{self.state.iteration}")

    def run(self) -> TrainState:
        if not self.state.completed:
            first = self.plan.stages[self.state.stage_index]
            logger.info(f"✓ Training {len(self.plan.stages)} stage(s), "
                        f"starting with '{first.id}'")
        while not self.state.completed:
            self.run_stage()
            advance_stage(self.plan, self.state, self.net)
        self.save('final.ckpt')
        return self.state
