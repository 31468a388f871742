#!/usr/bin/env python3
"""Unit tests for losses, the learning-rate schedule and training steps."""

import math
import sys
import unittest
from pathlib import Path

import torch
import torch.nn as nn
from hypothesis import given, settings
from hypothesis import strategies as st

# Add src directory to import path.
sys.path.insert(0, str(Path(__file__).parents[2] / "src"))

from drct.core.config import StageConfig, StagePlan
from drct.core.exceptions import ArgumentError, ShapeError, TrainingDivergedError
from drct.engine.losses import get_loss, l1_loss, l2_loss
from drct.engine.schedule import lr_at, milestone_iterations
from drct.engine.trainer import (
    ADAM_BETAS,
    ADAM_EPS,
    TrainState,
    advance_stage,
    make_optimizer,
    optimizer_moments,
    train_step,
)
from drct.model.network import build_model

from tests.support import tiny_model


def _stage(stage_id="pretrain", loss="l1", total=4, base_lr=1e-3,
           milestones=(0.5,)):
    return StageConfig(id=stage_id, loss=loss, total_iters=total,
                       base_lr=base_lr, milestones=list(milestones))


def _batch(seed=0, dtype=torch.float32):
    generator = torch.Generator().manual_seed(seed)
    lr = torch.rand(2, 3, 4, 4, generator=generator, dtype=dtype)
    hr = torch.rand(2, 3, 4, 4, generator=generator, dtype=dtype)
    return lr, hr


class TestLosses(unittest.TestCase):

    def test_mean_reduction(self):
        self.assertEqual(float(l1_loss(torch.zeros(2, 3), torch.ones(2, 3))),
                         1.0)
        self.assertEqual(float(l2_loss(torch.zeros(4), torch.full((4,), 2.0))),
                         4.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            l1_loss(torch.zeros(2, 3), torch.zeros(3, 2))

    def test_lookup_is_case_insensitive(self):
        self.assertIs(get_loss("L2"), l2_loss)
        with self.assertRaises(ArgumentError):
            get_loss("huber")


class TestSchedule(unittest.TestCase):

    def test_published_milestones(self):
        self.assertEqual(lr_at(0), 2e-4)
        self.assertEqual(lr_at(299_999), 2e-4)
        self.assertEqual(lr_at(300_000), 1e-4)
        self.assertEqual(lr_at(500_000), 5e-5)
        self.assertEqual(lr_at(799_999), 6.25e-6)
        self.assertEqual(milestone_iterations(800_000)[0], 300_000)

    @settings(max_examples=50, deadline=None)
    @given(fraction=st.floats(0.0, 0.999),
           total=st.integers(10_000, 10_000_000))
    def test_curve_shape_independent_of_length(self, fraction, total):
        iteration = math.floor(fraction * total)
        rescaled = math.floor(fraction * 800_000)
        # Compare away from milestone boundaries where flooring can flip.
        near = any(abs(fraction - m) < 1e-3
                   for m in (0.375, 0.625, 0.8125, 0.875, 0.9375))
        if not near:
            self.assertEqual(lr_at(iteration, total=total), lr_at(rescaled))

    def test_monotone_non_increasing(self):
        rates = [lr_at(i, total=100) for i in range(100)]
        self.assertTrue(all(a >= b for a, b in zip(rates, rates[1:])))

    def test_invalid_total(self):
        with self.assertRaises(ArgumentError):
            lr_at(0, total=0)


class TestTrainStep(unittest.TestCase):

    def test_matches_hand_adam_over_three_steps(self):
        torch.manual_seed(0)
        net = nn.Conv2d(3, 3, 1).double()
        reference = {n: p.detach().clone() for n, p in net.named_parameters()}
        m = {n: torch.zeros_like(p) for n, p in reference.items()}
        v = {n: torch.zeros_like(p) for n, p in reference.items()}
        stage = _stage()
        state = TrainState(make_optimizer(net, stage.base_lr))
        beta1, beta2 = ADAM_BETAS

        for t in range(1, 4):
            batch = _batch(seed=t, dtype=torch.float64)
            # Gradient at the reference parameters.
            shadow = nn.Conv2d(3, 3, 1).double()
            with torch.no_grad():
                for name, param in shadow.named_parameters():
                    param.copy_(reference[name])
            l1_loss(shadow(batch[0]), batch[1]).backward()
            lr = lr_at(t - 1, stage.base_lr, stage.total_iters,
                       stage.milestones)
            for name, param in shadow.named_parameters():
                g = param.grad
                m[name] = beta1 * m[name] + (1 - beta1) * g
                v[name] = beta2 * v[name] + (1 - beta2) * g * g
                m_hat = m[name] / (1 - beta1 ** t)
                v_hat = v[name] / (1 - beta2 ** t)
                reference[name] = reference[name] - lr * m_hat / (
                    v_hat.sqrt() + ADAM_EPS
                )
            train_step(state, net, batch, stage)

        for name, param in net.named_parameters():
            self.assertTrue(torch.allclose(param, reference[name], rtol=1e-9,
                                           atol=1e-12), name)
        self.assertEqual(state.iteration, 3)
        self.assertEqual(state.stage_iteration, 3)
        self.assertEqual(state.optimizer.param_groups[0]["lr"], 5e-4)

    def test_zero_gradient_leaves_parameters(self):
        torch.manual_seed(0)
        net = nn.Conv2d(3, 3, 1)
        lr_batch = _batch()[0]
        hr_batch = net(lr_batch).detach()
        before = [p.detach().clone() for p in net.parameters()]
        state = TrainState(make_optimizer(net, 1e-3))
        _, loss = train_step(state, net, (lr_batch, hr_batch), _stage())
        self.assertEqual(loss, 0.0)
        for old, new in zip(before, net.parameters()):
            self.assertTrue(torch.equal(old, new))

    def test_non_finite_loss_raises_before_update(self):
        torch.manual_seed(0)
        net = nn.Conv2d(3, 3, 1)
        lr_batch, hr_batch = _batch()
        lr_batch[0, 0, 0, 0] = float("nan")
        before = [p.detach().clone() for p in net.parameters()]
        state = TrainState(make_optimizer(net, 1e-3))
        with self.assertRaises(TrainingDivergedError) as ctx:
            train_step(state, net, (lr_batch, hr_batch), _stage())
        self.assertEqual(ctx.exception.iteration, 0)
        self.assertEqual(state.iteration, 0)
        for old, new in zip(before, net.parameters()):
            self.assertTrue(torch.equal(old, new))

    def test_loss_override(self):
        torch.manual_seed(0)
        net = nn.Conv2d(3, 3, 1)
        lr_batch, hr_batch = _batch()
        expected = float(l2_loss(net(lr_batch), hr_batch))
        state = TrainState(make_optimizer(net, 1e-3))
        _, loss = train_step(state, net, (lr_batch, hr_batch), _stage(),
                             loss_kind="l2")
        self.assertAlmostEqual(loss, expected, places=6)

    def test_network_steps_are_deterministic(self):
        losses = []
        for _ in range(2):
            net = build_model(tiny_model(), seed=2)
            state = TrainState(make_optimizer(net, 2e-4))
            lr_batch = torch.rand(2, 3, 4, 4,
                                  generator=torch.Generator().manual_seed(9))
            hr_batch = torch.rand(2, 3, 8, 8,
                                  generator=torch.Generator().manual_seed(10))
            run = []
            for _ in range(2):
                _, loss = train_step(state, net, (lr_batch, hr_batch),
                                     _stage(base_lr=2e-4))
                run.append(loss)
            losses.append(run)
        self.assertEqual(losses[0], losses[1])
        self.assertNotEqual(losses[0][0], losses[0][1])

    def test_one_step_lowers_loss_for_most_seeds(self):
        lowered = 0
        seeds = range(20)
        for seed in seeds:
            net = build_model(tiny_model(), seed=seed).double()
            generator = torch.Generator().manual_seed(100 + seed)
            lr_batch = torch.rand(2, 3, 8, 8, generator=generator,
                                  dtype=torch.float64)
            hr_batch = torch.rand(2, 3, 16, 16, generator=generator,
                                  dtype=torch.float64)
            state = TrainState(make_optimizer(net, 1e-5))
            _, before = train_step(state, net, (lr_batch, hr_batch),
                                   _stage(base_lr=1e-5))
            with torch.no_grad():
                after = float(l1_loss(net(lr_batch), hr_batch))
            lowered += after < before
        self.assertGreaterEqual(lowered / len(seeds), 0.95)


class TestAdvanceStage(unittest.TestCase):

    def setUp(self):
        torch.manual_seed(0)
        self.net = nn.Conv2d(3, 3, 1)
        self.plan = StagePlan(stages=[
            _stage("l1_finetune", "l1", total=2),
            _stage("l2_polish", "l2", total=2, base_lr=1e-5),
        ])

    def test_fresh_optimizer_same_parameters(self):
        state = TrainState(make_optimizer(self.net, 1e-3))
        train_step(state, self.net, _batch(), self.plan.stages[0])
        old_optimizer = state.optimizer
        params = [p.detach().clone() for p in self.net.parameters()]

        advance_stage(self.plan, state, self.net)
        self.assertEqual(state.stage_index, 1)
        self.assertEqual(state.stage_iteration, 0)
        self.assertEqual(state.iteration, 1)
        self.assertIsNot(state.optimizer, old_optimizer)
        self.assertEqual(len(state.optimizer.state), 0)
        self.assertEqual(state.optimizer.param_groups[0]["lr"], 1e-5)
        for old, new in zip(params, self.net.parameters()):
            self.assertTrue(torch.equal(old, new))
        for exp_avg, exp_avg_sq in optimizer_moments(state, self.net).values():
            self.assertTrue(torch.all(exp_avg == 0))
            self.assertTrue(torch.all(exp_avg_sq == 0))

    def test_past_final_stage_completes(self):
        state = TrainState(make_optimizer(self.net, 1e-3))
        advance_stage(self.plan, state, self.net)
        self.assertFalse(state.completed)
        advance_stage(self.plan, state, self.net)
        self.assertTrue(state.completed)


if __name__ == '__main__':
    unittest.main()
