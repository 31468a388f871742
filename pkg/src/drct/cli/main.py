#!/usr/bin/env python3
"""
drct - DRCT image super-resolution CLI

Subcommands:
    train     run the progressive training stages of a run config
    eval      benchmark a checkpoint (PSNR/SSIM, optional x8 TTA)
    infer     super-resolve PNG images
    diagnose  feature-map intensity trace, G-index and parameter count
    inspect   configuration summary and parameter breakdown
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import torch
import yaml

from drct.core.config import RunConfig
from drct.core.exceptions import ConfigError, DataLoadError, DRCTError
from drct.core.loader import (
    load_config_from_file,
    load_default_config,
    read_image,
    write_effective_config,
    write_image,
)
from drct.core.logging import setup_logging
from drct.core.seeding import seed_everything
from drct.data.dataset import scan_manifest
from drct.diagnostics.trace import (
    deep_chain_g_index,
    export_trace,
    g_index,
    record_trace,
)
from drct.engine.evaluator import benchmark_table, run_benchmark, self_ensemble
from drct.engine.trainer import Trainer
from drct.model.network import (
    DRCT,
    REFERENCE_PARAMETER_COUNT,
    build_model,
    load_model,
    parameter_breakdown,
    super_resolve,
)

logger = logging.getLogger('drct')


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Path to run configuration YAML')
    common.add_argument('--seed', type=int, help='Override the run seed')
    common.add_argument('--scale', type=int, choices=[2, 3, 4],
                        help='Override the upscale factor')
    common.add_argument('--out', help='Output (run) directory')
    common.add_argument('--deterministic', action='store_true',
                        help='Force deterministic torch kernels')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='Log debug messages (manifest cache hits, ...)')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog='drct', description='drct - DRCT image super-resolution'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', parents=[common],
                           help='Run the progressive training stages')
    train.add_argument('--resume', help='Checkpoint to resume from')

    evaluate = sub.add_parser('eval', parents=[common],
                              help='Benchmark a checkpoint')
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument(
        '--dataset', action='append', default=[],
        help='Benchmark root, optionally NAME=PATH; repeatable. Defaults to '
             'data.benchmarks of the config'
    )
    evaluate.add_argument('--tta', action='store_true',
                          help='Average over the eight dihedral transforms')

    infer = sub.add_parser('infer', parents=[common],
                           help='Super-resolve PNG images')
    infer.add_argument('--checkpoint', required=True)
    infer.add_argument('--input', action='append', required=True,
                       help='PNG file or directory of PNGs; repeatable')
    infer.add_argument('--tta', action='store_true')

    diagnose = sub.add_parser('diagnose', parents=[common],
                              help='Intensity trace, G-index, parameter count')
    diagnose.add_argument('--checkpoint',
                          help='Checkpoint; defaults to a freshly built model')
    diagnose.add_argument('--input', help='LR PNG to trace')
    diagnose.add_argument('--tap-level',
                          choices=['per_rdg', 'per_sdrcb', 'per_stage'])

    inspect = sub.add_parser('inspect', parents=[common],
                             help='Config summary and parameter breakdown')
    inspect.add_argument('--checkpoint')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        'seed': args.seed,
        'model.scale': args.scale,
        'output_dir': args.out,
        'deterministic': True if args.deterministic else None,
        'evaluation.tta': True if getattr(args, 'tta', False) else None,
        'diagnostics.tap_level': getattr(args, 'tap_level', None),
    }


def load_run_config(args: argparse.Namespace) -> RunConfig:
    overrides = _overrides(args)
    if args.config:
        print(f"✓ Using configuration from {args.config}")
        return load_config_from_file(args.config, overrides)
    return load_default_config(overrides)


def _prepare_run(config: RunConfig, verbose: bool = False) -> Path:
    run_dir = Path(config.output_dir)
    setup_logging(config.log_file, logging.DEBUG if verbose else logging.INFO)
    write_effective_config(config, str(run_dir))
    seed_everything(config.seed, config.deterministic)
    return run_dir


def _model_for(config: RunConfig, checkpoint: Optional[str],
               requested_scale: Optional[int] = None) -> DRCT:
    """Checkpointed network, or a fresh one built from the config."""
    if not checkpoint:
        return build_model(config.model, seed=config.seed)
    net, ckpt = load_model(checkpoint)
    if requested_scale is not None and net.scale != requested_scale:
        raise ConfigError(
            f"--scale {requested_scale} does not match checkpoint "
            f"scale {net.scale}"
        )
    logger.info(f"✓ Loaded checkpoint {checkpoint} "
                f"(iteration {ckpt.iteration}, stage {ckpt.stage})")
    return net


def _input_files(inputs: List[str]) -> List[Path]:
    files: List[Path] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            files.extend(sorted(path.glob('*.png')))
        elif path.is_file():
            files.append(path)
        else:
            raise DataLoadError(f"Input not found: {path}", path=str(path))
    return files


def _dataset_roots(args_datasets: List[str],
                   config: RunConfig) -> List[Tuple[str, str]]:
    if not args_datasets:
        if not config.data.benchmarks:
            raise ConfigError(
                "no benchmark given: pass --dataset or set data.benchmarks"
            )
        return list(config.data.benchmarks.items())
    roots = []
    for item in args_datasets:
        name, sep, root = item.partition('=')
        if not sep:
            name, root = Path(item).name, item
        roots.append((name, root))
    return roots


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    run_dir = _prepare_run(config, args.verbose)
    trainer = Trainer(config, run_dir=str(run_dir))
    if args.resume:
        trainer.resume(args.resume)
    state = trainer.run()
    logger.info(f"✓ Training finished at iteration {state.iteration}; "
                f"best validation PSNR {state.best_val_psnr:.2f} dB")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    run_dir = _prepare_run(config, args.verbose)
    net = _model_for(config, args.checkpoint, args.scale)
    scale = net.scale
    reports = {}
    for name, root in _dataset_roots(args.dataset, config):
        manifest = scan_manifest(root, scale, 'test')
        report = run_benchmark(
            net, manifest, scale, tta=config.evaluation.tta, dataset=name,
            sr_dir=str(run_dir / 'eval' / name / 'sr'),
        )
        report.save(str(run_dir / 'eval'))
        print(report.format_table())
        reports[name] = report

    table = benchmark_table(reports, config.evaluation.method_name,
                            config.evaluation.training_label, scale)
    table.to_csv(run_dir / 'eval' / 'benchmark_table.tsv', sep='\t',
                 index=False)
    print(table.to_string(index=False))
    skipped = sum(len(r.skipped) for r in reports.values())
    if skipped:
        print(f"\n⚠️ {skipped} image(s) skipped")
        return 1
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    run_dir = _prepare_run(config, args.verbose)
    net = _model_for(config, args.checkpoint, args.scale)
    for path in _input_files(args.input):
        lr = read_image(str(path))
        sr = self_ensemble(net, lr) if config.evaluation.tta \
            else super_resolve(net, lr)
        out_path = write_image(str(run_dir / 'sr' / f'{path.stem}.png'), sr)
        logger.info(f"✓ {path.name}: {lr.height}x{lr.width} -> "
                    f"{sr.height}x{sr.width} ({out_path})")
    return 0


def _diagnose_input(args: argparse.Namespace, config: RunConfig) -> torch.Tensor:
    if args.input:
        return read_image(args.input).data
    generator = torch.Generator().manual_seed(config.seed)
    return torch.rand(1, config.model.in_channels, 24, 24, generator=generator)


def cmd_diagnose(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    run_dir = _prepare_run(config, args.verbose)
    net = _model_for(config, args.checkpoint, args.scale)
    lr = _diagnose_input(args, config)
    tap_level = config.diagnostics.tap_level
    input_id = Path(args.input).stem if args.input else 'random'

    trace = record_trace(net, lr, tap_level, input_id=input_id)
    written = export_trace(trace, str(run_dir / 'diagnostics' / 'trace.tsv'))
    breakdown = parameter_breakdown(net)
    summary = {
        'tap_level': tap_level,
        'taps': len(trace),
        'g_index': g_index(trace),
        'deep_chain_g_index': (
            deep_chain_g_index(trace) if tap_level == 'per_rdg' else None
        ),
        'parameters': breakdown,
        'reference_parameters': REFERENCE_PARAMETER_COUNT,
    }
    with open(run_dir / 'diagnostics' / 'summary.yaml', 'w',
              encoding='utf-8') as f:
        yaml.safe_dump(summary, f, sort_keys=False)

    print(f"Taps ({tap_level}): {len(trace)}")
    print(f"G-index: {summary['g_index']:.6f}")
    if summary['deep_chain_g_index'] is not None:
        print(f"Deep-chain G-index: {summary['deep_chain_g_index']:.6f}")
    print(f"Parameters: {breakdown['total']:,} "
          f"(reference {REFERENCE_PARAMETER_COUNT / 1e6:.2f}M)")
    print(f"Trace: {written['table']}  Chart: {written.get('chart')}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    if args.checkpoint:
        net, ckpt = load_model(args.checkpoint)
        model_config = ckpt.config
        print(f"Checkpoint: {args.checkpoint} (iteration {ckpt.iteration}, "
              f"stage {ckpt.stage})")
    else:
        model_config = config.model
        net = build_model(model_config, seed=config.seed)
    print(f"Scale x{model_config.scale}, C={model_config.embed_dim}, "
          f"K={model_config.num_rdg}, M={model_config.sdrcb_per_rdg}, "
          f"g={model_config.growth_channels}, heads={model_config.num_heads}, "
          f"window={model_config.window_size}")
    print(f"Dense stage widths: {model_config.stage_widths()}")
    for component, count in parameter_breakdown(net).items():
        print(f"  {component:<16} {count:>12,}")
    print(f"Reference: {REFERENCE_PARAMETER_COUNT:,}")
    return 0


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'infer': cmd_infer,
    'diagnose': cmd_diagnose,
    'inspect': cmd_inspect,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    print("🔬 drct - DRCT image super-resolution")
    print("=" * 50)

    try:
        code = COMMANDS[args.command](args)
        if code == 0:
            print(f"\n✅ {args.command} completed successfully!")
        return code
    except KeyboardInterrupt:
        print("\n⚠️ Processing interrupted by user")
        return 1
    except DRCTError as e:
        print(f"\n❌ Error: {e}")
        return 1
    except Exception as e:
        print(f"\n❌ Unexpected error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
