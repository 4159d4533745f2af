# -*- coding: utf-8 -*-

"""
Command-line interface.

Usage:
    cma synth --out DIR --n N --seed S
    cma train --config FILE --out DIR [--resume CKPT]
    cma eval --restored DIR --gt DIR --report FILE [--masks DIR]
    cma inpaint --ckpt FILE --image F --mask {center|boxes:FILE} --text "..." --out F
    cma gradcheck
    cma ablate --drop cmad,isd --config FILE [--out DIR]
    cma sweep --lambdas 0,1,2,4 --config FILE [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 1 anything else.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from loguru import logger

from cma_inpaint import config, trainer
from cma_inpaint.checkpoint import load_checkpoint
from cma_inpaint.debug_logger import debug_logger
from cma_inpaint.exceptions import CMAError, ConfigError, DataError, NumericError, exit_code_for
from cma_inpaint.gradcheck import GRADCHECK_TOLERANCE, op_gradcheck_suite
from cma_inpaint.imageio import read_image, write_image, write_mask
from cma_inpaint.masks import Box, Mask, center_mask, mask_for, object_mask
from cma_inpaint.metrics import evaluate_dir, write_report_csv
from cma_inpaint.models import SynthConfig, TrainConfig
from cma_inpaint.settings import build_config, load_config_file
from cma_inpaint.synth import SynthDataset, write_dataset

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


# ==================================================================================================
# Logging
# ==================================================================================================

class InterceptHandler(logging.Handler):
    """
    Intercepts logs from standard logging and redirects them to loguru.

    Pillow and the warnings module log through standard logging.
    """

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        # Find the caller frame for correct source display
        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def setup_logging(level: str = config.LOG_LEVEL) -> None:
    """Replaces loguru's default sink and routes PIL / py.warnings records into it."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), colorize=True, format=LOG_FORMAT)
    logging.captureWarnings(True)
    for logger_name in ("PIL", "py.warnings"):
        logging_logger = logging.getLogger(logger_name)
        logging_logger.handlers = [InterceptHandler()]
        logging_logger.propagate = False


# ==================================================================================================
# Argument helpers
# ==================================================================================================

def parse_name_list(text: str) -> List[str]:
    """'cmad, isd' -> ['cmad', 'isd'] (empty items dropped)."""
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_float_list(text: str) -> List[float]:
    """
    Raises:
        ConfigError: If an item is not a number or the list is empty
    """
    try:
        values = [float(item) for item in parse_name_list(text)]
    except ValueError:
        raise ConfigError(f"--lambdas: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError("--lambdas: empty list")
    return values


def read_boxes_file(path: Path) -> List[Box]:
    """
    Reads one box per line as `x0,y0,x1,y1` (commas or whitespace); `#` starts a comment.

    Raises:
        DataError: If the file is unreadable or a line is malformed (names path:line)
    """
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read boxes file {path}: {exc}") from None
    boxes: List[Box] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].replace(",", " ").split()
        if not line:
            continue
        try:
            values = [int(v) for v in line]
        except ValueError:
            raise DataError(f"{path}:{number}: boxes must be integers, got {raw.strip()!r}") from None
        if len(values) != 4:
            raise DataError(f"{path}:{number}: expected 4 values per box, got {len(values)}")
        boxes.append((values[0], values[1], values[2], values[3]))
    if not boxes:
        raise DataError(f"{path}: no boxes")
    return boxes


def mask_from_spec(spec: str, height: int, width: int, area_fraction: float = 0.5) -> Mask:
    """
    Builds the mask named by an `--mask` argument: `center` or `boxes:FILE`.

    Raises:
        ConfigError: On an unknown spec
        DataError: On an unreadable or malformed boxes file
    """
    if spec == "center":
        return center_mask(height, width, area_fraction)
    if spec.startswith("boxes:") and len(spec) > len("boxes:"):
        return object_mask(height, width, read_boxes_file(Path(spec[len("boxes:"):])))
    raise ConfigError(f"--mask: expected 'center' or 'boxes:FILE', got {spec!r}")


def _config_or_default(path: Optional[str], preset: Optional[str]) -> TrainConfig:
    if path:
        return load_config_file(path)
    return build_config({"preset": preset} if preset else None)


# ==================================================================================================
# Commands
# ==================================================================================================

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_or_default(args.config, args.preset)
    synth_cfg: SynthConfig = cfg.synth
    dataset = SynthDataset(synth_cfg, args.seed, n=args.n)
    out_dir = Path(args.out)
    write_dataset(dataset, out_dir)
    if args.masks:
        size = synth_cfg.image_size
        mask_dir = out_dir / "masks"
        mask_dir.mkdir(parents=True, exist_ok=True)
        for index in range(len(dataset)):
            mask = mask_for(cfg.mask_mode, size, size, dataset[index].boxes, cfg.mask_area)
            write_mask(mask_dir / f"{index:05d}.png", mask)
        logger.info(f"[Synth] Wrote {len(dataset)} {cfg.mask_mode} masks to {mask_dir}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config_file(args.config)
    result = trainer.train(cfg, args.out, resume=args.resume, workers=args.workers, depth=args.depth)
    print(f"final checkpoint: {result.final_checkpoint}")
    if result.best_checkpoint is not None:
        print(f"best checkpoint: {result.best_checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_dir(args.restored, args.gt, mask_dir=args.masks, workers=args.workers)
    write_report_csv(args.report, {args.method: report})
    return 0


def cmd_inpaint(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    cfg = trainer.config_from_checkpoint(ckpt)
    size = cfg.synth.image_size
    mask = mask_from_spec(args.mask, size, size, cfg.mask_area)
    image = read_image(args.image)
    restored = trainer.inpaint(ckpt, image, mask, args.text)
    write_image(args.out, restored)
    logger.info(f"[Inpaint] Wrote {args.out} ({int(mask.grid.sum())} pixels restored)")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    errors: Dict[str, float] = op_gradcheck_suite(args.seed)
    if not args.ops_only:
        errors["full_graph"] = trainer.graph_gradcheck(seed=args.seed)
    failed = []
    for name, error in errors.items():
        status = "ok" if error <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name:<20} {error:.3e} {status}")
        if error > GRADCHECK_TOLERANCE:
            failed.append(name)
    if failed:
        raise NumericError(
            f"gradient check above {GRADCHECK_TOLERANCE:g} for {', '.join(failed)}", component=failed[0]
        )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _config_or_default(args.config, args.preset)
    out_dir = Path(args.out)
    runs = [[]] if args.with_full else []
    runs.append(parse_name_list(args.drop))
    reports = {}
    for drop in runs:
        name = trainer.ablation_name(drop)
        reports[name] = trainer.ablate(cfg, drop, out_dir / name.replace("/", "").replace(" ", "-"))
    write_report_csv(args.report or out_dir / "ablation.csv", reports)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_or_default(args.config, args.preset)
    trainer.sweep(cfg, parse_float_list(args.lambdas), args.out)
    return 0


# ==================================================================================================
# Parser
# ==================================================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cma", description=config.APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{config.APP_TITLE} {config.APP_VERSION}")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="loguru level (default from LOG_LEVEL)")
    parser.add_argument("--debug-mode", choices=("off", "errors", "all"), default=None, help="override DEBUG_MODE")
    parser.add_argument("--debug-dir", default=None, help="override DEBUG_DIR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic image-caption dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="take image size and shape counts from this config")
    p.add_argument("--preset", choices=("desk", "full", "tiny"), default=None)
    p.add_argument("--masks", action="store_true", help="also write masks/<index>.png")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--workers", type=int, default=config.NUM_WORKERS)
    p.add_argument("--depth", type=int, default=config.PREFETCH_DEPTH)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score restored images against ground truth")
    p.add_argument("--restored", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--masks", default=None)
    p.add_argument("--method", default="ours", help="row label in the report")
    p.add_argument("--workers", type=int, default=config.NUM_WORKERS)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("inpaint", help="restore one image with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="center | boxes:FILE")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_inpaint)

    p = sub.add_parser("gradcheck", help="check analytic gradients against central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops-only", action="store_true", help="skip the full-graph check")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train with loss components removed and report metrics")
    p.add_argument("--drop", required=True, help="comma-separated components, e.g. cmad,isd")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=("desk", "full", "tiny"), default=None)
    p.add_argument("--out", default="runs/ablate", help="run directory (default runs/ablate)")
    p.add_argument("--report", default=None, help="metric CSV (default OUT/ablation.csv)")
    p.add_argument("--with-full", action="store_true", help="also train the full model as a reference row")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep", help="train once per distillation weight")
    p.add_argument("--lambdas", required=True, help="comma-separated values, e.g. 0,1,2,4")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=("desk", "full", "tiny"), default=None)
    p.add_argument("--out", default="runs/sweep", help="run directory (default runs/sweep)")
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None, configure_logging: bool = True) -> int:
    """
    Parses argv, runs the command and maps failures to exit codes.

    Args:
        argv: Arguments without the program name (default sys.argv[1:])
        configure_logging: Install the stderr sink (tests keep their own sinks)

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    if configure_logging:
        setup_logging(args.log_level)
    if args.debug_mode is not None or args.debug_dir is not None:
        debug_logger.configure(args.debug_mode or debug_logger.mode, args.debug_dir or str(debug_logger.debug_dir))

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (CMAError, OSError) as exc:
        logger.error(f"[CLI] {args.command} failed: {exc}")
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
