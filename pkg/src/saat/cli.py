"""Command line entry point: check, train, eval, infer, shapes.

Exit codes: 0 ok, 1 verification failure, 2 usage or config error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, tensor, verify
from .errors import (ContractViolationError, CorruptCheckpointError, ImageFormatError,
                     InvalidConfigError, InvalidShapeError, NonFiniteLossError, ShapeMismatchError)
from .imaging import (ImageBuffer, bicubic_resize, evaluate, load_dataset, load_image,
                      save_image)
from .model import ModelConfig, build, upscale
from .train import BASE_LR, PatchSampler, TrainState, scaled_milestones, train_loop

log = logging.getLogger("saat")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------- run config

@dataclass
class TrainSettings:
    steps: int = 1000
    batch: int = 1
    seed: int = 0
    lr: float = BASE_LR
    milestones: tuple[int, ...] = ()  # empty: scaled from the full-length schedule
    patch_size: int = 64
    augment: bool = True
    log_every: int = 1


@dataclass
class DataSettings:
    train_dir: str = ""
    eval_dir: str = ""


@dataclass
class IOSettings:
    checkpoint: str = ""
    out_dir: str = "."


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    data: DataSettings = field(default_factory=DataSettings)
    io: IOSettings = field(default_factory=IOSettings)


def _coerce(raw: str, default, key: str):
    from .model import _parse_value
    kind = type(default)
    if kind is str:
        return raw.strip()
    return _parse_value(raw, kind, key)


def parse_config(text: str) -> RunConfig:
    """Flat ``section.key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    sections: dict[str, dict[str, str]] = {"model": {}, "train": {}, "data": {}, "io": {}}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        lhs, value = (s.strip() for s in line.split("=", 1))
        if "." not in lhs:
            raise InvalidConfigError(f"line {lineno}: key {lhs!r} has no section prefix")
        section, key = lhs.split(".", 1)
        if section not in sections:
            raise InvalidConfigError(f"line {lineno}: unknown section {section!r} in {lhs!r}")
        if lhs in seen:
            raise InvalidConfigError(f"line {lineno}: duplicate key {lhs!r}")
        seen.add(lhs)
        sections[section][key] = value

    try:
        model = ModelConfig.from_mapping(sections["model"])
    except InvalidConfigError as e:
        raise InvalidConfigError(str(e).replace("model key '", "key 'model.")) from None
    parts = {}
    for name, cls in (("train", TrainSettings), ("data", DataSettings), ("io", IOSettings)):
        default = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in sections[name].items():
            if key not in known:
                raise InvalidConfigError(f"unknown key '{name}.{key}'")
            kwargs[key] = _coerce(raw, getattr(default, key), f"{name}.{key}")
        parts[name] = cls(**kwargs)
    return RunConfig(model=model, **parts)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- commands

def cmd_check(args) -> int:
    if args.inject_fault:
        tensor.inject_fault(args.inject_fault)
    try:
        outcomes = verify.run(args.filter)
    finally:
        tensor.clear_faults()
    failed = [o for o in outcomes if not o.ok]
    suites = list(dict.fromkeys(o.suite for o in outcomes))
    for s in suites:
        mine = [o for o in outcomes if o.suite == s]
        print(f"suite {s}: {sum(o.ok for o in mine)}/{len(mine)} passed")
    if failed:
        o = failed[0]
        what = f" (backward of op {o.name[5:]!r})" if o.name.startswith("grad ") else ""
        print(f"check failed: {o.suite}: {o.name}{what}: {o.detail}", file=sys.stderr)
        return EXIT_FAIL
    print(f"all {len(outcomes)} checks passed")
    return EXIT_OK


def _dtype(args):
    return np.float64 if args.f64 else np.float32


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
        cfg.model = dataclasses.replace(cfg.model, seed=args.seed)
    if args.steps is not None:
        cfg.train.steps = args.steps
    out = Path(args.out or cfg.io.out_dir)
    data_dir = args.data or cfg.data.train_dir
    if not data_dir:
        raise InvalidConfigError("no training data: set data.train_dir or pass --data")
    t = cfg.train

    items = load_dataset(data_dir, cfg.model.scale)
    if not items:
        raise FileNotFoundError(f"no PNG images in {Path(data_dir) / 'HR'}")
    sampler = PatchSampler([hr for _, hr, _ in items], cfg.model.scale, t.patch_size, t.augment, t.seed)

    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(cfg.io.checkpoint) if cfg.io.checkpoint else out / "model.ckpt"
    trace = out / "trace.tsv"
    state_path = out / "state.npz"
    model = build(cfg.model, _dtype(args))
    if args.resume:
        checkpoint.load_into(model, ckpt)
        state = TrainState.load(state_path)
        log.info("resuming at step %d", state.step)
    else:
        milestones = list(t.milestones) or scaled_milestones(t.steps)
        state = TrainState(base_lr=t.lr, milestones=milestones)
        trace.write_text("")
    stop = t.steps if args.until is None else min(args.until, t.steps)
    state, entries = train_loop(model, sampler, stop, batch=t.batch, state=state,
                                log_every=t.log_every, trace_path=trace, dump_dir=out)
    checkpoint.save(model, ckpt)
    state.save(state_path)
    if entries:
        print(f"step {entries[-1].step}: l1 {entries[-1].l1:.6f}")
    print(f"wrote {ckpt} and {trace}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    data_dir = args.data or cfg.data.eval_dir
    if not data_dir:
        raise InvalidConfigError("no evaluation data: set data.eval_dir or pass --data")
    model = None
    scale = args.scale
    if args.baseline is None:
        path = args.checkpoint or cfg.io.checkpoint
        if not path:
            raise InvalidConfigError("eval needs --checkpoint unless --baseline is given")
        model = checkpoint.load(path, dtype=_dtype(args))
        if scale is not None and scale != model.config.scale:
            raise InvalidConfigError(f"checkpoint is x{model.config.scale} but --scale is {scale}")
        scale = model.config.scale
    elif scale is None:
        scale = cfg.model.scale

    items = load_dataset(data_dir, scale)
    names, hrs, srs = [], [], []
    for name, hr, lr in items:
        if args.baseline == "identity":
            sr = hr
        elif args.baseline == "bicubic":
            sr = bicubic_resize(lr, scale)
        else:
            sr = ImageBuffer.from_float(upscale(model, lr.to_float()))
        names.append(name)
        hrs.append(hr)
        srs.append(sr)
    report = evaluate(names, hrs, srs, shave=scale, y_only=True)
    text = report.to_tsv()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.tsv").write_text(text)
    return EXIT_OK


def cmd_infer(args) -> int:
    model = checkpoint.load(args.checkpoint, dtype=_dtype(args))
    img = load_image(args.input)
    if img.channels == 1:
        img = ImageBuffer(np.repeat(img.pixels, 3, axis=2))
    sr = ImageBuffer.from_float(upscale(model, img.to_float()))
    dest = Path(args.output)
    if args.out and not dest.is_absolute():
        Path(args.out).mkdir(parents=True, exist_ok=True)
        dest = Path(args.out) / dest
    save_image(sr, dest)
    print(f"{args.input}: {img.width}x{img.height} -> {dest}: {sr.width}x{sr.height}")
    return EXIT_OK


def cmd_shapes(args) -> int:
    cfg = load_config(args.config)
    model = build(cfg.model)
    total = 0
    print("name\tshape\tcount")
    for name, p in model.named_parameters():
        total += p.size
        print(f"{name}\t{'x'.join(map(str, p.shape))}\t{p.size}")
    print(f"total\t\t{total}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (section.key = value lines)")
    common.add_argument("--seed", type=int, help="overrides train.seed and model.seed")
    common.add_argument("--f64", action="store_true", help="run the model in float64")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="saat", description="SAAT super-resolution at desk scale")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="run the verification suites")
    p.add_argument("--filter", choices=list(verify.SUITES), help="run a single suite")
    p.add_argument("--inject-fault", metavar="OP", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", parents=[common], help="train and write checkpoint + loss trace")
    p.add_argument("--data", help="dataset root containing HR/ (overrides data.train_dir)")
    p.add_argument("--steps", type=int, help="overrides train.steps")
    p.add_argument("--until", type=int, metavar="STEP",
                   help="stop after STEP steps without changing the schedule (resume later)")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint and state in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="PSNR / SSIM on a dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="dataset root containing HR/ (overrides data.eval_dir)")
    p.add_argument("--scale", type=int)
    p.add_argument("--baseline", choices=("bicubic", "identity"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", parents=[common], help="super-resolve one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("shapes", parents=[common], help="parameter table of a model config")
    p.set_defaults(func=cmd_shapes)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfigError, InvalidShapeError) as e:
        print(f"saat {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ImageFormatError, CorruptCheckpointError, ShapeMismatchError) as e:
        print(f"saat {args.command}: error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NonFiniteLossError, ContractViolationError) as e:
        print(f"saat {args.command}: error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
