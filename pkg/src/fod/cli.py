"""Command-line workflow: gen, build-bank, train, score, eval, ablate.

Every failure prints exactly one ``error: <kind>: <message>`` line on
stderr; usage errors exit with status 2, all other errors with 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from .ablation import ABLATE_COLUMNS, grid, run_ablation
from .banks import BANK_KINDS
from .config import ConfigError, RunConfig, load_config, validate
from .data import generate_dataset
from .features import extract_stack
from .pipeline import evaluate, level_maps
from .scoring import CRITERIA, fuse_levels, image_score
from .tensorfile import write_tensor
from .training import build_sources, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single line instead of argparse's usage block
        raise UsageError(message)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--bank", choices=BANK_KINDS)
    common.add_argument("--criterion", choices=CRITERIA)
    common.add_argument("--entropy", type=_on_off, metavar="{on,off}")
    common.add_argument("--opt", choices=("two-phase", "direct"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="fod", description="Correlation-supervised transformer anomaly detection on synthetic textures.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("gen", parents=[common], help="generate the synthetic dataset")
    b = sub.add_parser("build-bank", parents=[common], help="build per-level reference banks")
    b.add_argument("--data", type=Path, required=True)
    t = sub.add_parser("train", parents=[common], help="train per-level models")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--banks", type=Path, help="banks file from build-bank (built on the fly otherwise)")
    for name, help_text in (("score", "write anomaly maps and image scores"), ("eval", "print image and pixel AUROC")):
        s = sub.add_parser(name, parents=[common], help=help_text)
        s.add_argument("--data", type=Path, required=True)
        s.add_argument("--model", type=Path, required=True)
    a = sub.add_parser("ablate", parents=[common], help="run the ablation grid and write a CSV")
    a.add_argument("--data", type=Path, required=True)
    return p


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = load_config(args.config) if args.config else (base or RunConfig())
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    overrides = {}
    if args.bank:
        overrides["bank"] = args.bank
    if args.entropy is not None:
        overrides["entropy"] = args.entropy
    if args.opt:
        overrides["opt"] = args.opt
    if overrides:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **overrides))
    if args.criterion:
        cfg = dataclasses.replace(cfg, criterion=args.criterion)
    validate(cfg)
    return cfg


def _need_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} requires --out")
    return args.out


def cmd_gen(args) -> None:
    cfg = resolve_config(args)
    out = _need_out(args)
    ck.save_dataset(out, generate_dataset(cfg.data), cfg)
    print(f"wrote {out / ck.DATASET}")


def cmd_build_bank(args) -> None:
    cfg = resolve_config(args)
    out = _need_out(args)
    ds = ck.load_dataset(args.data)
    sources = build_sources(extract_stack(ds.train, cfg.seed, cfg.train.feature_dim), cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    ck.save_sources(out / ck.BANKS, sources)
    print(f"wrote {out / ck.BANKS}")


def cmd_train(args) -> None:
    cfg = resolve_config(args)
    out = _need_out(args)
    ds = ck.load_dataset(args.data)
    sources = ck.load_sources(args.banks) if args.banks else None
    if sources is not None and any(s.kind != cfg.train.bank for s in sources.values()):
        raise ConfigError(f"banks file holds {sources[8].kind} banks but the config asks for {cfg.train.bank}")
    result = train(ds.train, cfg.train, sources)
    ck.save_run(out, result, cfg)
    print(f"wrote {out / ck.CHECKPOINT}")


def _load_model(args):
    result, model_cfg = ck.load_run(args.model)
    crit = args.criterion or (load_config(args.config).criterion if args.config else model_cfg.criterion)
    return result, model_cfg, crit


def cmd_score(args) -> None:
    out = _need_out(args)
    result, cfg, crit = _load_model(args)
    ds = ck.load_dataset(args.data)
    maps = level_maps(result, ds.test, crit, cfg.smoothing_sigma)
    fused = fuse_levels([maps[k] for k in sorted(maps)])
    scores = np.array([image_score(m) for m in fused])
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "maps.fodt", {"fused": fused, "image_scores": scores, **{f"L{k}": v for k, v in maps.items()}})
    ck.write_csv(out / "scores.csv", ("image_id", "label", "score"), [(i, int(l), repr(float(s))) for i, (l, s) in enumerate(zip(ds.labels, scores))])
    print(f"wrote {out / 'scores.csv'}")


def cmd_eval(args) -> None:
    result, cfg, crit = _load_model(args)
    ds = ck.load_dataset(args.data)
    ev = evaluate(result, ds.test, ds.labels, ds.masks, crit, cfg.smoothing_sigma)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        rows = [(r.image_id, r.label, repr(r.score)) for r in ev.records]
        ck.write_csv(args.out / "report.csv", ("image_id", "label", "image_score"), rows)
    print(f"criterion={crit} images={len(ev.records)}")
    print(ev.summary_line())


def cmd_ablate(args) -> None:
    cfg = resolve_config(args)
    out = _need_out(args)
    ds = ck.load_dataset(args.data)
    print(f"grid rows={len(grid(cfg))}", flush=True)
    rows = run_ablation(cfg, ds, progress=lambda r: print(",".join(r), flush=True))
    out.mkdir(parents=True, exist_ok=True)
    ck.write_csv(out / "ablate.csv", ABLATE_COLUMNS, rows)
    print(f"wrote {out / 'ablate.csv'}")


COMMANDS = {
    "gen": cmd_gen,
    "build-bank": cmd_build_bank,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (ConfigError, OSError, ValueError, FloatingPointError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0
