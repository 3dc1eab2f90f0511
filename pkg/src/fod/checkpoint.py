"""Saving and restoring trained runs and datasets as tensor files plus CSV."""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from .banks import BankSource, ReferenceBank
from .config import RunConfig, load_config
from .data import Dataset
from .features import LEVELS
from .model import LevelModel
from .tensorfile import FormatError, bank_entries, bank_from_entries, read_named, write_tensor
from .training import HISTORY_COLUMNS, LevelRun, TrainResult

CHECKPOINT = "checkpoint.fodt"
BANKS = "banks.fodt"
DATASET = "dataset.fodt"
CONFIG = "config.cfg"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# ---------------------------------------------------------------------------
# datasets


def save_dataset(out: Path, ds: Dataset, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / DATASET, {"train": ds.train, "test": ds.test, "masks": ds.masks, "labels": ds.labels.astype(np.float64)})
    write_csv(out / "test_index.csv", ("image_id", "label", "kind"), [(i, int(l), k) for i, (l, k) in enumerate(zip(ds.labels, ds.kinds))])
    (out / CONFIG).write_text(cfg.to_text())


def load_dataset(path: Path) -> Dataset:
    e = read_named(path / DATASET)
    missing = {"train", "test", "masks", "labels"} - set(e)
    if missing:
        raise FormatError(f"dataset lacks entries {sorted(missing)}", 0)
    kinds = []
    index = path / "test_index.csv"
    if index.exists():
        with open(index, newline="") as fh:
            kinds = [row["kind"] for row in csv.DictReader(fh)]
    labels = e["labels"].astype(np.int64)
    return Dataset(e["train"], e["test"], e["masks"], labels, kinds or ["anomalous" if l else "normal" for l in labels])


# ---------------------------------------------------------------------------
# banks


def source_entries(source: BankSource, prefix: str) -> dict[str, np.ndarray]:
    if source.kind == "nearest":
        return {
            prefix + "kind": np.array([1.0]),
            prefix + "stack": source.stack,
            prefix + "window": np.array([float(source.window)]),
        }
    return bank_entries(source.bank, prefix)


def source_from_entries(e: dict[str, np.ndarray], prefix: str) -> BankSource:
    if prefix + "stack" in e:
        return BankSource("nearest", stack=e[prefix + "stack"], window=int(e[prefix + "window"][0]))
    bank: ReferenceBank = bank_from_entries(e, prefix)
    return BankSource(bank.kind, bank=bank)


def save_sources(path: Path, sources: dict[int, BankSource]) -> None:
    entries = {}
    for level, src in sources.items():
        entries.update(source_entries(src, f"L{level}/bank/"))
    write_tensor(path, entries)


def load_sources(path: Path) -> dict[int, BankSource]:
    e = read_named(path)
    return {level: source_from_entries(e, f"L{level}/bank/") for level in LEVELS}


# ---------------------------------------------------------------------------
# trained runs


def save_run(out: Path, result: TrainResult, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    entries = {}
    for level, run in result.levels.items():
        for name, p in run.model.named_params().items():
            entries[f"L{level}/{name}"] = p.data
        entries.update(source_entries(run.source, f"L{level}/bank/"))
        write_csv(out / f"history_L{level}.csv", HISTORY_COLUMNS, [[_fmt(v) for v in row] for row in run.history])
    write_tensor(out / CHECKPOINT, entries)
    (out / CONFIG).write_text(dataclasses.replace(cfg, train=result.config).to_text())


def load_run(path: Path) -> tuple[TrainResult, RunConfig]:
    cfg = load_config(path / CONFIG)
    e = read_named(path / CHECKPOINT)
    levels = {}
    for level in LEVELS:
        prefix = f"L{level}/"
        if prefix + "w_in" not in e:
            raise FormatError(f"checkpoint lacks level {level}", 0)
        source = source_from_entries(e, prefix + "bank/")
        in_dim = e[prefix + "w_in"].shape[0]
        bank_dim = source.bank.dim if source.bank is not None else source.stack.shape[-1]
        model = LevelModel(cfg.train.model_config(in_dim, bank_dim), cfg.train.seed, level)
        model.load({name[len(prefix):]: v for name, v in e.items() if name.startswith(prefix) and "/bank/" not in name})
        levels[level] = LevelRun(model, source)
    return TrainResult(cfg.train, levels), cfg
