"""Ablation grid over recognition views, entropy constraint, reference bank and scoring criterion."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

from .config import RunConfig
from .data import Dataset
from .pipeline import evaluate
from .training import TrainResult, train

ABLATE_COLUMNS = ("views", "entropy", "bank", "criterion", "image_auroc", "pixel_auroc")

# (views, entropy, bank, criterion); None marks an axis that does not apply to the row
STANDARD_ROWS = (
    ("patch", None, None, "rec"),
    ("intra", False, None, "div"),
    ("intra", True, None, "div"),
    ("intra", True, None, "recdiv"),
    ("inter", True, "mean", "recdiv"),
    ("inter", True, "coreset", "recdiv"),
    ("intra+inter", True, "mean", "div"),
    ("intra+inter", True, "mean", "recdiv"),
)


@dataclass(frozen=True)
class AblationRow:
    views: str
    entropy: bool | None
    bank: str | None
    criterion: str

    def train_key(self) -> tuple:
        return (self.views, self.entropy, self.bank)

    def csv_fields(self) -> tuple[str, str, str, str]:
        ent = "-" if self.entropy is None else ("on" if self.entropy else "off")
        return self.views, ent, self.bank or "-", self.criterion


def grid(cfg: RunConfig) -> list[AblationRow]:
    if cfg.ablate_grid == "standard":
        return [AblationRow(*r) for r in STANDARD_ROWS]
    rows = []
    for views, ent, bank, crit in itertools.product(
        cfg.ablate_views, cfg.ablate_entropy, cfg.ablate_banks, cfg.ablate_criteria
    ):
        if views == "patch" and crit != "rec":
            continue  # no correlations to score
        uses_bank = views in ("inter", "intra+inter")
        row = AblationRow(views, None if views == "patch" else ent, bank if uses_bank else None, crit)
        if row not in rows:
            rows.append(row)
    return rows


def row_config(cfg: RunConfig, row: AblationRow):
    t = cfg.train
    return dataclasses.replace(
        t,
        views=row.views,
        entropy=t.entropy if row.entropy is None else row.entropy,
        bank=row.bank or t.bank,
    )


def run_ablation(cfg: RunConfig, ds: Dataset, progress=None) -> list[tuple]:
    """Train once per distinct (views, entropy, bank) and score every requested criterion."""
    trained: dict[tuple, TrainResult] = {}
    out = []
    for row in grid(cfg):
        key = row.train_key()
        if key not in trained:
            trained[key] = train(ds.train, row_config(cfg, row))
        ev = evaluate(trained[key], ds.test, ds.labels, ds.masks, row.criterion, cfg.smoothing_sigma)
        out.append(row.csv_fields() + (repr(ev.image_auroc), repr(ev.pixel_auroc)))
        if progress:
            progress(out[-1])
    return out
