"""Scoring a trained model over a test set and summarizing with AUROC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import LEVELS, extract_stack
from .model import forward
from .scoring import AnomalyMap, EvalRecord, auroc, fuse_levels, image_score, patch_scores, to_map
from .training import TrainResult


@dataclass
class Evaluation:
    records: list[EvalRecord]
    image_auroc: float
    pixel_auroc: float
    criterion: str

    @property
    def image_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records])

    def summary_line(self) -> str:
        return f"image_auroc={self.image_auroc:.6f} pixel_auroc={self.pixel_auroc:.6f}"


def level_maps(result: TrainResult, images: np.ndarray, criterion: str, sigma: float = 0.0) -> dict[int, np.ndarray]:
    """Per-level (n_images, H, W) anomaly-map stacks before fusion."""
    cfg = result.config
    out_hw = images.shape[-2:]
    feats = extract_stack(images, cfg.seed, cfg.feature_dim)
    maps = {}
    for level in LEVELS:
        run = result.levels[level]
        stack = []
        for seq in feats[level]:
            trace = forward(seq, run.source.for_query(seq), run.model)
            stack.append(to_map(patch_scores(trace, criterion), seq.geom, out_hw, sigma))
        maps[level] = np.stack(stack)
    return maps


def score_images(result: TrainResult, images: np.ndarray, criterion: str = "recdiv", sigma: float = 0.0) -> np.ndarray:
    """Fused (n_images, H, W) maps."""
    maps = level_maps(result, images, criterion, sigma)
    return fuse_levels([maps[level] for level in LEVELS])


def evaluate(
    result: TrainResult,
    images: np.ndarray,
    labels: np.ndarray,
    masks: np.ndarray,
    criterion: str = "recdiv",
    sigma: float = 0.0,
) -> Evaluation:
    fused = score_images(result, images, criterion, sigma)
    records = [
        EvalRecord(i, int(labels[i]), image_score(fused[i]), AnomalyMap(fused[i], LEVELS), masks[i])
        for i in range(len(images))
    ]
    img_auc = auroc([r.score for r in records], labels)
    pix_auc = auroc(fused.ravel(), (masks.ravel() > 0.5).astype(int))
    return Evaluation(records, img_auc, pix_auc, criterion)
