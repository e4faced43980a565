"""Two-level prediction: a related/unrelated gate in front of a 3-class model.

Stage 1 is trained on all target examples with collapsed binary labels and
no domain adaptation (bag-of-words only by default, where it is strongest).
Stage 2 sees only related examples: the gold-related subset of the target
data plus all source examples, which are related by construction of the
source label mapping.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from stance_dann.ingest import LabeledPair
from stance_dann.model import FeatureBundle, Featurizer, ModelConfig, StanceModel
from stance_dann.trainer import TrainConfig, TrainingHistory, load_checkpoint, save_checkpoint, train

STAGE1_CLASSES = ("related", "unrelated")
STAGE2_CLASSES = ("agree", "disagree", "discuss")

_MANIFEST_FILE = "hierarchy.manifest"
_STAGE1_FILE = "stage1.ckpt"
_STAGE2_FILE = "stage2.ckpt"


def collapse_binary(label: str) -> str:
    """Map the 4-way stance space onto the related/unrelated gate classes."""
    return "unrelated" if label == "unrelated" else "related"


@dataclass
class HierarchicalModel:
    stage1: StanceModel
    stage2: StanceModel
    last_stage2_count: int = 0


def _coerce_stage1(config: ModelConfig) -> ModelConfig:
    # the gate is always binary and never adversarial
    return replace(config, num_labels=2, da_features=())


def _coerce_stage2(config: ModelConfig) -> ModelConfig:
    return replace(config, num_labels=3)


def train_hierarchical(
    source: list[LabeledPair],
    target: list[LabeledPair],
    stage1_config: ModelConfig,
    stage2_config: ModelConfig,
    stage1_train: TrainConfig,
    stage2_train: TrainConfig,
    featurizer: Featurizer,
    embedding_init: np.ndarray | None = None,
    stage2_routing: str = "gold",
) -> tuple[HierarchicalModel, TrainingHistory, TrainingHistory]:
    """Train both stages; returns the model plus each stage's history.

    stage2_routing selects which target examples feed stage 2: the
    gold-related ones (default, decouples stage-2 training from stage-1
    errors) or the ones stage 1 actually predicts as related.
    """
    if stage2_routing not in ("gold", "predicted"):
        raise ValueError("stage2_routing must be 'gold' or 'predicted'")

    stage1, hist1 = train(
        _coerce_stage1(stage1_config), stage1_train, [], target, featurizer, embedding_init
    )

    if stage2_routing == "gold":
        related_target = [p for p in target if p.label != "unrelated"]
    else:
        bundles = featurizer.extract_many(target, stage1.config)
        predictions = stage1.predict(bundles)
        related_target = [p for p, pred in zip(target, predictions) if pred == "related"]
    related_target = [p for p in related_target if p.label != "unrelated"]
    if not related_target:
        raise ValueError("no related examples available for stage 2")

    stage2, hist2 = train(
        _coerce_stage2(stage2_config),
        stage2_train,
        source,
        related_target,
        featurizer,
        embedding_init,
    )
    return HierarchicalModel(stage1, stage2), hist1, hist2


def predict_hierarchical(h: HierarchicalModel, bundles: list[FeatureBundle]) -> list[str]:
    """Stage-1 gate first; only predicted-related examples ever reach stage 2."""
    if not bundles:
        h.last_stage2_count = 0
        return []
    gate = h.stage1.predict(bundles)
    related_idx = [i for i, g in enumerate(gate) if g == "related"]
    h.last_stage2_count = len(related_idx)
    out = ["unrelated"] * len(bundles)
    if related_idx:
        fine = h.stage2.predict([bundles[i] for i in related_idx])
        for i, label in zip(related_idx, fine):
            out[i] = label
    return out


def save_hierarchical(h: HierarchicalModel, directory) -> None:
    """Container directory: both stage checkpoints plus a class-order manifest."""
    os.makedirs(directory, exist_ok=True)
    save_checkpoint(h.stage1, os.path.join(directory, _STAGE1_FILE))
    save_checkpoint(h.stage2, os.path.join(directory, _STAGE2_FILE))
    with open(os.path.join(directory, _MANIFEST_FILE), "w", encoding="utf-8") as fh:
        fh.write(f"stage1\t{_STAGE1_FILE}\t{','.join(STAGE1_CLASSES)}\n")
        fh.write(f"stage2\t{_STAGE2_FILE}\t{','.join(STAGE2_CLASSES)}\n")


def load_hierarchical(directory) -> HierarchicalModel:
    manifest = os.path.join(directory, _MANIFEST_FILE)
    files = {}
    with open(manifest, encoding="utf-8") as fh:
        for line in fh:
            stage, filename, classes = line.rstrip("\n").split("\t")
            files[stage] = (filename, tuple(classes.split(",")))
    for stage, expected in (("stage1", STAGE1_CLASSES), ("stage2", STAGE2_CLASSES)):
        if stage not in files:
            raise ValueError(f"{manifest}: missing {stage} entry")
        if files[stage][1] != expected:
            raise ValueError(
                f"{manifest}: {stage} class order {files[stage][1]}, expected {expected}"
            )
    stage1 = load_checkpoint(os.path.join(directory, files["stage1"][0]))
    stage2 = load_checkpoint(os.path.join(directory, files["stage2"][0]))
    if stage1.config.num_labels != 2 or stage2.config.num_labels != 3:
        raise ValueError(f"{directory}: stage checkpoints have wrong class counts")
    return HierarchicalModel(stage1, stage2)
