"""Joint adversarial training loop and model persistence.

Each epoch draws a balanced source/target sample, ramps the reversal
constant along a sigmoid schedule, and applies Adam per minibatch. The
per-epoch record of training/validation losses backs both model selection
(smallest validation label loss across runs) and the loss-trend checks.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from stance_dann.ingest import LabeledPair, epoch_sample_balanced, split_train_validation
from stance_dann.model import (
    Batch,
    Featurizer,
    ModelConfig,
    StanceModel,
    domain_index,
    label_index,
    make_batch,
    resolve_config,
)
from stance_dann.optim import AdamState, adam_step, clip_global_norm
from stance_dann.seeding import rng_for

CHECKPOINT_MAGIC = b"SDNN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_max: float = 1.0
    ramp_gamma: float = 10.0
    seed: int = 0
    runs: int = 5
    val_fraction: float = 0.2
    grad_clip: float = 0.0
    selection_loss: str = "label"  # 'label' or 'total'

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        for name in ("batch_size", "learning_rate", "ramp_gamma", "runs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be non-negative")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.selection_loss not in ("label", "total"):
            raise ValueError("selection_loss must be 'label' or 'total'")


def lambda_schedule(progress: float, lambda_max: float = 1.0, gamma: float = 10.0) -> float:
    """Sigmoid ramp lambda(p) = lambda_max * (2 / (1 + exp(-gamma p)) - 1)."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return lambda_max * (2.0 / (1.0 + math.exp(-gamma * progress)) - 1.0)


@dataclass
class EpochRecord:
    epoch: int
    lam: float
    train_label_loss: float | None
    train_domain_loss: float | None
    val_label_loss: float | None
    val_domain_loss: float | None


def _fmt(x: float | None) -> str:
    return "nan" if x is None else format(float(x), ".17g")


def _parse(text: str) -> float | None:
    value = float(text)
    return None if math.isnan(value) else value


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def min_selection_loss(self, kind: str = "label") -> float:
        """Smallest per-epoch validation loss; inf for an empty history."""
        best = math.inf
        for r in self.records:
            if r.val_label_loss is None:
                continue
            value = r.val_label_loss
            if kind == "total" and r.val_domain_loss is not None:
                value += r.val_domain_loss
            best = min(best, value)
        return best

    def to_log(self) -> str:
        lines = [
            "\t".join(
                [
                    str(r.epoch),
                    _fmt(r.lam),
                    _fmt(r.train_label_loss),
                    _fmt(r.train_domain_loss),
                    _fmt(r.val_label_loss),
                    _fmt(r.val_domain_loss),
                ]
            )
            for r in self.records
        ]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_log(cls, text: str) -> "TrainingHistory":
        history = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise ValueError(f"history line has {len(cols)} columns, expected 6")
            history.append(
                EpochRecord(
                    epoch=int(cols[0]),
                    lam=float(cols[1]),
                    train_label_loss=_parse(cols[2]),
                    train_domain_loss=_parse(cols[3]),
                    val_label_loss=_parse(cols[4]),
                    val_domain_loss=_parse(cols[5]),
                )
            )
        return history

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_log())

    @classmethod
    def load(cls, path) -> "TrainingHistory":
        with open(path, encoding="utf-8") as fh:
            return cls.from_log(fh.read())


def _label_for_loss(pair: LabeledPair, config: ModelConfig) -> int:
    if pair.domain == "source" and not config.source_in_label_loss:
        return -1
    return label_index(pair.label, config.num_labels)


def _make_pair_batch(pairs, bundles, config: ModelConfig) -> Batch:
    return make_batch(
        bundles,
        labels=[_label_for_loss(p, config) for p in pairs],
        domains=[domain_index(p.domain) for p in pairs],
    )


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    source: list[LabeledPair],
    target: list[LabeledPair],
    featurizer: Featurizer,
    embedding_init: np.ndarray | None = None,
) -> tuple[StanceModel, TrainingHistory]:
    """Train one model; deterministic given (configs, data, featurizer)."""
    if not target:
        raise ValueError("target examples required")
    config = resolve_config(model_config, featurizer)
    tc = train_config

    model = StanceModel(config, rng_for(tc.seed, "model-init"), embedding_init)
    history = TrainingHistory()
    if tc.epochs == 0:
        return model, history

    train_pool, val_pool = split_train_validation(source + target, tc.val_fraction, tc.seed)
    source_train = [p for p in train_pool if p.domain == "source"]
    target_train = [p for p in train_pool if p.domain == "target"]

    bundle_of = {p.id: featurizer.extract(p, config) for p in train_pool + val_pool}
    val_batch = _make_pair_batch(val_pool, [bundle_of[p.id] for p in val_pool], config)

    adam = AdamState(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps)
    params = model.trainable_parameters()

    for epoch in range(tc.epochs):
        lam = lambda_schedule(epoch / tc.epochs, tc.lambda_max, tc.ramp_gamma)
        if not model.has_domain_head:
            lam = 0.0
        epoch_pairs = epoch_sample_balanced(source_train, target_train, epoch, tc.seed)

        label_sum = label_n = 0.0
        domain_sum = domain_n = 0.0
        for start in range(0, len(epoch_pairs), tc.batch_size):
            chunk = epoch_pairs[start : start + tc.batch_size]
            batch = _make_pair_batch(chunk, [bundle_of[p.id] for p in chunk], config)
            label_loss, domain_loss = model.loss_and_grads(batch, lam)
            for loss in (label_loss, domain_loss):
                if loss is not None and not math.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, batch {start // tc.batch_size}"
                    )
            if label_loss is not None:
                n = int((batch.labels >= 0).sum())
                label_sum += label_loss * n
                label_n += n
            if domain_loss is not None:
                domain_sum += domain_loss * len(chunk)
                domain_n += len(chunk)
            if tc.grad_clip > 0:
                clip_global_norm(params, tc.grad_clip)
            if config.freeze_padding and "embeddings" in model.params:
                model.params["embeddings"].grad[0] = 0.0
            adam_step(params, adam)

        val_label, val_domain = model.eval_losses(val_batch)
        history.append(
            EpochRecord(
                epoch=epoch,
                lam=lam,
                train_label_loss=label_sum / label_n if label_n else None,
                train_domain_loss=domain_sum / domain_n if domain_n else None,
                val_label_loss=val_label,
                val_domain_loss=val_domain,
            )
        )
    return model, history


def _train_worker(args):
    model_config, train_config, source, target, featurizer, embedding_init = args
    return train(model_config, train_config, source, target, featurizer, embedding_init)


def train_runs(
    model_config: ModelConfig,
    train_config: TrainConfig,
    source: list[LabeledPair],
    target: list[LabeledPair],
    featurizer: Featurizer,
    embedding_init: np.ndarray | None = None,
    max_workers: int = 1,
) -> list[tuple[StanceModel, TrainingHistory]]:
    """Independent runs with seeds seed+0 .. seed+runs-1, merged in run order."""
    jobs = [
        (
            model_config,
            replace(train_config, seed=train_config.seed + i),
            source,
            target,
            featurizer,
            embedding_init,
        )
        for i in range(train_config.runs)
    ]
    if max_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_train_worker, jobs))
    return [_train_worker(job) for job in jobs]


def select_best_index(histories: list[TrainingHistory], selection_loss: str = "label") -> int:
    if not histories:
        raise ValueError("no runs to select from")
    losses = [h.min_selection_loss(selection_loss) for h in histories]
    return int(np.argmin(losses))  # argmin keeps the earliest on ties


def select_best(
    runs: list[tuple[StanceModel, TrainingHistory]], selection_loss: str = "label"
) -> StanceModel:
    """The run whose smallest validation loss is smallest; ties to the lowest index."""
    return runs[select_best_index([h for _, h in runs], selection_loss)][0]


def _config_to_json(config: ModelConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)


def _config_from_json(text: str) -> ModelConfig:
    data = json.loads(text)
    data["filter_widths"] = tuple(data["filter_widths"])
    data["da_features"] = tuple(data["da_features"])
    return ModelConfig(**data)


def save_checkpoint(model: StanceModel, path) -> None:
    """Binary container: header, config echo, then per-parameter records.

    Layout (all integers little-endian):
      magic 'SDNN' | u32 version | u32 config_len | config JSON (utf-8)
      u32 n_params
      per parameter: u16 name_len | name utf-8 | u8 ndim | ndim * u64 dims
                     | float64 data, C order
    """
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    config_json = _config_to_json(model.config).encode("utf-8")
    buf.write(struct.pack("<I", len(config_json)))
    buf.write(config_json)
    params = model.parameters()
    buf.write(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<B", p.value.ndim))
        buf.write(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
        buf.write(p.value.astype("<f8").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated checkpoint")
    return data


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> StanceModel:
    """Reload a checkpoint bit-exactly; validates layout, shapes and config."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a stance model checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (config_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config = _config_from_json(_read_exact(fh, config_len).decode("utf-8"))
        if expected_config is not None and config != expected_config:
            got, want = asdict(config), asdict(expected_config)
            diffs = [k for k in want if got.get(k) != want[k]]
            raise ValueError(f"{path}: checkpoint config mismatch in field(s) {diffs}")
        model = StanceModel(config)
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4))
        if n_params != len(model.params):
            raise ValueError(
                f"{path}: checkpoint has {n_params} parameters, config implies {len(model.params)}"
            )
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            if name not in model.params:
                raise ValueError(f"{path}: unexpected parameter {name!r}")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
            param = model.params[name]
            if shape != param.value.shape:
                raise ValueError(
                    f"{path}: parameter {name!r} has shape {shape}, expected {param.value.shape}"
                )
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8")
            param.value[...] = data.reshape(shape)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return model


def checkpoint_sidecar_dir(checkpoint_path) -> str:
    """Vocabulary sidecar files live next to the checkpoint."""
    return os.path.dirname(os.path.abspath(checkpoint_path))
