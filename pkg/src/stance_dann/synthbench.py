"""Synthetic domain-shift benchmark.

Two 2-class token distributions share a sparse class signal but differ
systematically in vocabulary: each domain has its own strongly predictive
class tokens and its own filler tokens. The source domain has abundant
labels, the target domain few, so a model trained without adaptation leans
on source-specific shortcuts that are absent at target test time, while
the adversarial variant is pushed onto the shared signal.

The benchmark trains both variants over several seeds and checks:
  * a frozen-feature domain probe separates domains on the plain model but
    not on the adapted one;
  * adapted target-test macro-F1 matches or beats the plain model;
  * late-training validation label loss drifts down while the validation
    domain loss drifts up.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from stance_dann import layers
from stance_dann.ingest import LabeledPair
from stance_dann.metrics import macro_f1
from stance_dann.model import (
    Featurizer,
    ModelConfig,
    StanceModel,
    build_featurizer,
    make_batch,
)
from stance_dann.optim import AdamState, adam_step
from stance_dann.seeding import rng_for
from stance_dann.trainer import TrainConfig, TrainingHistory, train

CLASS_LABELS = ("agree", "disagree")


@dataclass(frozen=True)
class SynthSpec:
    """Generator and benchmark knobs; defaults are the acceptance settings.

    Class signal lives in shared tokens; the domain difference is a dense
    "style": marker tokens interleaved through every text. Style words sit
    inside most convolution windows, so they shift class-channel responses
    between domains until adaptation merges the marker embeddings.
    """

    n_source: int = 2000
    n_target: int = 100
    n_target_test: int = 400
    n_probe_train_per_domain: int = 300
    n_probe_test_per_domain: int = 200
    claim_len: int = 6
    doc_len: int = 24
    tokens_per_group: int = 12
    marker_forms: int = 2
    common_tokens: int = 40
    shared_rate: float = 0.20
    marker_rate: float = 0.40
    claim_marker_rate: float = 0.30
    shared_noise: float = 0.20
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_eps: float = 1e-8
    lambda_max: float = 1.0
    ramp_gamma: float = 10.0
    embed_dim: int = 24
    filter_widths: tuple[int, ...] = (2, 3)
    maps_per_width: int = 12
    hidden: int = 32
    domain_hidden: int = 64
    n_seeds: int = 5


def _make_example(spec: SynthSpec, rng, domain: str, cls: int, uid: str) -> LabeledPair:
    marker = "msrc" if domain == "source" else "mtgt"

    doc = []
    for _ in range(spec.doc_len):
        r = rng.random()
        if r < spec.shared_rate:
            c = cls if rng.random() >= spec.shared_noise else 1 - cls
            doc.append(f"sig{c}k{rng.integers(spec.tokens_per_group)}")
        elif r < spec.shared_rate + spec.marker_rate:
            doc.append(f"{marker}{rng.integers(spec.marker_forms)}")
        else:
            doc.append(f"com{rng.integers(spec.common_tokens)}")
    claim = []
    for _ in range(spec.claim_len):
        if rng.random() < spec.claim_marker_rate:
            claim.append(f"{marker}{rng.integers(spec.marker_forms)}")
        else:
            claim.append(f"com{rng.integers(spec.common_tokens)}")
    return LabeledPair(
        id=uid,
        claim=" ".join(claim),
        document=" ".join(doc),
        label=CLASS_LABELS[cls],
        domain=domain,
    )


def _make_pool(spec: SynthSpec, rng, domain: str, n: int, tag: str) -> list[LabeledPair]:
    return [
        _make_example(spec, rng, domain, i % 2, f"{tag}-{i}")
        for i in range(n)
    ]


def generate_data(spec: SynthSpec, seed: int) -> dict[str, list[LabeledPair]]:
    rng = rng_for(seed, "synth-data")
    return {
        "source_train": _make_pool(spec, rng, "source", spec.n_source, "s"),
        "target_train": _make_pool(spec, rng, "target", spec.n_target, "t"),
        "target_test": _make_pool(spec, rng, "target", spec.n_target_test, "tt"),
        "probe_source_train": _make_pool(spec, rng, "source", spec.n_probe_train_per_domain, "ps"),
        "probe_target_train": _make_pool(spec, rng, "target", spec.n_probe_train_per_domain, "pt"),
        "probe_source_test": _make_pool(spec, rng, "source", spec.n_probe_test_per_domain, "qs"),
        "probe_target_test": _make_pool(spec, rng, "target", spec.n_probe_test_per_domain, "qt"),
    }


def _model_config(spec: SynthSpec, adversarial: bool) -> ModelConfig:
    return ModelConfig(
        use_bow=False,
        use_cnn=True,
        da_features=("cnn",) if adversarial else (),
        embed_dim=spec.embed_dim,
        filter_widths=spec.filter_widths,
        maps_per_width=spec.maps_per_width,
        claim_max_len=spec.claim_len,
        doc_max_len=spec.doc_len,
        label_hidden=spec.hidden,
        domain_hidden=spec.domain_hidden,
        num_labels=4,
        bow_vocab_size=1,
        embed_vocab_size=1,
    )


def _train_config(spec: SynthSpec, seed: int, epochs: int) -> TrainConfig:
    return TrainConfig(
        epochs=epochs,
        batch_size=spec.batch_size,
        learning_rate=spec.learning_rate,
        adam_eps=spec.adam_eps,
        lambda_max=spec.lambda_max,
        ramp_gamma=spec.ramp_gamma,
        seed=seed,
        runs=1,
    )


def train_domain_probe(
    train_features: np.ndarray,
    train_domains: np.ndarray,
    test_features: np.ndarray,
    test_domains: np.ndarray,
    seed: int,
    steps: int = 300,
) -> float:
    """Logistic-regression probe on frozen features; returns held-out accuracy."""
    mean = train_features.mean(axis=0)
    std = train_features.std(axis=0) + 1e-8
    xtr = (train_features - mean) / std
    xte = (test_features - mean) / std

    rng = rng_for(seed, "domain-probe")
    dim = xtr.shape[1]
    w = layers.Parameter(rng.uniform(-0.01, 0.01, size=(dim, 2)), "probe_w")
    b = layers.Parameter(np.zeros(2), "probe_b")
    adam = AdamState(alpha=0.05)
    for _ in range(steps):
        logits = layers.dense_forward(xtr, w, b)
        _, probs = layers.softmax_cross_entropy(logits, train_domains)
        dlogits = layers.softmax_cross_entropy_backward(probs, train_domains)
        layers.dense_backward(dlogits, xtr, w, b)
        adam_step([w, b], adam)
    pred = layers.dense_forward(xte, w, b).argmax(axis=1)
    return float((pred == test_domains).mean())


def _trend_slope(values: list[float]) -> float:
    x = np.arange(len(values), dtype=np.float64)
    return float(np.polyfit(x, np.asarray(values, dtype=np.float64), 1)[0])


def final_third_slopes(history: TrainingHistory) -> tuple[float, float]:
    """Least-squares slopes of validation label/domain loss over the last third."""
    records = history.records
    tail = records[(2 * len(records)) // 3 :]
    if len(tail) < 2:
        return math.nan, math.nan
    label = [r.val_label_loss for r in tail]
    domain = [r.val_domain_loss for r in tail]
    label_slope = _trend_slope(label)
    domain_slope = _trend_slope(domain) if all(d is not None for d in domain) else math.nan
    return label_slope, domain_slope


@dataclass
class SeedResult:
    seed: int
    macro_f1_da: float
    macro_f1_noda: float
    probe_acc_da: float
    probe_acc_noda: float
    val_label_slope_da: float
    val_domain_slope_da: float


@dataclass
class BenchReport:
    spec: SynthSpec
    base_seed: int
    seeds: list[SeedResult] = field(default_factory=list)
    runtime_seconds: float = 0.0
    insufficient_training: bool = False

    @property
    def probe_gap_ok(self) -> bool:
        return all(
            s.probe_acc_da <= 0.65 and s.probe_acc_noda >= 0.85 for s in self.seeds
        )

    @property
    def f1_floor_ok(self) -> bool:
        return all(s.macro_f1_da >= s.macro_f1_noda - 0.02 for s in self.seeds)

    @property
    def f1_wins(self) -> int:
        return sum(s.macro_f1_da > s.macro_f1_noda for s in self.seeds)

    @property
    def trend_passes(self) -> int:
        return sum(
            s.val_label_slope_da <= 0 and s.val_domain_slope_da >= 0 for s in self.seeds
        )

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "base_seed": self.base_seed,
            "seeds": [asdict(s) for s in self.seeds],
            "runtime_seconds": self.runtime_seconds,
            "insufficient_training": self.insufficient_training,
            "checks": None
            if self.insufficient_training
            else {
                "probe_gap_ok": self.probe_gap_ok,
                "f1_floor_ok": self.f1_floor_ok,
                "f1_wins": self.f1_wins,
                "trend_passes": self.trend_passes,
            },
        }

    def format(self) -> str:
        lines = []
        if self.insufficient_training:
            lines.append("insufficient training: epochs=0, no checks evaluated")
        for s in self.seeds:
            lines.append(
                f"seed {s.seed}: macroF1 da={s.macro_f1_da:.3f} noda={s.macro_f1_noda:.3f}  "
                f"probe da={s.probe_acc_da:.3f} noda={s.probe_acc_noda:.3f}  "
                f"slopes label={s.val_label_slope_da:+.2e} domain={s.val_domain_slope_da:+.2e}"
            )
        if self.seeds and not self.insufficient_training:
            lines.append(
                f"checks: probe_gap={'ok' if self.probe_gap_ok else 'FAIL'} "
                f"f1_floor={'ok' if self.f1_floor_ok else 'FAIL'} "
                f"f1_wins={self.f1_wins}/{len(self.seeds)} "
                f"trend_passes={self.trend_passes}/{len(self.seeds)}"
            )
        lines.append(f"runtime: {self.runtime_seconds:.1f}s")
        return "\n".join(lines)


def _evaluate_seed(spec: SynthSpec, seed: int, epochs: int) -> SeedResult:
    data = generate_data(spec, seed)
    # vocabularies must cover source-specific tokens, so both domains feed them
    featurizer = build_featurizer(
        data["source_train"] + data["target_train"],
        bow_max_terms=4,
        embed_max_terms=2000,
    )

    results = {}
    histories = {}
    for name, adversarial in (("da", True), ("noda", False)):
        model_config = _model_config(spec, adversarial)
        model, history = train(
            model_config,
            _train_config(spec, seed, epochs),
            data["source_train"],
            data["target_train"],
            featurizer,
        )
        results[name] = model
        histories[name] = history

    def test_f1(model: StanceModel) -> float:
        bundles = featurizer.extract_many(data["target_test"], model.config)
        pred = model.predict(bundles)
        gold = [p.label for p in data["target_test"]]
        return macro_f1(gold, pred, classes=CLASS_LABELS)[0]

    def probe_acc(model: StanceModel) -> float:
        def feats(pool_names):
            pairs = [p for name in pool_names for p in data[name]]
            bundles = featurizer.extract_many(pairs, model.config)
            domains = np.array([0 if p.domain == "source" else 1 for p in pairs])
            return model.features(bundles), domains

        xtr, dtr = feats(["probe_source_train", "probe_target_train"])
        xte, dte = feats(["probe_source_test", "probe_target_test"])
        return train_domain_probe(xtr, dtr, xte, dte, seed)

    label_slope, domain_slope = final_third_slopes(histories["da"])
    return SeedResult(
        seed=seed,
        macro_f1_da=test_f1(results["da"]),
        macro_f1_noda=test_f1(results["noda"]),
        probe_acc_da=probe_acc(results["da"]),
        probe_acc_noda=probe_acc(results["noda"]),
        val_label_slope_da=label_slope,
        val_domain_slope_da=domain_slope,
    )


def run_benchmark(
    base_seed: int = 0,
    out_dir=None,
    epochs: int | None = None,
    spec: SynthSpec = SynthSpec(),
    n_seeds: int | None = None,
) -> BenchReport:
    started = time.monotonic()
    effective_epochs = spec.epochs if epochs is None else epochs
    report = BenchReport(spec=spec, base_seed=base_seed)
    if effective_epochs <= 0:
        report.insufficient_training = True
    else:
        for i in range(n_seeds if n_seeds is not None else spec.n_seeds):
            report.seeds.append(_evaluate_seed(spec, base_seed + i, effective_epochs))
    report.runtime_seconds = time.monotonic() - started
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "synthbench.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "synthbench.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.format() + "\n")
    return report
