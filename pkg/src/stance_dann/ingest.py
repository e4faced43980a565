"""Dataset ingestion: FNC (target domain) and FEVER (source domain).

FNC ships as two CSVs joined on Body ID; FEVER records are expected as
line-delimited JSON with the evidence text already resolved into a
`document` field (Wikipedia retrieval is out of scope). Both loaders emit
LabeledPair records tagged with their domain.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

from stance_dann.seeding import rng_for

STANCE_LABELS = ("agree", "disagree", "discuss", "unrelated")
DOMAINS = ("source", "target")

FNC_STANCES_HEADER = ["Headline", "Body ID", "Stance"]
FNC_BODIES_HEADER = ["Body ID", "articleBody"]

_FEVER_LABEL_MAP = {"SUPPORTS": "agree", "REFUTES": "disagree"}
_FEVER_DISCARD = "NOT ENOUGH INFO"


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class LabeledPair:
    """One claim/document example with its stance label and domain tag."""

    id: str
    claim: str
    document: str
    label: str
    domain: str

    def __post_init__(self):
        if self.label not in STANCE_LABELS:
            raise DatasetError(f"unknown stance label {self.label!r}")
        if self.domain not in DOMAINS:
            raise DatasetError(f"unknown domain {self.domain!r}")
        if not self.claim or not self.document:
            raise DatasetError(f"example {self.id}: empty claim or document")


def _check_header(got: list[str], want: list[str], path) -> None:
    if got != want:
        raise DatasetError(f"{path}: expected header {want!r}, got {got!r}")


def load_fnc(stances_path, bodies_path) -> list[LabeledPair]:
    """Join FNC stance rows against article bodies; all pairs are target domain."""
    bodies: dict[str, str] = {}
    with open(bodies_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            _check_header(next(reader, []), FNC_BODIES_HEADER, bodies_path)
            for row in reader:
                if not row:
                    continue
                if len(row) != 2:
                    raise DatasetError(
                        f"{bodies_path}: line {reader.line_num}: expected 2 fields, got {len(row)}"
                    )
                bodies[row[0]] = row[1]
        except csv.Error as exc:
            raise DatasetError(
                f"{bodies_path}: line {reader.line_num}: {exc}"
            ) from exc

    pairs: list[LabeledPair] = []
    with open(stances_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            _check_header(next(reader, []), FNC_STANCES_HEADER, stances_path)
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise DatasetError(
                        f"{stances_path}: line {reader.line_num}: expected 3 fields, got {len(row)}"
                    )
                headline, body_id, stance = row
                if stance not in STANCE_LABELS:
                    raise DatasetError(
                        f"{stances_path}: line {reader.line_num}: unknown stance {stance!r}"
                    )
                if body_id not in bodies:
                    raise DatasetError(
                        f"{stances_path}: line {reader.line_num}: unknown body id {body_id!r}"
                    )
                pairs.append(
                    LabeledPair(
                        id=f"fnc-{len(pairs)}",
                        claim=headline,
                        document=bodies[body_id],
                        label=stance,
                        domain="target",
                    )
                )
        except csv.Error as exc:
            raise DatasetError(
                f"{stances_path}: line {reader.line_num}: {exc}"
            ) from exc
    return pairs


def load_fever(path) -> list[LabeledPair]:
    """Load FEVER-style JSONL; SUPPORTS->agree, REFUTES->disagree, NEI dropped."""
    pairs: list[LabeledPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            for field in ("claim", "document", "label"):
                if field not in record:
                    raise DatasetError(f"{path}: line {lineno}: missing field {field!r}")
            label = record["label"]
            if label == _FEVER_DISCARD:
                continue
            if label not in _FEVER_LABEL_MAP:
                raise DatasetError(f"{path}: line {lineno}: unknown label {label!r}")
            pairs.append(
                LabeledPair(
                    id=f"fever-{lineno}",
                    claim=record["claim"],
                    document=record["document"],
                    label=_FEVER_LABEL_MAP[label],
                    domain="source",
                )
            )
    return pairs


def count_records(path) -> int:
    """Non-blank line count of a JSONL file (used for dropped-row reporting)."""
    with open(path, encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())


def split_train_validation(
    examples: list[LabeledPair], fraction: float, seed: int
) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Deterministic validation split.

    Single-domain input: ceil(fraction * N) examples go to validation.
    Mixed input: the split runs per domain and the validation set takes the
    same number from each, min over the per-domain ceil counts, so it holds
    equal amounts of source and target data.
    """
    if not examples:
        raise ValueError("no examples to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")

    by_domain: dict[str, list[LabeledPair]] = {d: [] for d in DOMAINS}
    for ex in examples:
        by_domain[ex.domain].append(ex)

    rng = rng_for(seed, "train-validation-split")
    shuffled: dict[str, list[LabeledPair]] = {}
    take: dict[str, int] = {}
    for domain in DOMAINS:
        pool = by_domain[domain]
        if not pool:
            continue
        order = rng.permutation(len(pool))
        shuffled[domain] = [pool[i] for i in order]
        take[domain] = math.ceil(fraction * len(pool))
    if len(take) == 2:
        k = min(take.values())
        take = {d: k for d in take}

    train: list[LabeledPair] = []
    validation: list[LabeledPair] = []
    for domain in DOMAINS:
        if domain not in shuffled:
            continue
        k = take[domain]
        validation.extend(shuffled[domain][:k])
        train.extend(shuffled[domain][k:])
    return train, validation


def epoch_sample_balanced(
    source_pool: list[LabeledPair],
    target_pool: list[LabeledPair],
    epoch: int,
    seed: int,
) -> list[LabeledPair]:
    """Per-epoch training sample with equal source/target counts.

    Draws k = min(|source|, |target|) from each pool without replacement,
    then shuffles the union. A deterministic function of (seed, epoch).
    When one pool is empty the other is returned shuffled.
    """
    rng = rng_for(seed, "epoch-sample", epoch)
    if not source_pool or not target_pool:
        pool = source_pool or target_pool
        return [pool[i] for i in rng.permutation(len(pool))]
    k = min(len(source_pool), len(target_pool))
    chosen = [source_pool[i] for i in rng.permutation(len(source_pool))[:k]]
    chosen += [target_pool[i] for i in rng.permutation(len(target_pool))[:k]]
    return [chosen[i] for i in rng.permutation(len(chosen))]


def write_dataset(pairs: list[LabeledPair], path) -> None:
    """Normalized dataset: one JSON record per line (id, domain, label, claim, document)."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "id": pair.id,
                        "domain": pair.domain,
                        "label": pair.label,
                        "claim": pair.claim,
                        "document": pair.document,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_dataset(path) -> list[LabeledPair]:
    pairs: list[LabeledPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                pairs.append(
                    LabeledPair(
                        id=record["id"],
                        claim=record["claim"],
                        document=record["document"],
                        label=record["label"],
                        domain=record["domain"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
    return pairs
