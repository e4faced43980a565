"""Model assembly: feature extraction, label head, adversarial domain head.

A StanceModel owns three groups of parameters:

* feature extraction: embedding table plus per-width convolution banks for
  claim and document (bag-of-words features are raw inputs and carry no
  parameters);
* a label MLP over the concatenation of all enabled feature blocks;
* optionally a domain MLP over a configurable subset of blocks, reached
  through a gradient reversal layer so the feature extractor is trained to
  confuse it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from stance_dann import layers
from stance_dann.ingest import LabeledPair
from stance_dann.layers import Parameter
from stance_dann.textprep import (
    Vocabulary,
    build_vocab,
    cosine_similarity,
    tf_vector,
    tfidf_vector,
    tokenize,
)

LABELS4 = ("agree", "disagree", "discuss", "unrelated")
LABELS3 = ("agree", "disagree", "discuss")
LABELS2 = ("related", "unrelated")
CLASS_ORDERS = {2: LABELS2, 3: LABELS3, 4: LABELS4}

DOMAIN_ORDER = ("source", "target")
BLOCK_ORDER = ("bow", "cnn")


def label_index(label: str, num_labels: int) -> int:
    """Map a stance label to its class index under the model's class order."""
    if num_labels == 2:
        return 1 if label == "unrelated" else 0
    order = CLASS_ORDERS[num_labels]
    try:
        return order.index(label)
    except ValueError:
        raise ValueError(f"label {label!r} not in class order {order}") from None


def domain_index(domain: str) -> int:
    return DOMAIN_ORDER.index(domain)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; parameter shapes follow from it alone.

    Vocabulary sizes are the realized sizes of the vocabularies the model
    was built against (see `resolve_config`), not the build-time caps.
    """

    use_bow: bool = True
    use_cnn: bool = True
    da_features: tuple[str, ...] = ()
    embed_dim: int = 300
    filter_widths: tuple[int, ...] = (2, 3, 4)
    maps_per_width: int = 128
    claim_max_len: int = 50
    doc_max_len: int = 500
    label_hidden: int = 100
    domain_hidden: int = 100
    num_labels: int = 4
    bow_vocab_size: int = 5000
    embed_vocab_size: int = 5000
    share_cnn_filters: bool = False
    finetune_embeddings: bool = True
    freeze_padding: bool = True
    source_in_label_loss: bool = True

    def __post_init__(self):
        if not (self.use_bow or self.use_cnn):
            raise ValueError("at least one of use_bow/use_cnn must be enabled")
        enabled = self.enabled_blocks
        normalized = tuple(b for b in BLOCK_ORDER if b in self.da_features)
        if set(self.da_features) - set(BLOCK_ORDER):
            raise ValueError(f"unknown da_features {self.da_features}")
        if set(normalized) - set(enabled):
            raise ValueError("da_features must be a subset of the enabled feature blocks")
        object.__setattr__(self, "da_features", normalized)
        if self.num_labels not in CLASS_ORDERS:
            raise ValueError(f"num_labels must be one of {sorted(CLASS_ORDERS)}")
        for name in (
            "embed_dim",
            "maps_per_width",
            "claim_max_len",
            "doc_max_len",
            "label_hidden",
            "domain_hidden",
            "bow_vocab_size",
            "embed_vocab_size",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.filter_widths or any(w <= 0 for w in self.filter_widths):
            raise ValueError("filter_widths must be positive")

    @property
    def enabled_blocks(self) -> tuple[str, ...]:
        return tuple(
            b for b, on in zip(BLOCK_ORDER, (self.use_bow, self.use_cnn)) if on
        )

    @property
    def bow_dim(self) -> int:
        # claim TF + document TF + tf-idf cosine scalar
        return 2 * self.bow_vocab_size + 1

    @property
    def cnn_dim(self) -> int:
        return 2 * len(self.filter_widths) * self.maps_per_width

    def block_dim(self, block: str) -> int:
        return self.bow_dim if block == "bow" else self.cnn_dim

    @property
    def label_input_dim(self) -> int:
        return sum(self.block_dim(b) for b in self.enabled_blocks)

    @property
    def domain_input_dim(self) -> int:
        return sum(self.block_dim(b) for b in self.da_features)

    @property
    def has_domain_head(self) -> bool:
        return bool(self.da_features)

    @property
    def class_order(self) -> tuple[str, ...]:
        return CLASS_ORDERS[self.num_labels]


@dataclass
class FeatureBundle:
    """Per-example features: BOW vector plus padded token-id sequences."""

    bow: np.ndarray
    claim_ids: np.ndarray
    doc_ids: np.ndarray


def encode_ids(tokens: list[str], vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Vocabulary ids shifted by one (0 = padding / unknown), truncated and padded."""
    ids = np.zeros(max_len, dtype=np.int64)
    index = vocab.index
    for i, token in enumerate(tokens[:max_len]):
        ids[i] = index.get(token, -1) + 1
    return ids


def extract_features(
    pair: LabeledPair,
    bow_vocab: Vocabulary,
    embed_vocab: Vocabulary,
    config: ModelConfig,
) -> FeatureBundle:
    claim_tokens = tokenize(pair.claim)
    doc_tokens = tokenize(pair.document)
    cos = cosine_similarity(
        tfidf_vector(claim_tokens, bow_vocab), tfidf_vector(doc_tokens, bow_vocab)
    )
    bow = np.concatenate(
        [tf_vector(claim_tokens, bow_vocab), tf_vector(doc_tokens, bow_vocab), [cos]]
    )
    return FeatureBundle(
        bow=bow,
        claim_ids=encode_ids(claim_tokens, embed_vocab, config.claim_max_len),
        doc_ids=encode_ids(doc_tokens, embed_vocab, config.doc_max_len),
    )


@dataclass
class Featurizer:
    """Holds the two vocabularies and turns pairs into feature bundles."""

    bow_vocab: Vocabulary
    embed_vocab: Vocabulary

    BOW_FILE = "bow_vocab.tsv"
    EMBED_FILE = "embed_vocab.tsv"

    def extract(self, pair: LabeledPair, config: ModelConfig) -> FeatureBundle:
        return extract_features(pair, self.bow_vocab, self.embed_vocab, config)

    def extract_many(self, pairs, config: ModelConfig) -> list[FeatureBundle]:
        return [self.extract(p, config) for p in pairs]

    def save(self, directory) -> None:
        import os

        self.bow_vocab.save(os.path.join(directory, self.BOW_FILE))
        self.embed_vocab.save(os.path.join(directory, self.EMBED_FILE))

    @classmethod
    def load(cls, directory) -> "Featurizer":
        import os

        return cls(
            bow_vocab=Vocabulary.load(os.path.join(directory, cls.BOW_FILE)),
            embed_vocab=Vocabulary.load(os.path.join(directory, cls.EMBED_FILE)),
        )


def build_featurizer(
    pairs, bow_max_terms: int = 5000, embed_max_terms: int = 5000
) -> Featurizer:
    """Build both vocabularies from the claims and documents of `pairs`.

    Each claim and each document counts as one corpus document for the
    document frequencies.
    """
    corpus = []
    for pair in pairs:
        corpus.append(tokenize(pair.claim))
        corpus.append(tokenize(pair.document))
    return Featurizer(
        bow_vocab=build_vocab(corpus, bow_max_terms),
        embed_vocab=build_vocab(corpus, embed_max_terms),
    )


def resolve_config(config: ModelConfig, featurizer: Featurizer) -> ModelConfig:
    """Pin the config's vocabulary sizes to the featurizer's realized sizes."""
    return replace(
        config,
        bow_vocab_size=len(featurizer.bow_vocab),
        embed_vocab_size=len(featurizer.embed_vocab),
    )


def load_word2vec_text(path) -> tuple[dict[str, np.ndarray], int]:
    """Parse word2vec text format: header `V dim`, then `word v1 .. vdim` lines."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected header 'count dim'")
        count, dim = int(header[0]), int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: line {lineno}: expected {dim + 1} fields")
            vectors[parts[0]] = np.array(parts[1:], dtype=np.float64)
    if len(vectors) != count:
        raise ValueError(f"{path}: header declared {count} words, found {len(vectors)}")
    return vectors, dim


def init_embedding_matrix(
    embed_vocab: Vocabulary,
    dim: int,
    rng: np.random.Generator,
    pretrained: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Row 0 is the zero padding vector; unseen terms get uniform(-0.25, 0.25)."""
    matrix = rng.uniform(-0.25, 0.25, size=(len(embed_vocab) + 1, dim))
    matrix[0] = 0.0
    if pretrained:
        for term, i in embed_vocab.index.items():
            vec = pretrained.get(term)
            if vec is not None:
                if vec.shape != (dim,):
                    raise ValueError(
                        f"pretrained vector for {term!r} has dim {vec.shape[0]}, expected {dim}"
                    )
                matrix[i + 1] = vec
    return matrix


@dataclass
class Batch:
    """Stacked features plus optional label/domain indices (-1 = not scored)."""

    bow: np.ndarray | None
    claim_ids: np.ndarray | None
    doc_ids: np.ndarray | None
    labels: np.ndarray
    domains: np.ndarray

    def __len__(self) -> int:
        for part in (self.bow, self.claim_ids):
            if part is not None:
                return part.shape[0]
        return self.doc_ids.shape[0]


def make_batch(
    bundles: list[FeatureBundle],
    labels: list[int] | np.ndarray | None = None,
    domains: list[int] | np.ndarray | None = None,
) -> Batch:
    if not bundles:
        raise ValueError("empty batch")
    n = len(bundles)
    return Batch(
        bow=np.stack([b.bow for b in bundles]),
        claim_ids=np.stack([b.claim_ids for b in bundles]),
        doc_ids=np.stack([b.doc_ids for b in bundles]),
        labels=np.full(n, -1, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64),
        domains=np.full(n, -1, dtype=np.int64) if domains is None else np.asarray(domains, dtype=np.int64),
    )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class StanceModel:
    """The assembled network; mutable during training, frozen for inference."""

    def __init__(
        self,
        config: ModelConfig,
        rng: np.random.Generator | None = None,
        embedding_init: np.ndarray | None = None,
    ):
        self.config = config
        self.params: dict[str, Parameter] = {}
        c = config
        if rng is None:
            rng = np.random.default_rng(0)

        if c.use_cnn:
            rows = c.embed_vocab_size + 1
            if embedding_init is not None:
                if embedding_init.shape != (rows, c.embed_dim):
                    raise ValueError(
                        f"embedding init shape {embedding_init.shape}, "
                        f"expected {(rows, c.embed_dim)}"
                    )
                emb = embedding_init.copy()
            else:
                emb = rng.uniform(-0.25, 0.25, size=(rows, c.embed_dim))
                emb[0] = 0.0
            self._add("embeddings", emb)
            banks = ("shared",) if c.share_cnn_filters else ("claim", "doc")
            for bank in banks:
                for w in c.filter_widths:
                    fan_in = w * c.embed_dim
                    self._add(
                        f"conv_{bank}_w{w}_filters",
                        _glorot(rng, fan_in, c.maps_per_width, (w, c.embed_dim, c.maps_per_width)),
                    )
                    self._add(f"conv_{bank}_w{w}_bias", np.zeros(c.maps_per_width))

        self._add(
            "label_w1", _glorot(rng, c.label_input_dim, c.label_hidden, (c.label_input_dim, c.label_hidden))
        )
        self._add("label_b1", np.zeros(c.label_hidden))
        self._add(
            "label_w2", _glorot(rng, c.label_hidden, c.num_labels, (c.label_hidden, c.num_labels))
        )
        self._add("label_b2", np.zeros(c.num_labels))

        if c.has_domain_head:
            self._add(
                "domain_w1",
                _glorot(rng, c.domain_input_dim, c.domain_hidden, (c.domain_input_dim, c.domain_hidden)),
            )
            self._add("domain_b1", np.zeros(c.domain_hidden))
            self._add("domain_w2", _glorot(rng, c.domain_hidden, 2, (c.domain_hidden, 2)))
            self._add("domain_b2", np.zeros(2))

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Parameter(value, name)

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    @property
    def has_domain_head(self) -> bool:
        return self.config.has_domain_head

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def trainable_parameters(self) -> list[Parameter]:
        params = []
        for p in self.params.values():
            if p.name == "embeddings" and not self.config.finetune_embeddings:
                continue
            params.append(p)
        return params

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def _conv_bank(self, which: str):
        bank = "shared" if self.config.share_cnn_filters else which
        return [
            (self.params[f"conv_{bank}_w{w}_filters"], self.params[f"conv_{bank}_w{w}_bias"])
            for w in self.config.filter_widths
        ]

    def _encode_sequences(self, ids_batch: np.ndarray, which: str):
        """Embed + convolve + pool each sequence; returns [batch, widths*maps]."""
        c = self.config
        maps = c.maps_per_width
        bank = self._conv_bank(which)
        out = np.empty((ids_batch.shape[0], len(bank) * maps))
        caches = []
        for i in range(ids_batch.shape[0]):
            emb = layers.embed_lookup(ids_batch[i], self.params["embeddings"])
            wcaches = []
            for j, (filt, bias) in enumerate(bank):
                pooled, cache = layers.conv1d_maxpool_forward(emb, filt, bias)
                out[i, j * maps : (j + 1) * maps] = pooled
                wcaches.append(cache)
            caches.append(wcaches)
        return out, (ids_batch, caches)

    def _encode_sequences_backward(self, dout: np.ndarray, cache) -> None:
        maps = self.config.maps_per_width
        ids_batch, caches = cache
        emb_param = self.params["embeddings"]
        for i, wcaches in enumerate(caches):
            demb = None
            for j, wcache in enumerate(wcaches):
                dx = layers.conv1d_maxpool_backward(dout[i, j * maps : (j + 1) * maps], wcache)
                demb = dx if demb is None else demb + dx
            layers.embed_backward(demb, ids_batch[i], emb_param)

    def _forward(self, batch: Batch, lam: float):
        c = self.config
        blocks: dict[str, np.ndarray] = {}
        cache: dict = {}
        if c.use_bow:
            if batch.bow is None or batch.bow.shape[1] != c.bow_dim:
                raise ValueError(
                    f"batch BOW width {None if batch.bow is None else batch.bow.shape[1]} "
                    f"does not match config ({c.bow_dim})"
                )
            blocks["bow"] = batch.bow
        if c.use_cnn:
            claim_vec, claim_cache = self._encode_sequences(batch.claim_ids, "claim")
            doc_vec, doc_cache = self._encode_sequences(batch.doc_ids, "doc")
            blocks["cnn"] = np.concatenate([claim_vec, doc_vec], axis=1)
            cache["claim_cache"] = claim_cache
            cache["doc_cache"] = doc_cache

        label_in = np.concatenate([blocks[b] for b in c.enabled_blocks], axis=1)
        h1 = layers.dense_forward(label_in, self.params["label_w1"], self.params["label_b1"])
        a1 = layers.relu_forward(h1)
        label_logits = layers.dense_forward(a1, self.params["label_w2"], self.params["label_b2"])

        domain_logits = None
        if c.has_domain_head:
            da_in = np.concatenate([blocks[b] for b in c.da_features], axis=1)
            da_fwd = layers.grad_reverse_forward(da_in, lam)
            hd = layers.dense_forward(da_fwd, self.params["domain_w1"], self.params["domain_b1"])
            ad = layers.relu_forward(hd)
            domain_logits = layers.dense_forward(ad, self.params["domain_w2"], self.params["domain_b2"])
            cache.update(da_in=da_fwd, hd=hd, ad=ad)

        cache.update(blocks=blocks, label_in=label_in, h1=h1, a1=a1)
        return label_logits, domain_logits, cache

    def forward(self, bundles: list[FeatureBundle], lam: float = 0.0):
        """Label logits [n, num_labels] and domain logits [n, 2] (None without a domain head)."""
        batch = bundles if isinstance(bundles, Batch) else make_batch(bundles)
        label_logits, domain_logits, _ = self._forward(batch, lam)
        return label_logits, domain_logits

    def _split_blocks(self, dvec: np.ndarray, names: tuple[str, ...]):
        out = {}
        offset = 0
        for name in names:
            width = self.config.block_dim(name)
            out[name] = dvec[:, offset : offset + width]
            offset += width
        return out

    def _backward(self, cache, dlabel_logits, ddomain_logits, lam: float) -> None:
        c = self.config
        dblocks = {b: None for b in c.enabled_blocks}

        def accumulate(grads: dict[str, np.ndarray]) -> None:
            for name, g in grads.items():
                dblocks[name] = g.copy() if dblocks[name] is None else dblocks[name] + g

        if dlabel_logits is not None:
            da1 = layers.dense_backward(dlabel_logits, cache["a1"], self.params["label_w2"], self.params["label_b2"])
            dh1 = layers.relu_backward(da1, cache["h1"])
            dlabel_in = layers.dense_backward(dh1, cache["label_in"], self.params["label_w1"], self.params["label_b1"])
            accumulate(self._split_blocks(dlabel_in, c.enabled_blocks))

        if ddomain_logits is not None:
            dad = layers.dense_backward(ddomain_logits, cache["ad"], self.params["domain_w2"], self.params["domain_b2"])
            dhd = layers.relu_backward(dad, cache["hd"])
            dda_in = layers.dense_backward(dhd, cache["da_in"], self.params["domain_w1"], self.params["domain_b1"])
            dda_feat = layers.grad_reverse_backward(dda_in, lam)
            accumulate(self._split_blocks(dda_feat, c.da_features))

        if c.use_cnn and dblocks.get("cnn") is not None:
            dcnn = dblocks["cnn"]
            half = dcnn.shape[1] // 2
            self._encode_sequences_backward(dcnn[:, :half], cache["claim_cache"])
            self._encode_sequences_backward(dcnn[:, half:], cache["doc_cache"])
        # BOW blocks are raw inputs: no parameters upstream, gradient stops here.

    def loss_and_grads(
        self,
        batch: Batch,
        lam: float,
        label_weight: float = 1.0,
        domain_weight: float = 1.0,
    ) -> tuple[float | None, float | None]:
        """Compute both losses and accumulate all gradients.

        Label loss averages over rows with labels >= 0; domain loss covers
        every row. The reversal layer sits between the shared features and
        the domain head, so feature parameters receive -lam times the
        domain gradient while the domain head itself descends its loss.
        """
        if lam > 0 and not self.has_domain_head:
            raise ValueError("lambda > 0 requires a domain adaptation head")
        label_logits, domain_logits, cache = self._forward(batch, lam)

        label_mask = batch.labels >= 0
        label_loss = None
        dlabel = None
        if label_mask.any():
            loss, probs = layers.softmax_cross_entropy(
                label_logits[label_mask], batch.labels[label_mask]
            )
            label_loss = loss
            if label_weight != 0.0:
                dlabel = np.zeros_like(label_logits)
                dlabel[label_mask] = label_weight * layers.softmax_cross_entropy_backward(
                    probs, batch.labels[label_mask]
                )

        domain_loss = None
        ddomain = None
        if self.has_domain_head:
            if (batch.domains < 0).any():
                raise ValueError("domain tags required when the domain head is active")
            domain_loss, dprobs = layers.softmax_cross_entropy(domain_logits, batch.domains)
            if domain_weight != 0.0:
                ddomain = domain_weight * layers.softmax_cross_entropy_backward(
                    dprobs, batch.domains
                )

        self._backward(cache, dlabel, ddomain, lam)
        return label_loss, domain_loss

    def eval_losses(self, batch: Batch) -> tuple[float | None, float | None]:
        """Loss values only, no gradient side effects."""
        label_logits, domain_logits, _ = self._forward(batch, 0.0)
        label_mask = batch.labels >= 0
        label_loss = None
        if label_mask.any():
            label_loss, _ = layers.softmax_cross_entropy(
                label_logits[label_mask], batch.labels[label_mask]
            )
        domain_loss = None
        if self.has_domain_head:
            domain_loss, _ = layers.softmax_cross_entropy(domain_logits, batch.domains)
        return label_loss, domain_loss

    def predict(self, bundles: list[FeatureBundle]) -> list[str]:
        """Argmax stance labels; ties resolve to the lowest class index."""
        if isinstance(bundles, list) and not bundles:
            return []
        label_logits, _ = self.forward(bundles, 0.0)
        order = self.config.class_order
        return [order[i] for i in label_logits.argmax(axis=1)]

    def features(self, bundles: list[FeatureBundle]) -> np.ndarray:
        """Frozen feature-extraction output (all enabled blocks, concatenated)."""
        batch = bundles if isinstance(bundles, Batch) else make_batch(bundles)
        _, _, cache = self._forward(batch, 0.0)
        return cache["label_in"]
