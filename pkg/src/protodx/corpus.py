"""Corpus ingestion, tokenization, TF-IDF statistics, patient-disjoint
splitting and synthetic corpus generation.

Corpus file format: UTF-8, one JSON object per line with fields
``id``, ``patient_id``, ``text`` and ``labels`` (array of strings).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CorpusParseError, InputError

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
RESERVED_TOKENS = ("<pad>", "<unk>", "<mask>")
N_RESERVED = len(RESERVED_TOKENS)

DEFAULT_MAX_LEN = 512

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation boundaries.

    Runs of word characters become one token each; every punctuation
    character is kept as its own token.
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bijection between surviving token strings and ids >= 3.

    Ids 0/1/2 are reserved for PAD, UNK and MASK and are never produced
    by raw text.
    """

    def __init__(self, tokens: list[str]):
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                raise ConfigError(f"reserved marker {tok!r} cannot be a vocabulary token")
        self._id_to_token = list(RESERVED_TOKENS) + list(tokens)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ConfigError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def encode_token(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def encode(self, tokens: list[str]) -> list[int]:
        get = self._token_to_id.get
        return [get(t, UNK_ID) for t in tokens]

    def decode_id(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def decode(self, ids) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def tokens(self) -> list[str]:
        """All token strings in id order, reserved markers included."""
        return list(self._id_to_token)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token


@dataclass(frozen=True)
class Document:
    id: str
    patient_id: str
    text: str
    tokens: tuple[int, ...]
    labels: frozenset[int]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    label_vocab: tuple[str, ...]
    vocab: Vocabulary

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def n_labels(self) -> int:
        return len(self.label_vocab)

    @property
    def label_train_freq(self) -> np.ndarray:
        """Per-label count of positive documents in this corpus."""
        freq = np.zeros(self.n_labels, dtype=np.int64)
        for doc in self.documents:
            for c in doc.labels:
                freq[c] += 1
        return freq

    def label_matrix(self) -> np.ndarray:
        """Binary (n_docs, n_labels) ground-truth matrix."""
        y = np.zeros((len(self.documents), self.n_labels), dtype=np.int8)
        for i, doc in enumerate(self.documents):
            for c in doc.labels:
                y[i, c] = 1
        return y

    def patient_ids(self) -> set[str]:
        return {d.patient_id for d in self.documents}

    def by_id(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.id == doc_id:
                return doc
        raise KeyError(doc_id)


def build_vocab(corpus: Corpus, min_freq: int = 1) -> Vocabulary:
    """Vocabulary over tokens with corpus frequency >= min_freq.

    Ids are assigned in descending-frequency order, ties broken
    lexicographically. Everything else maps to UNK.
    """
    if len(corpus) == 0:
        raise InputError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for doc in corpus.documents:
        # count over the same truncated window the document's ids cover
        counts.update(tokenize(doc.text)[: len(doc.tokens)])
    surviving = sorted(
        (t for t, n in counts.items() if n >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(surviving)


def _vocab_from_token_lists(token_lists: list[list[str]]) -> Vocabulary:
    counts: Counter[str] = Counter()
    for toks in token_lists:
        counts.update(toks)
    surviving = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(surviving)


def make_corpus(
    records: list[dict],
    vocab: Vocabulary | None = None,
    label_vocab: list[str] | None = None,
    max_len: int = DEFAULT_MAX_LEN,
) -> Corpus:
    """Assemble a Corpus from parsed records.

    Records need ``id``, ``patient_id``, ``text`` and ``labels``. When no
    vocabulary is given one is built from the records themselves; unseen
    tokens map to UNK otherwise. A fixed label vocabulary turns unknown
    labels into errors; otherwise labels are discovered and sorted.
    """
    token_lists = [tokenize(r["text"])[:max_len] for r in records]
    for r, toks in zip(records, token_lists):
        if not toks:
            raise InputError(f"document {r['id']!r} has no tokens after tokenization")
    if vocab is None:
        vocab = _vocab_from_token_lists(token_lists)

    fixed_labels = label_vocab is not None
    if label_vocab is None:
        seen: set[str] = set()
        for r in records:
            seen.update(r["labels"])
        label_vocab = sorted(seen)
    label_to_id = {name: i for i, name in enumerate(label_vocab)}

    docs = []
    for r, toks in zip(records, token_lists):
        ids = []
        for name in r["labels"]:
            if name not in label_to_id:
                if fixed_labels:
                    raise InputError(f"document {r['id']!r} has unknown label {name!r}")
                continue
            ids.append(label_to_id[name])
        docs.append(
            Document(
                id=str(r["id"]),
                patient_id=str(r["patient_id"]),
                text=r["text"],
                tokens=tuple(vocab.encode(toks)),
                labels=frozenset(ids),
            )
        )
    return Corpus(documents=tuple(docs), label_vocab=tuple(label_vocab), vocab=vocab)


def load_corpus(
    path,
    vocab: Vocabulary | None = None,
    label_vocab: list[str] | None = None,
    max_len: int = DEFAULT_MAX_LEN,
) -> Corpus:
    """Read a line-delimited JSON corpus file."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            for key in ("id", "patient_id", "text", "labels"):
                if key not in rec:
                    raise CorpusParseError(line_no, f"missing field {key!r}")
            if not isinstance(rec["labels"], list):
                raise CorpusParseError(line_no, "field 'labels' must be an array")
            records.append(rec)
    return make_corpus(records, vocab=vocab, label_vocab=label_vocab, max_len=max_len)


def save_corpus(corpus: Corpus, path) -> None:
    """Write the corpus in the line-delimited JSON interchange format."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            rec = {
                "id": doc.id,
                "patient_id": doc.patient_id,
                "text": doc.text,
                "labels": [corpus.label_vocab[c] for c in sorted(doc.labels)],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_label_vocab(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def save_label_vocab(label_vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in label_vocab:
            fh.write(name + "\n")


# ---------------------------------------------------------------------------
# TF-IDF
# ---------------------------------------------------------------------------


@dataclass
class TfidfTable:
    """Class-conditional TF-IDF scores.

    ``scores[c]`` maps token id -> tf(t, c) * idf(t) where tf is the share
    of label c's positive-document tokens that are t, and
    idf(t) = ln(n_docs / df(t)) over the whole training corpus.
    """

    scores: dict[int, dict[int, float]]
    df: dict[int, int]
    n_docs: int

    def score(self, token_id: int, label: int) -> float:
        return self.scores.get(label, {}).get(token_id, 0.0)


def compute_tfidf(corpus: Corpus) -> TfidfTable:
    n_docs = len(corpus)
    df: Counter[int] = Counter()
    for doc in corpus.documents:
        df.update(set(doc.tokens))
    idf = {t: math.log(n_docs / d) for t, d in df.items()}

    scores: dict[int, dict[int, float]] = {}
    for c in range(corpus.n_labels):
        positives = [d for d in corpus.documents if c in d.labels]
        if not positives:
            scores[c] = {}
            continue
        counts: Counter[int] = Counter()
        total = 0
        for doc in positives:
            counts.update(doc.tokens)
            total += len(doc.tokens)
        scores[c] = {t: (n / total) * idf[t] for t, n in counts.items()}
    return TfidfTable(scores=scores, df=dict(df), n_docs=n_docs)


def informative_tokens(label: int, tfidf: TfidfTable, h: float) -> set[int]:
    """Token ids with tfidf(t, label) > h; reserved ids excluded."""
    if label not in tfidf.scores:
        raise InputError(f"label {label} has no TF-IDF row")
    return {
        t
        for t, s in tfidf.scores[label].items()
        if s > h and t >= N_RESERVED
    }


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Planted-truth corpus with a Zipf label skew.

    Each document mixes indicative tokens of its labels (a fixed share of
    positions, round-robin over the labels) with uniform noise tokens.
    Indicative token sets are disjoint across labels and from the noise
    vocabulary, so the planted truth is recoverable.
    """

    n_labels: int
    n_docs: int
    tokens_per_doc: int
    noise_vocab_size: int
    zipf_exponent: float = 1.2
    indicative_tokens_per_label: int = 8
    mean_labels_per_doc: float = 3.0
    indicative_rate: float = 0.3
    distractor_rate: float = 0.0
    indicative_vocab_size: int | None = None
    docs_per_patient: int = 1
    seed: int = 0

    def validate(self) -> None:
        counts = {
            "n_labels": self.n_labels,
            "n_docs": self.n_docs,
            "tokens_per_doc": self.tokens_per_doc,
            "noise_vocab_size": self.noise_vocab_size,
            "indicative_tokens_per_label": self.indicative_tokens_per_label,
            "docs_per_patient": self.docs_per_patient,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.mean_labels_per_doc <= 0 or self.zipf_exponent <= 0:
            raise ConfigError("mean_labels_per_doc and zipf_exponent must be positive")
        if not 0.0 < self.indicative_rate <= 1.0:
            raise ConfigError("indicative_rate must be in (0, 1]")
        if not 0.0 <= self.distractor_rate <= 1.0 - self.indicative_rate:
            raise ConfigError("distractor_rate must fit in the non-indicative share")
        needed = self.n_labels * self.indicative_tokens_per_label
        pool = self.indicative_vocab_size if self.indicative_vocab_size is not None else needed
        if needed > pool:
            raise ConfigError(
                f"need {needed} indicative tokens but the indicative vocabulary has {pool}"
            )

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, data: dict) -> "SyntheticSpec":
        return cls(**data)


def zipf_weights(n_labels: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n_labels + 1, dtype=np.float64)
    w = ranks ** (-exponent)
    return w / w.sum()


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, dict[str, list[str]]]:
    """Generate a corpus plus the planted per-label indicative token sets.

    Deterministic given ``spec.seed``: label counts are Poisson (clamped to
    at least one), labels are drawn without replacement by Zipf weight, and
    ``indicative_rate`` of the token positions carry indicative tokens of
    the document's labels, round-robin in label-id order. A nonzero
    ``distractor_rate`` fills that share of the remaining positions with
    singleton draws from the whole indicative pool, so an isolated
    indicative token stops implying its label; only the co-occurring
    mixture does.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    label_names = [f"L{k:03d}" for k in range(spec.n_labels)]
    pool_size = (
        spec.indicative_vocab_size
        if spec.indicative_vocab_size is not None
        else spec.n_labels * spec.indicative_tokens_per_label
    )
    pool = [f"ind{i:04d}" for i in range(pool_size)]
    order = rng.permutation(pool_size)
    truth: dict[str, list[str]] = {}
    offset = 0
    for name in label_names:
        picks = order[offset : offset + spec.indicative_tokens_per_label]
        truth[name] = sorted(pool[i] for i in picks)
        offset += spec.indicative_tokens_per_label

    noise = [f"nse{i:04d}" for i in range(spec.noise_vocab_size)]
    weights = zipf_weights(spec.n_labels, spec.zipf_exponent)
    n_indicative = int(round(spec.indicative_rate * spec.tokens_per_doc))

    records = []
    for i in range(spec.n_docs):
        n_lab = int(rng.poisson(spec.mean_labels_per_doc))
        n_lab = min(max(n_lab, 1), spec.n_labels)
        labels = np.sort(rng.choice(spec.n_labels, size=n_lab, replace=False, p=weights))

        tokens = [""] * spec.tokens_per_doc
        positions = np.sort(rng.choice(spec.tokens_per_doc, size=n_indicative, replace=False))
        # round-robin over the document's labels; within a label, cycle
        # through its indicative tokens so every positive document carries
        # the label's full token mixture
        cursors = {int(c): int(rng.integers(spec.indicative_tokens_per_label)) for c in labels}
        for slot, pos in enumerate(positions):
            c = int(labels[slot % len(labels)])
            options = truth[label_names[c]]
            tokens[pos] = options[cursors[c] % len(options)]
            cursors[c] += 1
        for pos in range(spec.tokens_per_doc):
            if not tokens[pos]:
                if spec.distractor_rate and rng.random() < spec.distractor_rate / (1.0 - spec.indicative_rate):
                    tokens[pos] = pool[rng.integers(pool_size)]
                else:
                    tokens[pos] = noise[rng.integers(spec.noise_vocab_size)]

        records.append(
            {
                "id": f"d{i:05d}",
                "patient_id": f"p{i // spec.docs_per_patient:05d}",
                "text": " ".join(tokens),
                "labels": [label_names[c] for c in labels],
            }
        )

    corpus = make_corpus(records, label_vocab=label_names)
    return corpus, truth


# ---------------------------------------------------------------------------
# Patient-disjoint splitting
# ---------------------------------------------------------------------------


def split(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Split by patient so a patient's documents stay together.

    Patient counts per split follow the ratios within one patient
    (largest-remainder apportionment of the shuffled patient list).
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    patients = sorted(corpus.patient_ids())
    n_splits = sum(1 for r in ratios if r > 0)
    if len(patients) < n_splits:
        raise ConfigError(f"{len(patients)} patients cannot fill {n_splits} splits")

    rng = np.random.default_rng(seed)
    rng.shuffle(patients)

    n = len(patients)
    quotas = [r * n for r in ratios]
    counts = [int(q) for q in quotas]
    remainders = sorted(range(3), key=lambda i: (quotas[i] - counts[i], -i), reverse=True)
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1

    assignments: dict[str, int] = {}
    start = 0
    for split_idx, count in enumerate(counts):
        for p in patients[start : start + count]:
            assignments[p] = split_idx
        start += count

    buckets: list[list[Document]] = [[], [], []]
    for doc in corpus.documents:
        buckets[assignments[doc.patient_id]].append(doc)

    return tuple(
        Corpus(documents=tuple(docs), label_vocab=corpus.label_vocab, vocab=corpus.vocab)
        for docs in buckets
    )
