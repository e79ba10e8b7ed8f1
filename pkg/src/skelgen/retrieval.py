"""Embedding store and in-context example selection.

Selection strategies mirror the three studied arms: seeded random,
input-embedding cosine top-k, and input-plus-skeleton-embedding cosine
top-k. Search is exact: at corpus sizes up to ~20k records a full scan
is instantaneous, so no ANN indexing.
"""

from __future__ import annotations

import hashlib
import logging
import random
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusSplit
from .errors import SkelgenError
from .model import SKELETON_MARKER, LabeledExample, TripleSubgraph, linearize_subgraph

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("random", "input_emb", "input_skeleton_emb")

DEFAULT_HASH_DIM = 256

_STORE_MAGIC = "skelstore v1"


class ZeroVectorError(SkelgenError):
    """A vector with zero norm has no direction to compare."""


class StoreMismatchError(SkelgenError):
    """Store was built under a different strategy or embedding provider."""


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise SkelgenError(f"strategy must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise SkelgenError("random strategy requires a seed")

    @classmethod
    def random(cls, seed: int) -> "SelectionStrategy":
        return cls("random", seed=seed)

    @classmethod
    def input_emb(cls) -> "SelectionStrategy":
        return cls("input_emb")

    @classmethod
    def input_skeleton_emb(cls) -> "SelectionStrategy":
        return cls("input_skeleton_emb")


def strategy_from_name(name: str, seed: int = 0) -> SelectionStrategy:
    if name == "random":
        return SelectionStrategy.random(seed)
    return SelectionStrategy(name)


@dataclass(frozen=True)
class EmbeddingRecord:
    example_id: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        vector = np.asarray(self.vector, dtype=np.float32)
        if vector.ndim != 1 or vector.size < 1:
            raise SkelgenError(f"record {self.example_id!r}: vector must be 1-D and non-empty")
        if not np.all(np.isfinite(vector)):
            raise SkelgenError(f"record {self.example_id!r}: vector contains non-finite values")
        object.__setattr__(self, "vector", vector)


class EmbeddingProvider(ABC):
    """Text-to-vector encoder; must be deterministic for a given text."""

    provider_id: str = "provider"

    @abstractmethod
    def embed(self, text: str) -> np.ndarray: ...

    @abstractmethod
    def dimension(self) -> int: ...


class HashingProvider(EmbeddingProvider):
    """Feature-hashed bag-of-tokens vectors.

    Dependency-free and stable across machines (keyed blake2b, not the
    salted builtin hash), so offline tests reproduce bit-for-bit.
    """

    def __init__(self, dim: int = DEFAULT_HASH_DIM):
        if dim < 1:
            raise SkelgenError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self.provider_id = f"hash{dim}"

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float32)
        for token in text.lower().split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16).digest()
            index = int.from_bytes(digest[:8], "little") % self.dim
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            vector[index] += sign
        return vector

    def dimension(self) -> int:
        return self.dim


class FileVectorProvider(EmbeddingProvider):
    """Precomputed vectors exported from any external encoder.

    The ``.npz`` file holds ``keys`` (sha256 hex digests of the embedded
    texts) and ``vectors`` (one row per key). Pooling choices stay with
    whoever exported the file.
    """

    def __init__(self, path: str | Path):
        path = Path(path)
        data = np.load(path, allow_pickle=False)
        if "keys" not in data or "vectors" not in data:
            raise SkelgenError(f"{path}: expected arrays 'keys' and 'vectors'")
        keys = [str(k) for k in data["keys"]]
        vectors = np.asarray(data["vectors"], dtype=np.float32)
        if vectors.ndim != 2 or len(keys) != vectors.shape[0]:
            raise SkelgenError(f"{path}: 'vectors' must be 2-D with one row per key")
        self._table = {key: vectors[i] for i, key in enumerate(keys)}
        self._dim = int(vectors.shape[1])
        self.provider_id = f"file-{path.stem}"

    @staticmethod
    def text_key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, text: str) -> np.ndarray:
        key = self.text_key(text)
        try:
            return self._table[key]
        except KeyError:
            raise SkelgenError(f"no precomputed vector for text (sha256 {key[:12]}...)") from None

    def dimension(self) -> int:
        return self._dim


class RemoteEmbeddingProvider(EmbeddingProvider):
    """OpenAI-compatible embeddings endpoint adapter; caches per text."""

    def __init__(self, model: str, base_url: str, api_key: str, timeout: float = 30.0, session=None):
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.provider_id = f"remote-{model}"
        self._headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self._cache: dict[str, np.ndarray] = {}
        self._dim: int | None = None
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def embed(self, text: str) -> np.ndarray:
        if text in self._cache:
            return self._cache[text]
        response = self._session.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model, "input": text},
            headers=self._headers,
            timeout=self.timeout,
        )
        if response.status_code != 200:
            raise SkelgenError(f"embedding request failed: HTTP {response.status_code}")
        vector = np.asarray(response.json()["data"][0]["embedding"], dtype=np.float32)
        self._cache[text] = vector
        self._dim = int(vector.size)
        return vector

    def dimension(self) -> int:
        if self._dim is None:
            raise SkelgenError("dimension unknown until the first embedding is fetched")
        return self._dim


def cosine_similarity(a, b) -> float:
    """dot(a, b) / (||a|| * ||b||), in [-1, 1] up to rounding."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise SkelgenError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(va, vb) / (norm_a * norm_b))


def top_k(query, records, k: int) -> list[str]:
    """Ids of the k records most cosine-similar to the query, best first;
    exact ties broken by ascending example id."""
    records = list(records)
    if k < 1:
        raise SkelgenError(f"k must be >= 1, got {k}")
    if k > len(records):
        raise SkelgenError(f"k={k} exceeds store size {len(records)}")
    q = np.asarray(query, dtype=np.float64)
    scored: list[tuple[float, str]] = []
    for record in records:
        vector = np.asarray(record.vector, dtype=np.float64)
        if vector.shape != q.shape:
            raise SkelgenError(f"dimension mismatch: query {q.shape} vs record {record.example_id!r} {vector.shape}")
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            logger.warning("skipping zero-norm record %r", record.example_id)
            continue
        scored.append((cosine_similarity(q, vector), record.example_id))
    if len(scored) < k:
        raise ZeroVectorError(f"only {len(scored)} usable records after skipping zero-norm vectors; need {k}")
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [example_id for _, example_id in scored[:k]]


def embedding_text(graph: TripleSubgraph, answer: str, skeleton: str | None, strategy: SelectionStrategy) -> str:
    """The exact text a record is embedded from under the given strategy."""
    base = linearize_subgraph(graph, answer)
    if strategy.kind == "input_skeleton_emb":
        if not skeleton:
            raise SkelgenError("input_skeleton_emb strategy needs a skeleton")
        return base + SKELETON_MARKER + skeleton
    return base


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable collection of embedding records plus build provenance."""

    dim: int
    strategy_kind: str
    provider_id: str
    records: tuple[EmbeddingRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        for record in self.records:
            if record.vector.size != self.dim:
                raise SkelgenError(
                    f"record {record.example_id!r} has dimension {record.vector.size}, store expects {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def save(self, path: str | Path) -> None:
        header = (
            f"{_STORE_MAGIC} dim={self.dim} n={len(self.records)} "
            f"strategy={self.strategy_kind} provider={self.provider_id}\n"
        )
        with open(path, "wb") as handle:
            handle.write(header.encode("utf-8"))
            for record in self.records:
                raw_id = record.example_id.encode("utf-8")
                handle.write(struct.pack("<I", len(raw_id)))
                handle.write(raw_id)
                handle.write(record.vector.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingStore":
        with open(path, "rb") as handle:
            header = handle.readline().decode("utf-8").rstrip("\n")
            fields = header.split()
            if fields[:2] != _STORE_MAGIC.split() or len(fields) != 6:
                raise SkelgenError(f"{path}: not a skelstore v1 file")
            meta = dict(part.split("=", 1) for part in fields[2:])
            dim, count = int(meta["dim"]), int(meta["n"])
            records = []
            for _ in range(count):
                (id_len,) = struct.unpack("<I", handle.read(4))
                example_id = handle.read(id_len).decode("utf-8")
                vector = np.frombuffer(handle.read(dim * 4), dtype="<f4").copy()
                records.append(EmbeddingRecord(example_id, vector))
            return cls(dim=dim, strategy_kind=meta["strategy"], provider_id=meta["provider"], records=tuple(records))


def build_store(
    corpus: CorpusSplit,
    provider: EmbeddingProvider,
    strategy: SelectionStrategy,
    path: str | Path | None = None,
    jobs: int = 1,
) -> EmbeddingStore:
    """Embed every corpus example under the strategy; optionally persist.

    ``jobs`` > 1 embeds on a bounded worker pool (useful for remote
    providers); record order follows corpus order either way.
    """
    if strategy.kind == "random":
        raise SkelgenError("random selection does not use an embedding store")
    texts = []
    for example in corpus:
        try:
            texts.append(embedding_text(example.graph, example.answer, example.skeleton, strategy))
        except SkelgenError as exc:
            raise SkelgenError(f"example {example.id!r}: {exc}") from exc
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vectors = list(pool.map(provider.embed, texts))
    else:
        vectors = [provider.embed(text) for text in texts]
    records = tuple(EmbeddingRecord(example.id, vector) for example, vector in zip(corpus, vectors))
    store = EmbeddingStore(
        dim=provider.dimension(),
        strategy_kind=strategy.kind,
        provider_id=provider.provider_id,
        records=records,
    )
    if path is not None:
        store.save(path)
    return store


def _derived_rng(seed: int, example_id: str) -> random.Random:
    digest = hashlib.blake2b(f"{seed}:{example_id}".encode("utf-8"), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def select_examples(
    test: LabeledExample,
    store: EmbeddingStore | None,
    corpus: CorpusSplit,
    strategy: SelectionStrategy,
    k: int,
    provider: EmbeddingProvider | None = None,
) -> list[LabeledExample]:
    """Pick k in-context examples for a test input, most similar first.

    The test example's own id is never returned. Embedding strategies
    require the store and the provider that built it; the query is
    embedded exactly the way the store was.
    """
    candidate_ids = [e.id for e in corpus if e.id != test.id]
    if k < 1 or k > len(candidate_ids):
        raise SkelgenError(f"k={k} out of range for corpus of {len(corpus)} (test id excluded)")
    if strategy.kind == "random":
        rng = _derived_rng(strategy.seed, test.id)
        chosen = rng.sample(candidate_ids, k)
        return [corpus.by_id(example_id) for example_id in chosen]
    if store is None or provider is None:
        raise SkelgenError(f"{strategy.kind} selection requires an embedding store and its provider")
    if store.strategy_kind != strategy.kind:
        raise StoreMismatchError(f"store built with {store.strategy_kind!r}, queried with {strategy.kind!r}")
    if store.provider_id != provider.provider_id:
        raise StoreMismatchError(f"store embedded by {store.provider_id!r}, query by {provider.provider_id!r}")
    query = provider.embed(embedding_text(test.graph, test.answer, test.skeleton, strategy))
    usable = [record for record in store.records if record.example_id != test.id]
    chosen = top_k(query, usable, k)
    return [corpus.by_id(example_id) for example_id in chosen]
